// HNSW: hierarchical navigable small-world graph. Static build (no delete),
// insertion in storage order with seeded level draws, neighbor selection by
// the pruning heuristic with pruned candidates kept to fill spare slots.

#include <algorithm>
#include <cmath>
#include <cstring>

#include "index_internal.hpp"

namespace vgb {

namespace {

using DistNode = std::pair<float, std::uint32_t>;

// ascending (distance, node)
inline bool dn_less(const DistNode& a, const DistNode& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
}
inline bool dn_greater(const DistNode& a, const DistNode& b) {
    return dn_less(b, a);
}

// O(1) reset between searches via epoch stamps
struct VisitedTable {
    std::vector<std::uint32_t> stamp;
    std::uint32_t epoch = 0;

    explicit VisitedTable(std::size_t n) : stamp(n, 0) {}

    void next() { ++epoch; }
    bool test_and_set(std::uint32_t node) {
        if (stamp[node] == epoch) return true;
        stamp[node] = epoch;
        return false;
    }
};

inline float node_dist(const IndexHnsw& g, std::span<const float> q,
                       std::uint32_t node) {
    return sq_l2_f32(q.data(), g.vectors.row(node), g.dim);
}

// greedy hill descent within one layer; returns the local minimum
std::uint32_t greedy_closest(const IndexHnsw& g, std::span<const float> q,
                             std::uint32_t ep, std::size_t layer) {
    float dcur = node_dist(g, q, ep);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::uint32_t nb : g.links[ep][layer]) {
            const float d = node_dist(g, q, nb);
            if (d < dcur || (d == dcur && nb < ep)) {
                dcur = d;
                ep = nb;
                changed = true;
            }
        }
    }
    return ep;
}

// best-first expansion bounded by ef; returns up to ef nearest reachable
// nodes, ascending (distance, node)
std::vector<DistNode> search_layer(const IndexHnsw& g, std::span<const float> q,
                                   std::uint32_t ep, std::size_t ef,
                                   std::size_t layer, VisitedTable& visited) {
    visited.next();
    visited.test_and_set(ep);

    std::vector<DistNode> cand;     // min-heap
    std::vector<DistNode> results;  // max-heap, size <= ef
    const float d0 = node_dist(g, q, ep);
    cand.push_back({d0, ep});
    results.push_back({d0, ep});

    while (!cand.empty()) {
        std::pop_heap(cand.begin(), cand.end(), dn_greater);
        const DistNode cur = cand.back();
        cand.pop_back();
        if (results.size() == ef && cur.first > results.front().first) break;

        for (std::uint32_t nb : g.links[cur.second][layer]) {
            if (visited.test_and_set(nb)) continue;
            const float d = node_dist(g, q, nb);
            if (results.size() < ef || d < results.front().first ||
                (d == results.front().first &&
                 nb < results.front().second)) {
                cand.push_back({d, nb});
                std::push_heap(cand.begin(), cand.end(), dn_greater);
                results.push_back({d, nb});
                std::push_heap(results.begin(), results.end(), dn_less);
                if (results.size() > ef) {
                    std::pop_heap(results.begin(), results.end(), dn_less);
                    results.pop_back();
                }
            }
        }
    }
    std::sort_heap(results.begin(), results.end(), dn_less);
    return results;
}

// pruning heuristic: a candidate is kept only when no already selected
// neighbor is closer to it than the base point; pruned candidates refill
// leftover slots in ascending order
std::vector<std::uint32_t> select_neighbors(const IndexHnsw& g,
                                            const std::vector<DistNode>& cand,
                                            std::size_t m) {
    std::vector<std::uint32_t> selected;
    std::vector<std::uint32_t> pruned;
    selected.reserve(m);
    for (const DistNode& e : cand) {
        if (selected.size() >= m) break;
        bool keep = true;
        for (std::uint32_t r : selected) {
            const float d_er =
                sq_l2_f32(g.vectors.row(e.second), g.vectors.row(r), g.dim);
            if (d_er < e.first) {
                keep = false;
                break;
            }
        }
        if (keep)
            selected.push_back(e.second);
        else
            pruned.push_back(e.second);
    }
    for (std::size_t i = 0; selected.size() < m && i < pruned.size(); ++i)
        selected.push_back(pruned[i]);
    return selected;
}

// re-run the heuristic on an overfull adjacency list
void shrink_links(IndexHnsw& g, std::uint32_t node, std::size_t layer) {
    auto& lst = g.links[node][layer];
    const std::size_t cap = g.max_links(layer);
    if (lst.size() <= cap) return;
    std::vector<DistNode> cand;
    cand.reserve(lst.size());
    for (std::uint32_t nb : lst)
        cand.push_back(
            {sq_l2_f32(g.vectors.row(node), g.vectors.row(nb), g.dim), nb});
    std::sort(cand.begin(), cand.end(), dn_less);
    lst = select_neighbors(g, cand, cap);
}

void insert_node(IndexHnsw& g, std::uint32_t i, std::size_t level,
                 VisitedTable& visited) {
    const auto q = g.vectors.row_span(i);
    g.links[i].assign(level + 1, {});
    g.levels[i] = static_cast<std::uint32_t>(level);

    if (g.entry_point < 0) {
        g.entry_point = i;
        g.max_level = static_cast<int>(level);
        return;
    }

    std::uint32_t ep = static_cast<std::uint32_t>(g.entry_point);
    for (std::size_t lc = static_cast<std::size_t>(g.max_level); lc > level;
         --lc)
        ep = greedy_closest(g, q, ep, lc);

    const std::size_t top =
        std::min(level, static_cast<std::size_t>(g.max_level));
    for (std::size_t lc = top + 1; lc-- > 0;) {
        const auto w = search_layer(g, q, ep, g.cfg.ef_construction, lc,
                                    visited);
        g.links[i][lc] = select_neighbors(g, w, g.cfg.m_links);
        for (std::uint32_t nb : g.links[i][lc]) {
            g.links[nb][lc].push_back(i);
            shrink_links(g, nb, lc);
        }
        ep = w.front().second;
    }

    if (static_cast<int>(level) > g.max_level) {
        g.max_level = static_cast<int>(level);
        g.entry_point = i;
    }
}

}  // namespace

SearchResult IndexHnsw::search_one(std::span<const float> q, std::size_t k,
                                   const SearchParams& params) const {
    detail::check_query(q, dim, k);
    std::size_t ef = params.ef_search.value_or(cfg.ef_search);
    if (ef < 1)
        throw_error(ErrorCode::invalid_parameter,
                    "search: ef_search must be >= 1");
    ef = std::max(ef, k);

    std::uint32_t ep = static_cast<std::uint32_t>(entry_point);
    for (std::size_t lc = static_cast<std::size_t>(max_level); lc > 0; --lc)
        ep = greedy_closest(*this, q, ep, lc);

    VisitedTable visited(n);
    const auto w = search_layer(*this, q, ep, ef, 0, visited);

    // candidates are (distance, node); ranking ties break on external id
    std::vector<Hit> hits;
    hits.reserve(w.size());
    for (const DistNode& dn : w) hits.push_back(Hit{ids[dn.second], dn.first});
    std::sort(hits.begin(), hits.end(), detail::hit_less);
    if (hits.size() > k) hits.resize(k);

    SearchResult r;
    r.k_requested = k;
    r.hits = std::move(hits);
    return r;
}

FootprintBreakdown IndexHnsw::memory_breakdown() const {
    FootprintBreakdown b;
    b.vectors = static_cast<std::uint64_t>(n) * dim * 4;
    b.ids = static_cast<std::uint64_t>(n) * 8;
    std::uint64_t slots = 0;
    for (const auto& per_node : links)
        for (const auto& lst : per_node) slots += lst.size();
    b.links = slots * 4;
    b.tables = static_cast<std::uint64_t>(n) * 4;  // level table
    return b;
}

void IndexHnsw::save_sections(Container& c) const {
    c.sections.push_back(Section::from_u64("ids", n, 1, ids));
    c.sections.push_back(Section::from_f32(
        "vecs", n, static_cast<std::uint32_t>(dim), vectors.data));

    std::vector<std::uint64_t> lvl(levels.begin(), levels.end());
    c.sections.push_back(Section::from_u64("levels", n, 1, lvl));

    const std::vector<std::uint64_t> hmeta = {
        static_cast<std::uint64_t>(entry_point + 1),
        static_cast<std::uint64_t>(max_level + 1)};
    c.sections.push_back(Section::from_u64("hmeta", 1, 2, hmeta));

    // adjacency, node-major then layer-major
    std::vector<std::uint64_t> counts;
    std::vector<std::uint64_t> flat;
    for (const auto& per_node : links)
        for (const auto& lst : per_node) {
            counts.push_back(lst.size());
            for (std::uint32_t nb : lst) flat.push_back(nb);
        }
    c.sections.push_back(Section::from_u64("lnkcnt", counts.size(), 1, counts));
    c.sections.push_back(Section::from_u64("lnkdat", flat.size(), 1, flat));
}

namespace detail {

std::unique_ptr<Index> build_hnsw(const DescriptorSet& set,
                                  const IndexConfig& cfg) {
    auto idx = std::make_unique<IndexHnsw>();
    idx->cfg = cfg;
    idx->dim = set.dim();
    idx->n = set.size();
    idx->ids = set.ids;
    idx->vectors = set.matrix;
    idx->levels.assign(idx->n, 0);
    idx->links.resize(idx->n);

    const double mult = 1.0 / std::log(static_cast<double>(cfg.m_links));
    Rng rng(derive_seed(cfg.seed, 21));
    VisitedTable visited(idx->n);
    for (std::uint32_t i = 0; i < idx->n; ++i) {
        const double u = 1.0 - rng.next_double();  // (0, 1]
        const std::size_t level =
            static_cast<std::size_t>(std::floor(-std::log(u) * mult));
        insert_node(*idx, i, level, visited);
    }
    return idx;
}

std::unique_ptr<Index> load_hnsw(const Container& c, const IndexConfig& cfg,
                                 std::size_t dim, std::size_t n) {
    auto idx = std::make_unique<IndexHnsw>();
    idx->cfg = cfg;
    idx->dim = dim;
    idx->n = n;

    const auto ids = c.require("ids").as_u64();
    idx->ids.assign(ids.begin(), ids.end());
    const auto vecs = c.require("vecs").as_f32();
    idx->vectors = MatrixF(n, dim);
    std::copy(vecs.begin(), vecs.end(), idx->vectors.data.begin());

    const auto lvl = c.require("levels").as_u64();
    idx->levels.assign(lvl.begin(), lvl.end());

    const auto hmeta = c.require("hmeta").as_u64();
    if (hmeta.size() != 2)
        throw_error(ErrorCode::format, "load_index: bad hmeta");
    idx->entry_point = static_cast<std::int64_t>(hmeta[0]) - 1;
    idx->max_level = static_cast<int>(hmeta[1]) - 1;

    const auto counts = c.require("lnkcnt").as_u64();
    const auto flat = c.require("lnkdat").as_u64();
    idx->links.resize(n);
    std::size_t ci = 0, fi = 0;
    for (std::size_t node = 0; node < n; ++node) {
        idx->links[node].resize(idx->levels[node] + 1);
        for (auto& lst : idx->links[node]) {
            if (ci >= counts.size())
                throw_error(ErrorCode::format, "load_index: truncated lnkcnt");
            const std::size_t cnt = counts[ci++];
            if (fi + cnt > flat.size())
                throw_error(ErrorCode::format, "load_index: truncated lnkdat");
            lst.resize(cnt);
            for (std::size_t j = 0; j < cnt; ++j)
                lst[j] = static_cast<std::uint32_t>(flat[fi++]);
        }
    }
    if (ci != counts.size() || fi != flat.size())
        throw_error(ErrorCode::format, "load_index: adjacency size mismatch");
    return idx;
}

}  // namespace detail

}  // namespace vgb
