#include "vgbench/index.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <limits>

#include "index_internal.hpp"

namespace vgb {

const char* index_kind_name(IndexKind k) {
    switch (k) {
        case IndexKind::flat: return "flat";
        case IndexKind::ivf: return "ivf";
        case IndexKind::pq: return "pq";
        case IndexKind::ivfpq: return "ivfpq";
        case IndexKind::multiindex: return "multiindex";
        case IndexKind::hnsw: return "hnsw";
    }
    return "?";
}

IndexKind index_kind_from_name(const std::string& name) {
    if (name == "flat") return IndexKind::flat;
    if (name == "ivf") return IndexKind::ivf;
    if (name == "pq") return IndexKind::pq;
    if (name == "ivfpq") return IndexKind::ivfpq;
    if (name == "multiindex") return IndexKind::multiindex;
    if (name == "hnsw") return IndexKind::hnsw;
    throw_error(ErrorCode::invalid_parameter,
                "unknown index kind \"" + name + "\"");
}

void IndexConfig::validate(std::size_t dim) const {
    if (dim < 1)
        throw_error(ErrorCode::invalid_parameter, "index: dim must be >= 1");
    if (train_iters < 1)
        throw_error(ErrorCode::invalid_parameter,
                    "index: train_iters must be >= 1");
    if (kind == IndexKind::ivf || kind == IndexKind::ivfpq) {
        if (nlist < 1)
            throw_error(ErrorCode::invalid_parameter,
                        "index: nlist must be >= 1");
        if (nprobe < 1 || nprobe > nlist)
            throw_error(ErrorCode::invalid_parameter,
                        "index: need 1 <= nprobe <= nlist (nprobe=" +
                            std::to_string(nprobe) + ", nlist=" +
                            std::to_string(nlist) + ")");
    }
    if (kind == IndexKind::pq || kind == IndexKind::ivfpq) {
        if (nbits != 4 && nbits != 8)
            throw_error(ErrorCode::invalid_parameter,
                        "index: nbits must be 4 or 8");
        if (m_sub < 1 || dim % m_sub != 0)
            throw_error(ErrorCode::invalid_parameter,
                        "index: m_sub must divide dim (m_sub=" +
                            std::to_string(m_sub) + ", dim=" +
                            std::to_string(dim) + ")");
        if ((m_sub * nbits) % 8 != 0)
            throw_error(ErrorCode::invalid_parameter,
                        "index: nbits=4 requires even m_sub");
    }
    if (kind == IndexKind::multiindex) {
        if (k_half < 2)
            throw_error(ErrorCode::invalid_parameter,
                        "index: K_half must be >= 2");
        if (dim % 2 != 0)
            throw_error(ErrorCode::invalid_parameter,
                        "index: multiindex needs even dim");
    }
    if (kind == IndexKind::hnsw) {
        if (m_links < 2)
            throw_error(ErrorCode::invalid_parameter,
                        "index: M_links must be >= 2");
        if (ef_construction < 1 || ef_search < 1)
            throw_error(ErrorCode::invalid_parameter,
                        "index: ef_construction and ef_search must be >= 1");
    }
}

FootprintBreakdown planned_footprint(const IndexConfig& cfg, std::uint64_t n,
                                     std::size_t dim) {
    cfg.validate(dim);
    FootprintBreakdown b;
    b.ids = n * 8;
    switch (cfg.kind) {
        case IndexKind::flat:
            b.vectors = n * dim * 4;
            break;
        case IndexKind::ivf:
            b.vectors = n * dim * 4;
            b.centroids = std::uint64_t(cfg.nlist) * dim * 4;
            b.tables = (cfg.nlist + 1) * 8;
            break;
        case IndexKind::pq:
            b.codes = n * cfg.code_bytes();
            b.centroids = std::uint64_t(cfg.ksub()) * dim * 4;
            break;
        case IndexKind::ivfpq:
            b.codes = n * cfg.code_bytes();
            b.centroids = std::uint64_t(cfg.nlist) * dim * 4 +
                          std::uint64_t(cfg.ksub()) * dim * 4;
            b.tables = (cfg.nlist + 1) * 8;
            break;
        case IndexKind::multiindex:
            b.vectors = n * dim * 4;
            b.centroids = std::uint64_t(cfg.k_half) * dim * 4;
            b.tables =
                (std::uint64_t(cfg.k_half) * cfg.k_half + 1) * 8;
            break;
        case IndexKind::hnsw:
            throw_error(ErrorCode::invalid_parameter,
                        "planned_footprint: hnsw link storage depends on the "
                        "constructed graph");
    }
    return b;
}

namespace detail {

void check_query(std::span<const float> q, std::size_t dim, std::size_t k) {
    if (q.size() != dim)
        throw_error(ErrorCode::dimension_mismatch,
                    "search: query dim " + std::to_string(q.size()) +
                        " != index dim " + std::to_string(dim));
    if (k < 1)
        throw_error(ErrorCode::invalid_parameter, "search: k must be >= 1");
}

}  // namespace detail

using detail::TopK;

std::vector<SearchResult> Index::search(const DescriptorSet& queries,
                                        std::size_t k,
                                        const SearchParams& params) const {
    std::vector<SearchResult> results;
    results.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        SearchResult r = search_one(queries.matrix.row_span(i), k, params);
        r.query_id = queries.ids[i];
        results.push_back(std::move(r));
    }
    return results;
}

std::vector<SearchResult> Index::search_timed(const DescriptorSet& queries,
                                              std::size_t k,
                                              TimingReport& timing,
                                              const SearchParams& params) const {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<SearchResult> results = search(queries, k, params);
    const auto t1 = std::chrono::steady_clock::now();
    timing.t_m_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    timing.memory_bytes = memory_footprint();
    return results;
}

/***************************************************
 * Flat
 ***************************************************/

SearchResult IndexFlat::search_one(std::span<const float> q, std::size_t k,
                                   const SearchParams&) const {
    detail::check_query(q, dim, k);
    TopK top(k);
    for (std::size_t i = 0; i < n; ++i)
        top.offer(ids[i], sq_l2_f32(q.data(), vectors.row(i), dim));
    SearchResult r;
    r.k_requested = k;
    r.hits = top.finish();
    return r;
}

FootprintBreakdown IndexFlat::memory_breakdown() const {
    return planned_footprint(cfg, n, dim);
}

void IndexFlat::save_sections(Container& c) const {
    c.sections.push_back(Section::from_u64("ids", n, 1, ids));
    c.sections.push_back(Section::from_f32(
        "vecs", n, static_cast<std::uint32_t>(dim), vectors.data));
}

namespace {

std::unique_ptr<Index> build_flat(const DescriptorSet& set,
                                  const IndexConfig& cfg) {
    auto idx = std::make_unique<IndexFlat>();
    idx->cfg = cfg;
    idx->dim = set.dim();
    idx->n = set.size();
    idx->ids = set.ids;
    idx->vectors = set.matrix;
    return idx;
}

// Counting sort of rows into their assigned list; returns grouped order.
void group_by_list(const std::vector<std::uint32_t>& assign, std::size_t nlist,
                   std::vector<std::uint64_t>& offsets,
                   std::vector<std::size_t>& order) {
    const std::size_t n = assign.size();
    offsets.assign(nlist + 1, 0);
    for (std::uint32_t a : assign) offsets[a + 1]++;
    for (std::size_t l = 0; l < nlist; ++l) offsets[l + 1] += offsets[l];
    order.resize(n);
    std::vector<std::uint64_t> cursor(offsets.begin(), offsets.end() - 1);
    for (std::size_t i = 0; i < n; ++i) order[cursor[assign[i]]++] = i;
}

std::vector<std::uint32_t> assign_all(const MatrixF& data,
                                      const MatrixF& centroids) {
    std::vector<std::uint32_t> assign(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i)
        assign[i] = static_cast<std::uint32_t>(
            nearest_centroid(centroids, data.row_span(i)));
    return assign;
}

// The nprobe coarse cells nearest to q, ascending (distance, index).
std::vector<std::uint32_t> probe_order(const MatrixF& coarse,
                                       std::span<const float> q,
                                       std::size_t nprobe) {
    struct Cd {
        float d;
        std::uint32_t idx;
    };
    std::vector<Cd> cd(coarse.rows);
    for (std::size_t l = 0; l < coarse.rows; ++l)
        cd[l] = {sq_l2_f32(q.data(), coarse.row(l), coarse.cols),
                 static_cast<std::uint32_t>(l)};
    const auto less = [](const Cd& a, const Cd& b) {
        if (a.d != b.d) return a.d < b.d;
        return a.idx < b.idx;
    };
    std::partial_sort(cd.begin(), cd.begin() + std::ptrdiff_t(nprobe), cd.end(),
                      less);
    std::vector<std::uint32_t> out(nprobe);
    for (std::size_t i = 0; i < nprobe; ++i) out[i] = cd[i].idx;
    return out;
}

std::size_t effective_nprobe(const IndexConfig& cfg,
                             const SearchParams& params) {
    const std::size_t nprobe = params.nprobe.value_or(cfg.nprobe);
    if (nprobe < 1 || nprobe > cfg.nlist)
        throw_error(ErrorCode::invalid_parameter,
                    "search: need 1 <= nprobe <= nlist (nprobe=" +
                        std::to_string(nprobe) + ")");
    return nprobe;
}

void require_train_points(std::size_t n, std::size_t k, const char* what) {
    if (n < k)
        throw_error(ErrorCode::insufficient_data,
                    std::string("build: ") + what + " needs at least " +
                        std::to_string(k) + " vectors, got " +
                        std::to_string(n));
}

}  // namespace

/***************************************************
 * IVF
 ***************************************************/

SearchResult IndexIvf::search_one(std::span<const float> q, std::size_t k,
                                  const SearchParams& params) const {
    detail::check_query(q, dim, k);
    const std::size_t nprobe = effective_nprobe(cfg, params);
    TopK top(k);
    for (std::uint32_t l : probe_order(coarse, q, nprobe)) {
        for (std::uint64_t i = offsets[l]; i < offsets[l + 1]; ++i)
            top.offer(list_ids[i],
                      sq_l2_f32(q.data(), list_vectors.row(i), dim));
    }
    SearchResult r;
    r.k_requested = k;
    r.hits = top.finish();
    return r;
}

FootprintBreakdown IndexIvf::memory_breakdown() const {
    return planned_footprint(cfg, n, dim);
}

void IndexIvf::save_sections(Container& c) const {
    c.sections.push_back(Section::from_f32(
        "coarse", cfg.nlist, static_cast<std::uint32_t>(dim), coarse.data));
    c.sections.push_back(Section::from_u64("offs", offsets.size(), 1, offsets));
    c.sections.push_back(Section::from_u64("ids", n, 1, list_ids));
    c.sections.push_back(Section::from_f32(
        "vecs", n, static_cast<std::uint32_t>(dim), list_vectors.data));
}

namespace {

std::unique_ptr<Index> build_ivf(const DescriptorSet& set,
                                 const IndexConfig& cfg) {
    require_train_points(set.size(), cfg.nlist, "ivf coarse quantizer");
    auto idx = std::make_unique<IndexIvf>();
    idx->cfg = cfg;
    idx->dim = set.dim();
    idx->n = set.size();

    idx->coarse = kmeans(set.matrix, cfg.nlist, derive_seed(cfg.seed, 1),
                         cfg.train_iters)
                      .centroids;
    const auto assign = assign_all(set.matrix, idx->coarse);
    std::vector<std::size_t> order;
    group_by_list(assign, cfg.nlist, idx->offsets, order);

    idx->list_ids.resize(idx->n);
    idx->list_vectors = MatrixF(idx->n, idx->dim);
    for (std::size_t pos = 0; pos < idx->n; ++pos) {
        idx->list_ids[pos] = set.ids[order[pos]];
        std::memcpy(idx->list_vectors.row(pos), set.matrix.row(order[pos]),
                    idx->dim * sizeof(float));
    }
    return idx;
}

/***************************************************
 * PQ code packing
 ***************************************************/

inline void put_code(std::uint8_t* code, std::size_t s, std::size_t nbits,
                     std::uint32_t v) {
    if (nbits == 8) {
        code[s] = static_cast<std::uint8_t>(v);
    } else {
        std::uint8_t& b = code[s / 2];
        if (s % 2 == 0)
            b = static_cast<std::uint8_t>((b & 0xF0u) | v);
        else
            b = static_cast<std::uint8_t>((b & 0x0Fu) | (v << 4));
    }
}

inline std::uint32_t get_code(const std::uint8_t* code, std::size_t s,
                              std::size_t nbits) {
    if (nbits == 8) return code[s];
    const std::uint8_t b = code[s / 2];
    return (s % 2 == 0) ? (b & 0x0Fu) : (b >> 4);
}

// Codebooks for every subspace, stacked: rows [s*ksub, (s+1)*ksub) hold the
// ksub centroids of subspace s. Trains on the given (possibly residual) data.
MatrixF train_pq_codebooks(const MatrixF& data, const IndexConfig& cfg) {
    const std::size_t dsub = data.cols / cfg.m_sub;
    const std::size_t ksub = cfg.ksub();
    require_train_points(data.rows, ksub, "pq subspace quantizer");

    MatrixF codebooks(cfg.m_sub * ksub, dsub);
    MatrixF sub(data.rows, dsub);
    for (std::size_t s = 0; s < cfg.m_sub; ++s) {
        for (std::size_t i = 0; i < data.rows; ++i)
            std::memcpy(sub.row(i), data.row(i) + s * dsub,
                        dsub * sizeof(float));
        Codebook cb = kmeans(sub, ksub, derive_seed(cfg.seed, 100 + s),
                             cfg.train_iters);
        std::memcpy(codebooks.row(s * ksub), cb.centroids.data.data(),
                    ksub * dsub * sizeof(float));
    }
    return codebooks;
}

// Nearest centroid of subspace s to the dsub-dim slice v.
std::uint32_t encode_sub(const MatrixF& codebooks, std::size_t s,
                         std::size_t ksub, const float* v, std::size_t dsub) {
    std::uint32_t best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < ksub; ++j) {
        const float d = sq_l2_f32(v, codebooks.row(s * ksub + j), dsub);
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::uint32_t>(j);
        }
    }
    return best;
}

void encode_vector(const MatrixF& codebooks, const IndexConfig& cfg,
                   std::size_t dsub, const float* v, std::uint8_t* code) {
    std::memset(code, 0, cfg.code_bytes());
    for (std::size_t s = 0; s < cfg.m_sub; ++s)
        put_code(code, s, cfg.nbits,
                 encode_sub(codebooks, s, cfg.ksub(), v + s * dsub, dsub));
}

}  // namespace

/***************************************************
 * PQ
 ***************************************************/

void IndexPq::build_lut(std::span<const float> q,
                        std::vector<float>& lut) const {
    const std::size_t ksub = cfg.ksub();
    const std::size_t ds = dsub();
    lut.resize(cfg.m_sub * ksub);
    for (std::size_t s = 0; s < cfg.m_sub; ++s)
        for (std::size_t j = 0; j < ksub; ++j)
            lut[s * ksub + j] =
                sq_l2_f32(q.data() + s * ds, codebooks.row(s * ksub + j), ds);
}

float IndexPq::adc_distance(const std::uint8_t* code,
                            const std::vector<float>& lut) const {
    const std::size_t ksub = cfg.ksub();
    float acc = 0.0f;
    for (std::size_t s = 0; s < cfg.m_sub; ++s)
        acc += lut[s * ksub + get_code(code, s, cfg.nbits)];
    return acc;
}

SearchResult IndexPq::search_one(std::span<const float> q, std::size_t k,
                                 const SearchParams&) const {
    detail::check_query(q, dim, k);
    std::vector<float> lut;
    build_lut(q, lut);
    const std::size_t cb = cfg.code_bytes();
    TopK top(k);
    for (std::size_t i = 0; i < n; ++i)
        top.offer(ids[i], adc_distance(codes.data() + i * cb, lut));
    SearchResult r;
    r.k_requested = k;
    r.hits = top.finish();
    return r;
}

FootprintBreakdown IndexPq::memory_breakdown() const {
    return planned_footprint(cfg, n, dim);
}

void IndexPq::save_sections(Container& c) const {
    c.sections.push_back(Section::from_u64("ids", n, 1, ids));
    c.sections.push_back(Section::from_f32(
        "pqcent", codebooks.rows, static_cast<std::uint32_t>(codebooks.cols),
        codebooks.data));
    c.sections.push_back(Section::from_u8(
        "codes", n, static_cast<std::uint32_t>(cfg.code_bytes()), codes));
}

namespace {

std::unique_ptr<Index> build_pq(const DescriptorSet& set,
                                const IndexConfig& cfg) {
    auto idx = std::make_unique<IndexPq>();
    idx->cfg = cfg;
    idx->dim = set.dim();
    idx->n = set.size();
    idx->ids = set.ids;
    idx->codebooks = train_pq_codebooks(set.matrix, cfg);

    const std::size_t dsub = idx->dsub();
    const std::size_t cb = cfg.code_bytes();
    idx->codes.assign(idx->n * cb, 0);
    for (std::size_t i = 0; i < idx->n; ++i)
        encode_vector(idx->codebooks, cfg, dsub, set.matrix.row(i),
                      idx->codes.data() + i * cb);
    return idx;
}

}  // namespace

/***************************************************
 * IVFPQ
 ***************************************************/

SearchResult IndexIvfPq::search_one(std::span<const float> q, std::size_t k,
                                    const SearchParams& params) const {
    detail::check_query(q, dim, k);
    const std::size_t nprobe = effective_nprobe(cfg, params);
    const std::size_t ksub = cfg.ksub();
    const std::size_t ds = dsub();
    const std::size_t cb = cfg.code_bytes();

    std::vector<float> residual(dim);
    std::vector<float> lut(cfg.m_sub * ksub);
    TopK top(k);
    for (std::uint32_t l : probe_order(coarse, q, nprobe)) {
        const float* cl = coarse.row(l);
        for (std::size_t j = 0; j < dim; ++j) residual[j] = q[j] - cl[j];
        for (std::size_t s = 0; s < cfg.m_sub; ++s)
            for (std::size_t j = 0; j < ksub; ++j)
                lut[s * ksub + j] = sq_l2_f32(
                    residual.data() + s * ds, codebooks.row(s * ksub + j), ds);

        for (std::uint64_t i = offsets[l]; i < offsets[l + 1]; ++i) {
            const std::uint8_t* code = list_codes.data() + i * cb;
            float acc = 0.0f;
            for (std::size_t s = 0; s < cfg.m_sub; ++s)
                acc += lut[s * ksub + get_code(code, s, cfg.nbits)];
            top.offer(list_ids[i], acc);
        }
    }
    SearchResult r;
    r.k_requested = k;
    r.hits = top.finish();
    return r;
}

FootprintBreakdown IndexIvfPq::memory_breakdown() const {
    return planned_footprint(cfg, n, dim);
}

void IndexIvfPq::save_sections(Container& c) const {
    c.sections.push_back(Section::from_f32(
        "coarse", cfg.nlist, static_cast<std::uint32_t>(dim), coarse.data));
    c.sections.push_back(Section::from_f32(
        "pqcent", codebooks.rows, static_cast<std::uint32_t>(codebooks.cols),
        codebooks.data));
    c.sections.push_back(Section::from_u64("offs", offsets.size(), 1, offsets));
    c.sections.push_back(Section::from_u64("ids", n, 1, list_ids));
    c.sections.push_back(Section::from_u8(
        "codes", n, static_cast<std::uint32_t>(cfg.code_bytes()), list_codes));
}

namespace {

std::unique_ptr<Index> build_ivfpq(const DescriptorSet& set,
                                   const IndexConfig& cfg) {
    require_train_points(set.size(), cfg.nlist, "ivfpq coarse quantizer");
    auto idx = std::make_unique<IndexIvfPq>();
    idx->cfg = cfg;
    idx->dim = set.dim();
    idx->n = set.size();

    idx->coarse = kmeans(set.matrix, cfg.nlist, derive_seed(cfg.seed, 1),
                         cfg.train_iters)
                      .centroids;
    const auto assign = assign_all(set.matrix, idx->coarse);

    // PQ lives in residual space: r = v - coarse[assign]
    MatrixF residuals(idx->n, idx->dim);
    for (std::size_t i = 0; i < idx->n; ++i) {
        const float* v = set.matrix.row(i);
        const float* cl = idx->coarse.row(assign[i]);
        float* r = residuals.row(i);
        for (std::size_t j = 0; j < idx->dim; ++j) r[j] = v[j] - cl[j];
    }
    idx->codebooks = train_pq_codebooks(residuals, cfg);

    std::vector<std::size_t> order;
    group_by_list(assign, cfg.nlist, idx->offsets, order);

    const std::size_t dsub = idx->dsub();
    const std::size_t cb = cfg.code_bytes();
    idx->list_ids.resize(idx->n);
    idx->list_codes.assign(idx->n * cb, 0);
    for (std::size_t pos = 0; pos < idx->n; ++pos) {
        const std::size_t i = order[pos];
        idx->list_ids[pos] = set.ids[i];
        encode_vector(idx->codebooks, cfg, dsub, residuals.row(i),
                      idx->list_codes.data() + pos * cb);
    }
    return idx;
}

}  // namespace

/***************************************************
 * Inverted multi-index
 ***************************************************/

SearchResult IndexMulti::search_one(std::span<const float> q, std::size_t k,
                                    const SearchParams&) const {
    return search_traced(q, k, nullptr);
}

SearchResult IndexMulti::search_traced(std::span<const float> q, std::size_t k,
                                       MultiIndexTrace* trace) const {
    detail::check_query(q, dim, k);
    const std::size_t kh = cfg.k_half;
    const std::size_t half = dim / 2;

    // half-distances sorted ascending, ties toward the lower centroid index
    struct Hd {
        float d;
        std::uint32_t idx;
    };
    const auto less = [](const Hd& a, const Hd& b) {
        if (a.d != b.d) return a.d < b.d;
        return a.idx < b.idx;
    };
    std::vector<Hd> d1(kh), d2(kh);
    for (std::size_t i = 0; i < kh; ++i) {
        d1[i] = {sq_l2_f32(q.data(), half1.row(i), half),
                 static_cast<std::uint32_t>(i)};
        d2[i] = {sq_l2_f32(q.data() + half, half2.row(i), half),
                 static_cast<std::uint32_t>(i)};
    }
    std::sort(d1.begin(), d1.end(), less);
    std::sort(d2.begin(), d2.end(), less);

    // multi-sequence traversal over sorted positions (i, j); the heap pops
    // cells in non-decreasing d1[i]+d2[j] order because both axes ascend
    struct Node {
        float sum;
        std::uint32_t i;
        std::uint32_t j;
    };
    const auto node_greater = [](const Node& a, const Node& b) {
        if (a.sum != b.sum) return a.sum > b.sum;
        if (a.i != b.i) return a.i > b.i;
        return a.j > b.j;
    };
    std::vector<Node> heap;
    std::vector<std::uint8_t> queued(kh * kh, 0);
    heap.push_back({d1[0].d + d2[0].d, 0, 0});
    queued[0] = 1;

    const std::size_t cap = candidate_cap(k);
    std::vector<std::uint64_t> cand;  // grouped-row indices
    cand.reserve(cap + kh);

    while (!heap.empty() && cand.size() < cap) {
        std::pop_heap(heap.begin(), heap.end(), node_greater);
        const Node nd = heap.back();
        heap.pop_back();

        const std::size_t c1 = d1[nd.i].idx;
        const std::size_t c2 = d2[nd.j].idx;
        const std::size_t cell = c1 * kh + c2;
        if (trace)
            trace->visits.push_back(
                {c1, c2, nd.sum,
                 static_cast<std::size_t>(offsets[cell + 1] - offsets[cell])});
        for (std::uint64_t i = offsets[cell]; i < offsets[cell + 1]; ++i)
            cand.push_back(i);

        if (nd.i + 1 < kh && !queued[(nd.i + 1) * kh + nd.j]) {
            queued[(nd.i + 1) * kh + nd.j] = 1;
            heap.push_back({d1[nd.i + 1].d + d2[nd.j].d, nd.i + 1, nd.j});
            std::push_heap(heap.begin(), heap.end(), node_greater);
        }
        if (nd.j + 1 < kh && !queued[nd.i * kh + nd.j + 1]) {
            queued[nd.i * kh + nd.j + 1] = 1;
            heap.push_back({d1[nd.i].d + d2[nd.j + 1].d, nd.i, nd.j + 1});
            std::push_heap(heap.begin(), heap.end(), node_greater);
        }
    }

    // exact re-scoring of the gathered candidates
    TopK top(k);
    for (std::uint64_t i : cand)
        top.offer(list_ids[i], sq_l2_f32(q.data(), list_vectors.row(i), dim));
    SearchResult r;
    r.k_requested = k;
    r.hits = top.finish();
    return r;
}

FootprintBreakdown IndexMulti::memory_breakdown() const {
    return planned_footprint(cfg, n, dim);
}

void IndexMulti::save_sections(Container& c) const {
    c.sections.push_back(Section::from_f32(
        "half1", cfg.k_half, static_cast<std::uint32_t>(dim / 2), half1.data));
    c.sections.push_back(Section::from_f32(
        "half2", cfg.k_half, static_cast<std::uint32_t>(dim / 2), half2.data));
    c.sections.push_back(Section::from_u64("offs", offsets.size(), 1, offsets));
    c.sections.push_back(Section::from_u64("ids", n, 1, list_ids));
    c.sections.push_back(Section::from_f32(
        "vecs", n, static_cast<std::uint32_t>(dim), list_vectors.data));
}

namespace {

std::unique_ptr<Index> build_multi(const DescriptorSet& set,
                                   const IndexConfig& cfg) {
    require_train_points(set.size(), cfg.k_half, "multi-index quantizer");
    auto idx = std::make_unique<IndexMulti>();
    idx->cfg = cfg;
    idx->dim = set.dim();
    idx->n = set.size();
    const std::size_t half = idx->dim / 2;
    const std::size_t kh = cfg.k_half;

    MatrixF sub(idx->n, half);
    for (std::size_t i = 0; i < idx->n; ++i)
        std::memcpy(sub.row(i), set.matrix.row(i), half * sizeof(float));
    idx->half1 =
        kmeans(sub, kh, derive_seed(cfg.seed, 11), cfg.train_iters).centroids;
    for (std::size_t i = 0; i < idx->n; ++i)
        std::memcpy(sub.row(i), set.matrix.row(i) + half, half * sizeof(float));
    idx->half2 =
        kmeans(sub, kh, derive_seed(cfg.seed, 12), cfg.train_iters).centroids;

    std::vector<std::uint32_t> assign(idx->n);
    for (std::size_t i = 0; i < idx->n; ++i) {
        const float* v = set.matrix.row(i);
        const std::size_t c1 = nearest_centroid(idx->half1, {v, half});
        const std::size_t c2 = nearest_centroid(idx->half2, {v + half, half});
        assign[i] = static_cast<std::uint32_t>(c1 * kh + c2);
    }
    std::vector<std::size_t> order;
    group_by_list(assign, kh * kh, idx->offsets, order);

    idx->list_ids.resize(idx->n);
    idx->list_vectors = MatrixF(idx->n, idx->dim);
    for (std::size_t pos = 0; pos < idx->n; ++pos) {
        idx->list_ids[pos] = set.ids[order[pos]];
        std::memcpy(idx->list_vectors.row(pos), set.matrix.row(order[pos]),
                    idx->dim * sizeof(float));
    }
    return idx;
}

}  // namespace

/***************************************************
 * Factory, serialization, recall
 ***************************************************/

std::unique_ptr<Index> build_index(const DescriptorSet& set,
                                   const IndexConfig& cfg) {
    set.check_consistent();
    if (set.size() == 0)
        throw_error(ErrorCode::insufficient_data, "build: empty set");
    if (!set.matrix.all_finite())
        throw_error(ErrorCode::invalid_input, "build: non-finite vectors");
    cfg.validate(set.dim());

    switch (cfg.kind) {
        case IndexKind::flat: return build_flat(set, cfg);
        case IndexKind::ivf: return build_ivf(set, cfg);
        case IndexKind::pq: return build_pq(set, cfg);
        case IndexKind::ivfpq: return build_ivfpq(set, cfg);
        case IndexKind::multiindex: return build_multi(set, cfg);
        case IndexKind::hnsw: return detail::build_hnsw(set, cfg);
    }
    throw_error(ErrorCode::invalid_parameter, "build: unknown kind");
}

namespace {

constexpr std::uint64_t kMetaRev = 1;

std::vector<std::uint64_t> pack_meta(const Index& index) {
    const IndexConfig& cfg = index.cfg;
    return {kMetaRev,
            static_cast<std::uint64_t>(cfg.kind),
            index.dim,
            index.n,
            cfg.nlist,
            cfg.nprobe,
            cfg.m_sub,
            cfg.nbits,
            cfg.k_half,
            cfg.m_links,
            cfg.ef_construction,
            cfg.ef_search,
            cfg.seed,
            cfg.train_iters};
}

MatrixF section_matrix(const Section& s) {
    MatrixF m(static_cast<std::size_t>(s.rows), s.cols);
    const auto data = s.as_f32();
    std::copy(data.begin(), data.end(), m.data.begin());
    return m;
}

std::vector<std::uint64_t> section_u64(const Section& s) {
    const auto data = s.as_u64();
    return {data.begin(), data.end()};
}

}  // namespace

void save_index(const std::string& path, const Index& index) {
    Container c;
    const auto meta = pack_meta(index);
    c.sections.push_back(Section::from_u64(
        "ixmeta", 1, static_cast<std::uint32_t>(meta.size()), meta));
    index.save_sections(c);
    write_vgbd(path, c);
}

std::unique_ptr<Index> load_index(const std::string& path) {
    const Container c = read_vgbd(path);
    const auto meta = section_u64(c.require("ixmeta"));
    if (meta.size() < 14 || meta[0] != kMetaRev)
        throw_error(ErrorCode::format, "load_index: unsupported ixmeta");

    IndexConfig cfg;
    if (meta[1] > static_cast<std::uint64_t>(IndexKind::hnsw))
        throw_error(ErrorCode::format, "load_index: unknown index kind");
    cfg.kind = static_cast<IndexKind>(meta[1]);
    const std::size_t dim = meta[2];
    const std::size_t n = meta[3];
    cfg.nlist = meta[4];
    cfg.nprobe = meta[5];
    cfg.m_sub = meta[6];
    cfg.nbits = meta[7];
    cfg.k_half = meta[8];
    cfg.m_links = meta[9];
    cfg.ef_construction = meta[10];
    cfg.ef_search = meta[11];
    cfg.seed = meta[12];
    cfg.train_iters = meta[13];
    cfg.validate(dim);

    switch (cfg.kind) {
        case IndexKind::flat: {
            auto idx = std::make_unique<IndexFlat>();
            idx->cfg = cfg;
            idx->dim = dim;
            idx->n = n;
            idx->ids = section_u64(c.require("ids"));
            idx->vectors = section_matrix(c.require("vecs"));
            return idx;
        }
        case IndexKind::ivf: {
            auto idx = std::make_unique<IndexIvf>();
            idx->cfg = cfg;
            idx->dim = dim;
            idx->n = n;
            idx->coarse = section_matrix(c.require("coarse"));
            idx->offsets = section_u64(c.require("offs"));
            idx->list_ids = section_u64(c.require("ids"));
            idx->list_vectors = section_matrix(c.require("vecs"));
            return idx;
        }
        case IndexKind::pq: {
            auto idx = std::make_unique<IndexPq>();
            idx->cfg = cfg;
            idx->dim = dim;
            idx->n = n;
            idx->ids = section_u64(c.require("ids"));
            idx->codebooks = section_matrix(c.require("pqcent"));
            const auto codes = c.require("codes").as_u8();
            idx->codes.assign(codes.begin(), codes.end());
            return idx;
        }
        case IndexKind::ivfpq: {
            auto idx = std::make_unique<IndexIvfPq>();
            idx->cfg = cfg;
            idx->dim = dim;
            idx->n = n;
            idx->coarse = section_matrix(c.require("coarse"));
            idx->codebooks = section_matrix(c.require("pqcent"));
            idx->offsets = section_u64(c.require("offs"));
            idx->list_ids = section_u64(c.require("ids"));
            const auto codes = c.require("codes").as_u8();
            idx->list_codes.assign(codes.begin(), codes.end());
            return idx;
        }
        case IndexKind::multiindex: {
            auto idx = std::make_unique<IndexMulti>();
            idx->cfg = cfg;
            idx->dim = dim;
            idx->n = n;
            idx->half1 = section_matrix(c.require("half1"));
            idx->half2 = section_matrix(c.require("half2"));
            idx->offsets = section_u64(c.require("offs"));
            idx->list_ids = section_u64(c.require("ids"));
            idx->list_vectors = section_matrix(c.require("vecs"));
            return idx;
        }
        case IndexKind::hnsw: return detail::load_hnsw(c, cfg, dim, n);
    }
    throw_error(ErrorCode::format, "load_index: unknown kind");
}

double recall_vs_exact(const Index& index, const DescriptorSet& base,
                       const DescriptorSet& queries, std::size_t k,
                       const SearchParams& params) {
    if (base.dim() != index.dim || queries.dim() != index.dim)
        throw_error(ErrorCode::dimension_mismatch,
                    "recall_vs_exact: dim mismatch");
    if (queries.size() == 0)
        throw_error(ErrorCode::insufficient_data, "recall_vs_exact: no queries");

    std::size_t found = 0;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const auto q = queries.matrix.row_span(qi);

        // brute-force exact top-1, independent of any index structure
        std::uint64_t exact_id = base.ids[0];
        float exact_d = std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < base.size(); ++i) {
            const float d = sq_l2_f32(q.data(), base.matrix.row(i), base.dim());
            if (d < exact_d || (d == exact_d && base.ids[i] < exact_id)) {
                exact_d = d;
                exact_id = base.ids[i];
            }
        }

        const SearchResult r = index.search_one(q, k, params);
        for (const Hit& h : r.hits)
            if (h.id == exact_id) {
                found++;
                break;
            }
    }
    return static_cast<double>(found) / static_cast<double>(queries.size());
}

}  // namespace vgb
