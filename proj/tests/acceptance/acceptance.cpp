// Release acceptance checks. Each criterion prints one PASS/FAIL line and
// the process exits nonzero if any fails. argv[1] names the CLI binary,
// exercised by the determinism criterion.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vgbench/aggregation.hpp"
#include "vgbench/common.hpp"
#include "vgbench/dataio.hpp"
#include "vgbench/geoeval.hpp"
#include "vgbench/index.hpp"
#include "vgbench/mining.hpp"
#include "vgbench/numerics.hpp"
#include "vgbench/querypipe.hpp"

namespace fs = std::filesystem;
using njson = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli;
std::string g_work;
std::vector<std::string> g_notes;

void expect(bool cond, const std::string& what) {
    if (!cond) g_notes.push_back(what);
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

vgb::DescriptorSet random_set(std::size_t n, std::size_t dim,
                              std::uint64_t seed,
                              std::uint64_t id_base = 0) {
    vgb::DescriptorSet set;
    set.matrix = vgb::MatrixF(n, dim);
    vgb::Rng rng(seed);
    for (float& v : set.matrix.data) v = static_cast<float>(rng.gaussian());
    set.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) set.ids[i] = id_base + i;
    return set;
}

// Well-separated clusters with small intra-cluster noise, round-robin.
vgb::DescriptorSet clustered_set(std::size_t n, std::size_t dim,
                                 std::size_t n_centers, std::uint64_t seed,
                                 std::uint64_t id_base = 0) {
    vgb::Rng rng(seed);
    vgb::MatrixF centers(n_centers, dim);
    for (float& v : centers.data) v = static_cast<float>(rng.gaussian() * 10.0);
    vgb::DescriptorSet set;
    set.matrix = vgb::MatrixF(n, dim);
    set.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float* c = centers.row(i % n_centers);
        float* row = set.matrix.row(i);
        for (std::size_t d = 0; d < dim; ++d)
            row[d] = c[d] + static_cast<float>(rng.gaussian() * 0.1);
        set.ids[i] = id_base + i;
    }
    return set;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

double timed_search_ms(vgb::Index& index, const vgb::DescriptorSet& queries,
                       std::size_t k, int runs) {
    vgb::TimingReport warm;
    index.search_timed(queries, k, warm);
    std::vector<double> times;
    for (int r = 0; r < runs; ++r) {
        vgb::TimingReport t;
        index.search_timed(queries, k, t);
        times.push_back(t.t_m_ms);
    }
    return std::max(median_of(times), 1e-3);
}

bool same_ids(const std::vector<vgb::SearchResult>& a,
              const std::vector<vgb::SearchResult>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].hits.size() != b[i].hits.size()) return false;
        for (std::size_t j = 0; j < a[i].hits.size(); ++j)
            if (a[i].hits[j].id != b[i].hits[j].id) return false;
    }
    return true;
}

bool same_hits(const std::vector<vgb::SearchResult>& a,
               const std::vector<vgb::SearchResult>& b) {
    if (!same_ids(a, b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].hits.size(); ++j)
            if (a[i].hits[j].sq_distance != b[i].hits[j].sq_distance)
                return false;
    return true;
}

vgb::GeoPose north_of(const vgb::GeoPose& p, double meters) {
    const double dlat = meters / vgb::kEarthRadiusM * 180.0 / M_PI;
    return {p.lat_deg + dlat, p.lon_deg, std::nullopt};
}

vgb::GeoPose east_of(const vgb::GeoPose& p, double meters) {
    const double dlon = meters /
                        (vgb::kEarthRadiusM *
                         std::cos(p.lat_deg * M_PI / 180.0)) *
                        180.0 / M_PI;
    return {p.lat_deg, p.lon_deg + dlon, std::nullopt};
}

/***************************************************
 * 1. Product quantization shrinks per-vector storage by exactly 64x for
 *    128-dim float vectors at m_sub=8, nbits=8.
 ***************************************************/
bool c01_pq_memory_factor() {
    vgb::IndexConfig cfg;
    cfg.kind = vgb::IndexKind::pq;
    cfg.m_sub = 8;
    cfg.nbits = 8;
    const std::uint64_t raw = 128 * 4;
    expect(cfg.code_bytes() == 8, "pq code must be 8 bytes");
    expect(raw % cfg.code_bytes() == 0 && raw / cfg.code_bytes() == 64,
           "per-vector ratio must be exactly 64");

    const vgb::FootprintBreakdown fp = vgb::planned_footprint(cfg, 1000, 128);
    vgb::IndexConfig flat;
    const vgb::FootprintBreakdown ff = vgb::planned_footprint(flat, 1000, 128);
    expect(fp.codes == 1000 * 8, "planned code bytes");
    expect(ff.vectors == 1000 * 512, "planned raw bytes");
    expect(ff.vectors / fp.codes == 64, "planned ratio must be exactly 64");
    return g_notes.empty();
}

/***************************************************
 * 2. Footprint arithmetic stays analytic: 1.05M vectors of dim 65536 cost
 *    n*dim*4 bytes without any allocation.
 ***************************************************/
bool c02_footprint_arithmetic() {
    vgb::IndexConfig cfg;
    const std::uint64_t n = 1050000;
    const std::size_t dim = 65536;
    const vgb::FootprintBreakdown fp = vgb::planned_footprint(cfg, n, dim);
    expect(fp.vectors == n * std::uint64_t(dim) * 4,
           "vectors must be n*dim*4 = 275251200000");
    expect(fp.vectors == 275251200000ull, "expected 275251200000 bytes");
    expect(fp.total() == fp.vectors + fp.ids, "flat stores vectors and ids");
    return g_notes.empty();
}

/***************************************************
 * 3. Flat matching time scales linearly with database size: the 10k -> 20k
 *    ratio of median times stays within [1.6, 2.6].
 ***************************************************/
bool c03_matching_time_linearity() {
    const vgb::DescriptorSet big = random_set(20000, 256, 31);
    vgb::DescriptorSet small;
    small.ids.assign(big.ids.begin(), big.ids.begin() + 10000);
    small.matrix = vgb::MatrixF(10000, 256);
    std::copy(big.matrix.data.begin(),
              big.matrix.data.begin() + 10000 * 256,
              small.matrix.data.begin());
    const vgb::DescriptorSet queries = random_set(100, 256, 32, 1000000);

    vgb::IndexConfig cfg;
    const auto idx_small = vgb::build_index(small, cfg);
    const auto idx_big = vgb::build_index(big, cfg);
    const double t_small = timed_search_ms(*idx_small, queries, 10, 5);
    const double t_big = timed_search_ms(*idx_big, queries, 10, 5);
    const double ratio = t_big / t_small;
    expect(ratio >= 1.6 && ratio <= 2.6,
           "time ratio " + std::to_string(ratio) + " outside [1.6, 2.6]");
    return g_notes.empty();
}

/***************************************************
 * 4. IVF trades a bounded recall drop for a large speedup: on 50k
 *    clustered vectors with nlist=256, nprobe=4 it is at least 5x faster
 *    than flat while keeping recall@1 vs exact at 0.90 or better.
 ***************************************************/
bool c04_ivf_speed_recall_trade() {
    const vgb::DescriptorSet db = clustered_set(50000, 128, 256, 41);
    vgb::DescriptorSet queries = clustered_set(100, 128, 256, 41, 1000000);

    vgb::IndexConfig flat_cfg;
    const auto flat = vgb::build_index(db, flat_cfg);

    vgb::IndexConfig ivf_cfg;
    ivf_cfg.kind = vgb::IndexKind::ivf;
    ivf_cfg.nlist = 256;
    ivf_cfg.nprobe = 4;
    ivf_cfg.seed = 5;
    ivf_cfg.train_iters = 8;
    const auto ivf = vgb::build_index(db, ivf_cfg);

    const double t_flat = timed_search_ms(*flat, queries, 10, 3);
    const double t_ivf = timed_search_ms(*ivf, queries, 10, 3);
    const double speedup = t_flat / t_ivf;
    const double r1 = vgb::recall_vs_exact(*ivf, db, queries, 1);
    expect(speedup >= 5.0,
           "speedup " + std::to_string(speedup) + " below 5x");
    expect(r1 >= 0.90, "recall@1 vs exact " + std::to_string(r1) +
                           " below 0.90");
    return g_notes.empty();
}

/***************************************************
 * 5. Exactness equivalences: exhaustive-probe IVF, saturated-beam HNSW and
 *    a losslessly codable PQ database all reproduce flat rankings.
 ***************************************************/
bool c05_exactness_equivalences() {
    const vgb::DescriptorSet db = random_set(1000, 64, 51);
    const vgb::DescriptorSet queries = random_set(50, 64, 52, 1000000);

    vgb::IndexConfig flat_cfg;
    const auto flat = vgb::build_index(db, flat_cfg);
    const std::vector<vgb::SearchResult> ref = flat->search(queries, 10);

    vgb::IndexConfig ivf_cfg;
    ivf_cfg.kind = vgb::IndexKind::ivf;
    ivf_cfg.nlist = 16;
    ivf_cfg.nprobe = 16;
    ivf_cfg.seed = 5;
    const auto ivf = vgb::build_index(db, ivf_cfg);
    expect(same_hits(ref, ivf->search(queries, 10)),
           "ivf with nprobe=nlist must equal flat");

    vgb::IndexConfig hnsw_cfg;
    hnsw_cfg.kind = vgb::IndexKind::hnsw;
    hnsw_cfg.m_links = 16;
    hnsw_cfg.ef_construction = 100;
    hnsw_cfg.ef_search = 1000;  // beam covers the whole database
    hnsw_cfg.seed = 9;
    const auto hnsw = vgb::build_index(db, hnsw_cfg);
    expect(same_hits(ref, hnsw->search(queries, 10)),
           "hnsw with ef_search >= n must equal flat");

    // every subspace slice drawn from a 16-word vocabulary: k-means recovers
    // the vocabulary exactly, so ADC ranks like flat
    const std::size_t m_sub = 4, ksub = 16, sub = 64 / m_sub;
    vgb::Rng rng(53);
    std::vector<std::vector<float>> vocab(m_sub * ksub,
                                          std::vector<float>(sub));
    for (auto& word : vocab)
        for (float& v : word) v = static_cast<float>(rng.gaussian());
    vgb::DescriptorSet coded;
    coded.matrix = vgb::MatrixF(1000, 64);
    coded.ids.resize(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        coded.ids[i] = i;
        for (std::size_t s = 0; s < m_sub; ++s) {
            const auto& word = vocab[s * ksub + rng.bounded(ksub)];
            std::copy(word.begin(), word.end(),
                      coded.matrix.row(i) + s * sub);
        }
    }
    const auto coded_flat = vgb::build_index(coded, flat_cfg);
    vgb::IndexConfig pq_cfg;
    pq_cfg.kind = vgb::IndexKind::pq;
    pq_cfg.m_sub = m_sub;
    pq_cfg.nbits = 4;
    pq_cfg.seed = 5;
    const auto pq = vgb::build_index(coded, pq_cfg);
    expect(same_ids(coded_flat->search(queries, 10), pq->search(queries, 10)),
           "lossless pq must rank like flat");
    return g_notes.empty();
}

/***************************************************
 * 6. Convolutional cost scales with the squared resize ratio; 0.16 and
 *    0.64 are hit exactly up to one unit in the last place of the decimal
 *    literals.
 ***************************************************/
bool c06_flops_storage_scaling() {
    expect(vgb::flops_scale(0.4) == 0.4 * 0.4, "must equal 0.4^2 exactly");
    expect(std::fabs(vgb::flops_scale(0.4) - 0.16) <= 1e-15,
           "0.4 -> 0.16 beyond 1e-15");
    expect(vgb::flops_scale(0.8) == 0.8 * 0.8, "must equal 0.8^2 exactly");
    expect(std::fabs(vgb::flops_scale(0.8) - 0.64) <= 1e-15,
           "0.8 -> 0.64 beyond 1e-15");
    expect(vgb::flops_scale(1.0) == 1.0, "identity ratio");
    return g_notes.empty();
}

/***************************************************
 * 7. Aggregation identities over 200 randomized shapes: gem(1) matches
 *    spoc, gem(1000) approaches mac on maps in [0.5, 2], netvlad yields a
 *    unit-norm K*C descriptor, and every pool ignores spatial order.
 ***************************************************/
bool c07_aggregation_identities() {
    vgb::Rng rng(71);
    for (int t = 0; t < 200 && g_notes.size() < 4; ++t) {
        const std::size_t c = 1 + rng.bounded(24);
        const std::size_t h = 1 + rng.bounded(9);
        const std::size_t w = 1 + rng.bounded(9);

        vgb::FeatureMap pos(c, h, w);
        for (float& v : pos.data)
            v = static_cast<float>(0.5 + 1.5 * rng.next_double());

        const vgb::Descriptor g1 = vgb::gem(pos, 1.0);
        const vgb::Descriptor sp = vgb::spoc(pos);
        for (std::size_t i = 0; i < c; ++i)
            expect(std::fabs(g1.values[i] - sp.values[i]) <= 1e-6,
                   "gem(p=1) differs from spoc");

        const vgb::Descriptor ghuge = vgb::gem(pos, 1000.0);
        const vgb::Descriptor mx = vgb::mac(pos);
        for (std::size_t i = 0; i < c; ++i)
            expect(std::fabs(ghuge.values[i] - mx.values[i]) <= 1e-2,
                   "gem(p=1000) strays from mac");

        vgb::FeatureMap fm(c, h, w);
        for (float& v : fm.data) v = static_cast<float>(rng.gaussian());

        const std::size_t k = 2 + rng.bounded(6);
        const vgb::VladParams params =
            vgb::VladParams::seeded_random(k, c, 1000 + t);
        const vgb::Descriptor nv = vgb::netvlad(fm, params);
        expect(nv.dim() == k * c, "netvlad dim must be K*C");
        double norm = 0.0;
        for (float v : nv.values) norm += double(v) * v;
        expect(std::fabs(std::sqrt(norm) - 1.0) <= 1e-5,
               "netvlad output must be unit norm");

        // permute spatial positions consistently across channels
        std::vector<std::size_t> perm(h * w);
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        for (std::size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[rng.bounded(i)]);
        vgb::FeatureMap shuffled(c, h, w);
        vgb::FeatureMap shuffled_pos(c, h, w);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < perm.size(); ++p) {
                shuffled.data[ch * perm.size() + p] =
                    fm.data[ch * perm.size() + perm[p]];
                shuffled_pos.data[ch * perm.size() + p] =
                    pos.data[ch * perm.size() + perm[p]];
            }
        const vgb::Descriptor sp2 = vgb::spoc(shuffled_pos);
        const vgb::Descriptor g2 = vgb::gem(shuffled_pos);
        const vgb::Descriptor m2 = vgb::mac(shuffled_pos);
        const vgb::Descriptor gref = vgb::gem(pos);
        const vgb::Descriptor nv2 = vgb::netvlad(shuffled, params);
        for (std::size_t i = 0; i < c; ++i) {
            expect(std::fabs(sp2.values[i] - sp.values[i]) <= 1e-6,
                   "spoc must ignore spatial order");
            expect(std::fabs(g2.values[i] - gref.values[i]) <= 1e-6,
                   "gem must ignore spatial order");
            expect(m2.values[i] == mx.values[i],
                   "mac must ignore spatial order");
        }
        for (std::size_t i = 0; i < nv.dim(); ++i)
            expect(std::fabs(nv2.values[i] - nv.values[i]) <= 1e-5,
                   "netvlad must ignore spatial order");
    }
    return g_notes.empty();
}

/***************************************************
 * 8. Mining hardness ordering on a confusable synthetic set: exhaustive
 *    mining finds negatives at least as hard as a 1000-item partial scan,
 *    which beats random picks; a full-size partial scan equals full.
 ***************************************************/
bool c08_mining_ordering() {
    vgb::SynthSpec spec;
    spec.n_db = 10000;
    spec.n_q = 500;
    spec.dim = 32;
    spec.n_places = 200;
    spec.confusion_rate = 0.2;
    spec.seed = 13;
    const vgb::SynthDataset ds = vgb::synth_generate(spec);
    const vgb::PoseTable db_poses =
        vgb::PoseTable::from_manifest(ds.manifest, vgb::Split::database);
    const vgb::PoseTable q_poses =
        vgb::PoseTable::from_manifest(ds.manifest, vgb::Split::query);

    std::unordered_map<std::uint64_t, std::size_t> db_row;
    for (std::size_t i = 0; i < ds.db.size(); ++i) db_row[ds.db.ids[i]] = i;
    std::unordered_map<std::uint64_t, std::size_t> q_row;
    for (std::size_t i = 0; i < ds.queries.size(); ++i)
        q_row[ds.queries.ids[i]] = i;

    const auto mean_hardest = [&](const vgb::MiningOutcome& out) {
        double sum = 0.0;
        for (const vgb::Triplet& t : out.triplets) {
            const float* q = ds.queries.matrix.row(q_row.at(t.query_id));
            float best = std::numeric_limits<float>::max();
            for (std::uint64_t nid : t.negative_ids)
                best = std::min(best,
                                vgb::sq_l2_f32(q,
                                               ds.db.matrix.row(db_row.at(nid)),
                                               ds.db.dim()));
            sum += best;
        }
        return sum / double(out.triplets.size());
    };

    vgb::MiningConfig cfg;
    cfg.n_neg = 10;
    cfg.seed = 13;

    cfg.strategy = vgb::MiningStrategy::full;
    const vgb::MiningOutcome full =
        vgb::mine_all(ds.queries, q_poses, ds.db, db_poses, cfg);
    expect(full.triplets.size() > 100, "too few mined triplets");

    cfg.strategy = vgb::MiningStrategy::partial;
    cfg.partial_sample = 1000;
    const vgb::MiningOutcome partial =
        vgb::mine_all(ds.queries, q_poses, ds.db, db_poses, cfg);

    cfg.strategy = vgb::MiningStrategy::random;
    const vgb::MiningOutcome random_out =
        vgb::mine_all(ds.queries, q_poses, ds.db, db_poses, cfg);

    const double m_full = mean_hardest(full);
    const double m_partial = mean_hardest(partial);
    const double m_random = mean_hardest(random_out);
    expect(m_full <= m_partial,
           "full must be at least as hard as partial");
    expect(m_partial <= m_random, "partial must be harder than random");

    cfg.strategy = vgb::MiningStrategy::partial;
    cfg.partial_sample = spec.n_db;
    const vgb::MiningOutcome whole =
        vgb::mine_all(ds.queries, q_poses, ds.db, db_poses, cfg);
    bool equal = whole.triplets.size() == full.triplets.size();
    for (std::size_t i = 0; equal && i < full.triplets.size(); ++i)
        equal = whole.triplets[i].query_id == full.triplets[i].query_id &&
                whole.triplets[i].positive_id == full.triplets[i].positive_id &&
                whole.triplets[i].negative_ids == full.triplets[i].negative_ids;
    expect(equal, "partial over the whole database must equal full");
    return g_notes.empty();
}

/***************************************************
 * 9. Evaluation metrics: recall is monotone in N and threshold, a heading
 *    gate never raises it, and a planted 88% positive coverage is reported
 *    as the upper bound within one percent.
 ***************************************************/
bool c09_evaluation_metrics() {
    vgb::SynthSpec spec;
    spec.n_db = 2000;
    spec.n_q = 200;
    spec.dim = 32;
    spec.n_places = 100;
    spec.confusion_rate = 0.1;
    spec.seed = 17;
    const vgb::SynthDataset ds = vgb::synth_generate(spec);
    const vgb::PoseTable db_poses =
        vgb::PoseTable::from_manifest(ds.manifest, vgb::Split::database);
    const vgb::PoseTable q_poses =
        vgb::PoseTable::from_manifest(ds.manifest, vgb::Split::query);

    vgb::IndexConfig flat_cfg;
    const auto flat = vgb::build_index(ds.db, flat_cfg);
    const std::vector<vgb::SearchResult> results =
        flat->search(ds.queries, 20);

    vgb::EvalConfig ecfg;
    ecfg.n_list = {1, 2, 5, 10, 20};
    const vgb::EvalReport rep =
        vgb::recall_at_n(results, q_poses, db_poses, ecfg);
    double prev = 0.0;
    for (const auto& [n, r] : rep.recall_at) {
        expect(r >= prev, "recall must be monotone in N");
        expect(r <= rep.upper_bound + 1e-12, "recall above upper bound");
        prev = r;
    }

    const std::vector<double> thresholds = {5, 10, 25, 50, 100, 200};
    const std::vector<vgb::SweepPoint> sweep =
        vgb::threshold_sweep(results, q_poses, db_poses, thresholds);
    for (std::size_t i = 1; i < sweep.size(); ++i) {
        expect(sweep[i].recall >= sweep[i - 1].recall,
               "recall must be monotone in threshold");
        expect(sweep[i].upper_bound >= sweep[i - 1].upper_bound,
               "upper bound must be monotone in threshold");
    }

    vgb::EvalConfig hcfg = ecfg;
    hcfg.heading_max_deg = 45.0;
    const vgb::EvalReport hrep =
        vgb::recall_at_n(results, q_poses, db_poses, hcfg);
    for (const auto& [n, r] : hrep.recall_at)
        expect(r <= rep.recall_at.at(n) + 1e-12,
               "heading gate must not raise recall");
    expect(hrep.upper_bound <= rep.upper_bound + 1e-12,
           "heading gate must not raise the upper bound");

    // planted coverage: 22 of every 25 queries get a positive within 5 m
    const vgb::GeoPose base{45.0, 7.0, std::nullopt};
    vgb::PoseTable planted_q, planted_db;
    std::vector<vgb::SearchResult> planted_results;
    const std::size_t n_q = 2000;
    for (std::size_t i = 0; i < n_q; ++i) {
        const vgb::GeoPose q = north_of(base, 30.0 * double(i));
        const bool covered = (i % 25) < 22;
        const vgb::GeoPose item = east_of(q, covered ? 3.0 : 60.0);
        planted_q.add(i, q);
        planted_db.add(100000 + i, item);
        vgb::SearchResult r;
        r.query_id = i;
        r.k_requested = 1;
        r.hits.push_back({100000 + i, 0.25f});
        planted_results.push_back(r);
    }
    vgb::EvalConfig pcfg;
    pcfg.threshold_m = 5.0;
    pcfg.n_list = {1};
    const vgb::EvalReport prep =
        vgb::recall_at_n(planted_results, planted_q, planted_db, pcfg);
    expect(std::fabs(prep.upper_bound - 0.88) <= 0.01,
           "planted coverage upper bound " +
               std::to_string(prep.upper_bound) + " not within 0.88 +- 0.01");
    expect(std::fabs(prep.recall_at.at(1) - 0.88) <= 0.01,
           "planted recall@1 must track the planted coverage");
    return g_notes.empty();
}

/***************************************************
 * 10. When query dimensions already match the database, the three
 *     single-crop policies are pixel-identical and retrieve identically;
 *     nearest-crop fusion lower-bounds every per-crop distance.
 ***************************************************/
bool c10_preprocessing_equivalence() {
    vgb::Rng rng(101);
    const auto random_image = [&](std::size_t h, std::size_t w,
                                  std::size_t c) {
        vgb::Image img;
        img.height = h;
        img.width = w;
        img.channels = c;
        img.pixels.resize(h * w * c);
        for (float& p : img.pixels)
            p = static_cast<float>(rng.next_double() + 0.1);
        return img;
    };

    std::vector<vgb::Image> db_imgs;
    vgb::DescriptorSet db;
    db.matrix = vgb::MatrixF(30, 4);
    for (std::size_t i = 0; i < 30; ++i) {
        db_imgs.push_back(random_image(32, 48, 4));
        const vgb::Descriptor d =
            vgb::gem(vgb::feature_map_from_image(db_imgs.back()));
        std::copy(d.values.begin(), d.values.end(), db.matrix.row(i));
        db.ids.push_back(i);
    }
    vgb::IndexConfig flat_cfg;
    const auto flat = vgb::build_index(db, flat_cfg);

    const vgb::Image& q = db_imgs[7];
    std::vector<vgb::SearchResult> per_policy;
    for (const vgb::CropPolicy policy :
         {vgb::CropPolicy::hard_resize, vgb::CropPolicy::single_query,
          vgb::CropPolicy::central_crop}) {
        const vgb::CropSet cs = vgb::apply_policy(q, policy, 32, 48);
        expect(cs.crops.size() == 1, "single-crop policy must yield 1 crop");
        expect(cs.crops[0].pixels == q.pixels,
               "matching dims must pass pixels through unchanged");
        vgb::DescriptorSet qset;
        qset.ids = {900};
        const vgb::Descriptor d =
            vgb::gem(vgb::feature_map_from_image(cs.crops[0]));
        qset.matrix = vgb::MatrixF(1, 4);
        std::copy(d.values.begin(), d.values.end(), qset.matrix.row(0));
        per_policy.push_back(flat->search(qset, 10)[0]);
    }
    for (std::size_t p = 1; p < per_policy.size(); ++p) {
        expect(per_policy[p].hits.size() == per_policy[0].hits.size(),
               "policies must retrieve identically");
        for (std::size_t j = 0; j < per_policy[0].hits.size(); ++j) {
            expect(per_policy[p].hits[j].id == per_policy[0].hits[j].id,
                   "policies must retrieve identical ids");
            expect(per_policy[p].hits[j].sq_distance ==
                       per_policy[0].hits[j].sq_distance,
                   "policies must retrieve identical distances");
        }
    }
    expect(per_policy[0].hits[0].id == 7, "identity query must hit itself");
    expect(per_policy[0].hits[0].sq_distance == 0.0f,
           "identity query must hit at distance zero");

    // nearest-crop fusion keeps the minimum distance per id
    const vgb::Image wide = random_image(64, 96, 4);
    const vgb::CropSet five = vgb::policy_five_crops(wide, 32);
    std::vector<vgb::SearchResult> per_crop;
    for (const vgb::Image& crop : five.crops) {
        vgb::DescriptorSet qset;
        qset.ids = {901};
        const vgb::Descriptor d =
            vgb::gem(vgb::feature_map_from_image(crop));
        qset.matrix = vgb::MatrixF(1, 4);
        std::copy(d.values.begin(), d.values.end(), qset.matrix.row(0));
        per_crop.push_back(flat->search(qset, 30)[0]);
    }
    const vgb::SearchResult fused = vgb::fuse_nearest_crop(per_crop, 30);
    for (const vgb::Hit& h : fused.hits) {
        float best = std::numeric_limits<float>::max();
        for (const vgb::SearchResult& r : per_crop)
            for (const vgb::Hit& ch : r.hits)
                if (ch.id == h.id) best = std::min(best, ch.sq_distance);
        expect(h.sq_distance == best,
               "fused distance must equal the per-crop minimum");
        for (const vgb::SearchResult& r : per_crop)
            for (const vgb::Hit& ch : r.hits)
                if (ch.id == h.id)
                    expect(h.sq_distance <= ch.sq_distance,
                           "fused distance must lower-bound crops");
    }
    return g_notes.empty();
}

/***************************************************
 * 11. Recall@1 cannot improve when far-away distractors multiply the
 *     database by 10x and 100x.
 ***************************************************/
bool c11_distractor_trend() {
    vgb::SynthSpec spec;
    spec.n_db = 500;
    spec.n_q = 100;
    spec.dim = 32;
    spec.n_places = 80;
    spec.descriptor_noise = 0.1;
    spec.confusion_rate = 0.2;
    spec.seed = 23;
    const vgb::SynthDataset ds = vgb::synth_generate(spec);
    const vgb::PoseTable db_poses =
        vgb::PoseTable::from_manifest(ds.manifest, vgb::Split::database);
    const vgb::PoseTable q_poses =
        vgb::PoseTable::from_manifest(ds.manifest, vgb::Split::query);

    vgb::EvalConfig ecfg;
    ecfg.n_list = {1};
    const auto recall1 = [&](const vgb::DescriptorSet& db,
                             const vgb::PoseTable& poses) {
        vgb::IndexConfig cfg;
        const auto flat = vgb::build_index(db, cfg);
        const auto results = flat->search(ds.queries, 1);
        return vgb::recall_at_n(results, q_poses, poses, ecfg).recall_at.at(1);
    };

    const double r1 = recall1(ds.db, db_poses);
    const vgb::FarPosePolicy policy;
    const auto ten = vgb::inject_distractors(
        ds.db, db_poses, random_set(4500, 32, 77), q_poses, policy);
    const double r10 = recall1(ten.first, ten.second);
    const auto hundred = vgb::inject_distractors(
        ten.first, ten.second, random_set(45000, 32, 78), q_poses, policy);
    const double r100 = recall1(hundred.first, hundred.second);

    expect(r1 > 0.2, "baseline recall unexpectedly low");
    expect(r10 <= r1 + 1e-12, "x10 distractors must not raise recall@1");
    expect(r100 <= r10 + 1e-12, "x100 distractors must not raise recall@1");
    return g_notes.empty();
}

/***************************************************
 * 12. Every seeded command repeated twice produces byte-identical
 *     non-timing output, end to end through the CLI.
 ***************************************************/
std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    static int serial = 0;
    const std::string log =
        g_work + "/cli_log_" + std::to_string(serial++) + ".txt";
    const std::string cmd = g_cli + " " + args + " >" + log + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

bool c12_determinism() {
    const std::string w = g_work;
    const auto p = [&](const std::string& n) { return w + "/" + n; };

    // prepare a shared image container for preprocess/aggregate
    vgb::ImageSet imgs;
    vgb::Rng rng(121);
    for (std::uint64_t i = 0; i < 2; ++i) {
        vgb::Image img;
        img.height = 72;
        img.width = 96;
        img.channels = 3;
        img.pixels.resize(72 * 96 * 3);
        for (float& v : img.pixels)
            v = static_cast<float>(rng.next_double() + 0.1);
        imgs.ids.push_back(i);
        imgs.images.push_back(img);
    }
    vgb::write_images(p("det_imgs.vgbd"), imgs);

    bool all_zero = true;
    const auto twice = [&](const std::string& tpl,
                           const std::vector<std::string>& outs) {
        for (const char* tag : {"A", "B"}) {
            std::string cmd = tpl;
            std::size_t pos;
            while ((pos = cmd.find("%T")) != std::string::npos)
                cmd.replace(pos, 2, tag);
            if (run_cli(cmd) != 0) {
                all_zero = false;
                g_notes.push_back("command failed: " + cmd);
                return;
            }
        }
        for (const std::string& out : outs) {
            std::string a = out, b = out;
            std::size_t pos;
            while ((pos = a.find("%T")) != std::string::npos)
                a.replace(pos, 2, "A");
            while ((pos = b.find("%T")) != std::string::npos)
                b.replace(pos, 2, "B");
            const std::string da = slurp(a), db = slurp(b);
            expect(!da.empty() && da == db, "output differs: " + out);
        }
    };

    twice("synth --n-db 300 --n-q 30 --dim 16 --places 40 --seed 7"
          " --out-manifest " + p("det_m_%T.csv") +
          " --out-db " + p("det_db_%T.vgbd") +
          " --out-q " + p("det_q_%T.vgbd"),
          {p("det_m_%T.csv"), p("det_db_%T.vgbd"), p("det_q_%T.vgbd")});
    if (!all_zero) return false;

    twice("build-index --kind ivf --nlist 8 --nprobe 4 --seed 5 --in " +
              p("det_db_A.vgbd") + " --out " + p("det_ivf_%T.vgbd"),
          {p("det_ivf_%T.vgbd")});
    twice("build-index --kind hnsw --m-links 8 --ef-construction 40 --seed 9"
          " --in " + p("det_db_A.vgbd") + " --out " + p("det_hnsw_%T.vgbd"),
          {p("det_hnsw_%T.vgbd")});
    twice("build-index --kind pq --m-sub 4 --nbits 4 --seed 5 --in " +
              p("det_db_A.vgbd") + " --out " + p("det_pq_%T.vgbd"),
          {p("det_pq_%T.vgbd")});
    twice("search --index " + p("det_ivf_A.vgbd") + " --q " +
              p("det_q_A.vgbd") + " --k 10 --out " + p("det_res_%T.jsonl"),
          {p("det_res_%T.jsonl")});
    twice("mine --db " + p("det_db_A.vgbd") + " --q " + p("det_q_A.vgbd") +
              " --db-manifest " + p("det_m_A.csv") + " --q-manifest " +
              p("det_m_A.csv") +
              " --strategy partial --partial-sample 64 --n-neg 5"
              " --positive-radius 25 --negative-min 50 --seed 11 --out " +
              p("det_tri_%T.jsonl"),
          {p("det_tri_%T.jsonl")});
    twice("mine --db " + p("det_db_A.vgbd") + " --q " + p("det_q_A.vgbd") +
              " --db-manifest " + p("det_m_A.csv") + " --q-manifest " +
              p("det_m_A.csv") +
              " --strategy random --n-neg 5 --positive-radius 25"
              " --negative-min 50 --seed 3 --out " + p("det_rnd_%T.jsonl"),
          {p("det_rnd_%T.jsonl")});
    twice("bench --db " + p("det_db_A.vgbd") + " --q " + p("det_q_A.vgbd") +
              " --db-manifest " + p("det_m_A.csv") + " --q-manifest " +
              p("det_m_A.csv") +
              " --kinds flat,ivf --k 5 --nlist 8 --nprobe 4 --seed 5"
              " --omit-timing --out " + p("det_bench_%T.csv"),
          {p("det_bench_%T.csv")});
    twice("pca --fit " + p("det_db_A.vgbd") + " --dim 8 --model " +
              p("det_pca_%T.vgbd"),
          {p("det_pca_%T.vgbd")});
    twice("pca --model " + p("det_pca_A.vgbd") + " --in " + p("det_q_A.vgbd") +
              " --out " + p("det_proj_%T.vgbd"),
          {p("det_proj_%T.vgbd")});
    twice("preprocess --in " + p("det_imgs.vgbd") +
              " --policy five_crops --db-h 48 --db-w 64 --out " +
              p("det_crops_%T.vgbd"),
          {p("det_crops_%T.vgbd")});
    twice("aggregate --from-images --method gem --in " + p("det_crops_A.vgbd") +
              " --out " + p("det_agg_%T.vgbd"),
          {p("det_agg_%T.vgbd")});
    twice("eval --results " + p("det_res_A.jsonl") + " --db-manifest " +
              p("det_m_A.csv") + " --q-manifest " + p("det_m_A.csv") +
              " --threshold 25 --n 1,5 --report " + p("det_eval_%T.json"),
          {p("det_eval_%T.json")});

    // the pipeline runner writes the same artifact bytes into any workdir
    const njson cfg = {
        {"synth",
         {{"n_db", 200}, {"n_q", 20}, {"dim", 8}, {"places", 30}, {"seed", 3}}},
        {"index", {{"kind", "ivf"}, {"nlist", 8}, {"nprobe", 4}, {"seed", 5}}},
        {"search", {{"k", 5}}},
        {"eval", {{"threshold", 25}, {"n", {1, 5}}}}};
    std::ofstream(p("det_pipe.json")) << cfg.dump(2);
    for (const char* tag : {"A", "B"})
        if (run_cli("pipeline --config " + p("det_pipe.json") + " --workdir " +
                    p(std::string("det_wd_") + tag)) != 0) {
            all_zero = false;
            g_notes.push_back("pipeline run failed");
        }
    if (all_zero) {
        std::size_t n_files = 0;
        for (const auto& entry : fs::directory_iterator(p("det_wd_A"))) {
            const std::string name = entry.path().filename().string();
            const std::string other = p("det_wd_B") + "/" + name;
            expect(fs::exists(other), "pipeline artifact missing: " + name);
            if (fs::exists(other))
                expect(slurp(entry.path().string()) == slurp(other),
                       "pipeline artifact differs: " + name);
            ++n_files;
        }
        expect(n_files >= 4, "pipeline produced too few artifacts");
    }
    return g_notes.empty();
}

struct Criterion {
    int id;
    const char* name;
    bool (*fn)();
    double budget_s;
};

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s <vgbench binary>\n", argv[0]);
        return 2;
    }
    g_cli = argv[1];
    const auto ticks = Clock::now().time_since_epoch().count();
    g_work = (fs::temp_directory_path() /
              ("vgbench_acceptance_" + std::to_string(ticks)))
                 .string();
    fs::create_directories(g_work);

    const std::vector<Criterion> criteria = {
        {1, "pq-memory-factor", c01_pq_memory_factor, 1.0},
        {2, "footprint-arithmetic", c02_footprint_arithmetic, 1.0},
        {3, "matching-time-linearity", c03_matching_time_linearity, 30.0},
        {4, "ivf-speed-recall-trade", c04_ivf_speed_recall_trade, 120.0},
        {5, "exactness-equivalences", c05_exactness_equivalences, 30.0},
        {6, "flops-storage-scaling", c06_flops_storage_scaling, 1.0},
        {7, "aggregation-identities", c07_aggregation_identities, 30.0},
        {8, "mining-ordering", c08_mining_ordering, 60.0},
        {9, "evaluation-metrics", c09_evaluation_metrics, 60.0},
        {10, "preprocessing-equivalence", c10_preprocessing_equivalence, 30.0},
        {11, "distractor-trend", c11_distractor_trend, 120.0},
        {12, "determinism", c12_determinism, 300.0},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        g_notes.clear();
        const auto t0 = Clock::now();
        bool ok = false;
        try {
            ok = c.fn();
        } catch (const std::exception& e) {
            g_notes.push_back(std::string("exception: ") + e.what());
        }
        const double elapsed = seconds_since(t0);
        if (elapsed > c.budget_s) {
            ok = false;
            g_notes.push_back("over time budget: " + std::to_string(elapsed) +
                              "s > " + std::to_string(c.budget_s) + "s");
        }
        std::printf("ACCEPTANCE %d %s %s (%.2fs)\n", c.id,
                    ok ? "PASS" : "FAIL", c.name, elapsed);
        for (const std::string& note : g_notes)
            std::printf("    %s\n", note.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures == 0) fs::remove_all(g_work);
    return failures == 0 ? 0 : 1;
}
