#include "vgbench/mining.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vgbench/numerics.hpp"

namespace vgb {

const char* mining_strategy_name(MiningStrategy s) {
    switch (s) {
        case MiningStrategy::full: return "full";
        case MiningStrategy::partial: return "partial";
        case MiningStrategy::random: return "random";
    }
    return "?";
}

MiningStrategy mining_strategy_from_name(const std::string& name) {
    if (name == "full") return MiningStrategy::full;
    if (name == "partial") return MiningStrategy::partial;
    if (name == "random") return MiningStrategy::random;
    throw_error(ErrorCode::invalid_parameter,
                "unknown mining strategy \"" + name + "\"");
}

void MiningConfig::validate() const {
    if (n_neg < 1)
        throw_error(ErrorCode::invalid_parameter, "mining: n_neg must be >= 1");
    if (!(positive_radius_m > 0.0))
        throw_error(ErrorCode::invalid_parameter,
                    "mining: positive_radius_m must be > 0");
    if (!(negative_min_m > positive_radius_m))
        throw_error(ErrorCode::invalid_parameter,
                    "mining: negative_min_m must exceed positive_radius_m");
    if (partial_sample < n_neg)
        throw_error(ErrorCode::invalid_parameter,
                    "mining: partial_sample must be >= n_neg");
}

namespace {

void check_dims(std::span<const float> q_desc, const DescriptorSet& db) {
    if (q_desc.size() != db.matrix.cols)
        throw_error(ErrorCode::dimension_mismatch,
                    "mining: query dim " + std::to_string(q_desc.size()) +
                        " != db dim " + std::to_string(db.matrix.cols));
    if (db.ids.empty())
        throw_error(ErrorCode::insufficient_data, "mining: empty database");
}

// Row indices of database images strictly beyond negative_min_m.
std::vector<std::size_t> eligible_rows(const GeoPose& q_pose,
                                       const DescriptorSet& db,
                                       const PoseTable& db_poses,
                                       const MiningConfig& cfg) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < db.ids.size(); ++i)
        if (haversine_m(q_pose, db_poses.pose_of(db.ids[i])) >
            cfg.negative_min_m)
            rows.push_back(i);
    return rows;
}

// The n_neg rows with the smallest descriptor distance, ascending order,
// id tie-break.
std::vector<std::uint64_t> hardest(std::span<const float> q_desc,
                                   const DescriptorSet& db,
                                   const std::vector<std::size_t>& pool,
                                   std::size_t n_neg) {
    struct Cand {
        float d;
        std::uint64_t id;
    };
    std::vector<Cand> cands;
    cands.reserve(pool.size());
    for (std::size_t row : pool)
        cands.push_back(Cand{
            sq_l2_f32(q_desc.data(), db.matrix.row(row), q_desc.size()),
            db.ids[row]});
    std::partial_sort(cands.begin(), cands.begin() + std::ptrdiff_t(n_neg),
                      cands.end(), [](const Cand& a, const Cand& b) {
                          if (a.d != b.d) return a.d < b.d;
                          return a.id < b.id;
                      });
    std::vector<std::uint64_t> out(n_neg);
    for (std::size_t i = 0; i < n_neg; ++i) out[i] = cands[i].id;
    return out;
}

void require_pool(std::size_t pool, std::size_t n_neg, const char* who) {
    if (pool < n_neg)
        throw_error(ErrorCode::insufficient_pool,
                    std::string(who) + ": eligible pool has " +
                        std::to_string(pool) + " items, need " +
                        std::to_string(n_neg));
}

}  // namespace

std::uint64_t select_positive(std::span<const float> q_desc,
                              const GeoPose& q_pose, const DescriptorSet& db,
                              const PoseTable& db_poses,
                              const MiningConfig& cfg) {
    cfg.validate();
    check_dims(q_desc, db);
    bool found = false;
    std::uint64_t best_id = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < db.ids.size(); ++i) {
        if (haversine_m(q_pose, db_poses.pose_of(db.ids[i])) >
            cfg.positive_radius_m)
            continue;
        const float d =
            sq_l2_f32(q_desc.data(), db.matrix.row(i), q_desc.size());
        if (!found || d < best_d || (d == best_d && db.ids[i] < best_id)) {
            found = true;
            best_d = d;
            best_id = db.ids[i];
        }
    }
    if (!found)
        throw_error(ErrorCode::no_positive,
                    "select_positive: no database image within " +
                        std::to_string(cfg.positive_radius_m) + " m");
    return best_id;
}

Triplet mine_full(std::uint64_t q_id, std::span<const float> q_desc,
                  const GeoPose& q_pose, const DescriptorSet& db,
                  const PoseTable& db_poses, const MiningConfig& cfg) {
    cfg.validate();
    check_dims(q_desc, db);
    Triplet t;
    t.query_id = q_id;
    t.positive_id = select_positive(q_desc, q_pose, db, db_poses, cfg);
    const auto pool = eligible_rows(q_pose, db, db_poses, cfg);
    require_pool(pool.size(), cfg.n_neg, "mine_full");
    t.negative_ids = hardest(q_desc, db, pool, cfg.n_neg);
    return t;
}

Triplet mine_partial(std::uint64_t q_id, std::span<const float> q_desc,
                     const GeoPose& q_pose, const DescriptorSet& db,
                     const PoseTable& db_poses, const MiningConfig& cfg) {
    cfg.validate();
    check_dims(q_desc, db);
    Triplet t;
    t.query_id = q_id;
    t.positive_id = select_positive(q_desc, q_pose, db, db_poses, cfg);

    std::vector<std::size_t> pool = eligible_rows(q_pose, db, db_poses, cfg);
    require_pool(pool.size(), cfg.n_neg, "mine_partial");
    if (pool.size() > cfg.partial_sample) {
        // partial Fisher-Yates; samples are drawn per query, seeded by the
        // query id so a pass is order-independent
        Rng rng(derive_seed(cfg.seed, q_id));
        for (std::size_t i = 0; i < cfg.partial_sample; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.bounded(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(cfg.partial_sample);
    }
    t.negative_ids = hardest(q_desc, db, pool, cfg.n_neg);
    return t;
}

Triplet mine_random(std::uint64_t q_id, std::span<const float> q_desc,
                    const GeoPose& q_pose, const DescriptorSet& db,
                    const PoseTable& db_poses, const MiningConfig& cfg) {
    cfg.validate();
    check_dims(q_desc, db);
    Triplet t;
    t.query_id = q_id;
    t.positive_id = select_positive(q_desc, q_pose, db, db_poses, cfg);

    std::vector<std::size_t> pool = eligible_rows(q_pose, db, db_poses, cfg);
    require_pool(pool.size(), cfg.n_neg, "mine_random");
    Rng rng(derive_seed(cfg.seed, q_id));
    t.negative_ids.resize(cfg.n_neg);
    for (std::size_t i = 0; i < cfg.n_neg; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(rng.bounded(pool.size() - i));
        std::swap(pool[i], pool[j]);
        t.negative_ids[i] = db.ids[pool[i]];
    }
    return t;
}

Triplet mine_one(std::uint64_t q_id, std::span<const float> q_desc,
                 const GeoPose& q_pose, const DescriptorSet& db,
                 const PoseTable& db_poses, const MiningConfig& cfg) {
    switch (cfg.strategy) {
        case MiningStrategy::full:
            return mine_full(q_id, q_desc, q_pose, db, db_poses, cfg);
        case MiningStrategy::partial:
            return mine_partial(q_id, q_desc, q_pose, db, db_poses, cfg);
        case MiningStrategy::random:
            return mine_random(q_id, q_desc, q_pose, db, db_poses, cfg);
    }
    throw_error(ErrorCode::invalid_parameter, "mining: unknown strategy");
}

MiningOutcome mine_all(const DescriptorSet& queries, const PoseTable& q_poses,
                       const DescriptorSet& db, const PoseTable& db_poses,
                       const MiningConfig& cfg) {
    cfg.validate();
    MiningOutcome out;
    for (std::size_t i = 0; i < queries.ids.size(); ++i) {
        const std::uint64_t q_id = queries.ids[i];
        try {
            out.triplets.push_back(mine_one(q_id, queries.matrix.row_span(i),
                                            q_poses.pose_of(q_id), db,
                                            db_poses, cfg));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::no_positive) throw;
            out.skipped.push_back(q_id);
        }
    }
    return out;
}

double triplet_loss(std::span<const float> q, std::span<const float> p,
                    const MatrixF& negatives, double margin) {
    if (q.size() != p.size() || q.size() != negatives.cols)
        throw_error(ErrorCode::dimension_mismatch,
                    "triplet_loss: dim mismatch");
    const double d_qp = sq_l2(q, p);
    double loss = 0.0;
    for (std::size_t i = 0; i < negatives.rows; ++i) {
        const double d_qn = sq_l2(q, negatives.row_span(i));
        loss += std::max(0.0, d_qp - d_qn + margin);
    }
    return loss;
}

}  // namespace vgb
