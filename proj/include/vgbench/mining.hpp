// Triplet assembly for weakly supervised retrieval training. A triplet is
// the query (anchor), the geodesically close database image nearest in
// descriptor space (positive), and n_neg descriptor-hard images beyond the
// exclusion radius (negatives).
//
// Eligibility is strict: negatives lie > negative_min_m from the query, so
// the 10-25 m annulus contributes neither positives nor negatives. Mining
// reads a descriptor snapshot; refreshing the snapshot as the embedding
// drifts during training is the caller's concern.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vgbench/common.hpp"
#include "vgbench/geoeval.hpp"

namespace vgb {

enum class MiningStrategy { full, partial, random };

const char* mining_strategy_name(MiningStrategy s);
MiningStrategy mining_strategy_from_name(const std::string& name);

struct MiningConfig {
    MiningStrategy strategy = MiningStrategy::full;
    std::size_t n_neg = 10;
    double positive_radius_m = 10.0;
    double negative_min_m = 25.0;
    std::size_t partial_sample = 1000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Triplet {
    std::uint64_t query_id = 0;
    std::uint64_t positive_id = 0;
    std::vector<std::uint64_t> negative_ids;
};

// Among database images within positive_radius_m of the query pose, returns
// the id with the smallest descriptor squared distance; ties break to the
// lower id. Throws no_positive when nothing is in radius.
std::uint64_t select_positive(std::span<const float> q_desc,
                              const GeoPose& q_pose, const DescriptorSet& db,
                              const PoseTable& db_poses,
                              const MiningConfig& cfg);

// Negatives are the n_neg eligible images with the smallest descriptor
// distance over the whole database, ascending order, id tie-break.
Triplet mine_full(std::uint64_t q_id, std::span<const float> q_desc,
                  const GeoPose& q_pose, const DescriptorSet& db,
                  const PoseTable& db_poses, const MiningConfig& cfg);

// Draws partial_sample eligible images without replacement (seeded per
// query), then picks the n_neg hardest within the sample. A pool no larger
// than partial_sample degenerates to mine_full.
Triplet mine_partial(std::uint64_t q_id, std::span<const float> q_desc,
                     const GeoPose& q_pose, const DescriptorSet& db,
                     const PoseTable& db_poses, const MiningConfig& cfg);

// n_neg uniform draws without replacement from the eligible pool, in draw
// order. No descriptor access.
Triplet mine_random(std::uint64_t q_id, std::span<const float> q_desc,
                    const GeoPose& q_pose, const DescriptorSet& db,
                    const PoseTable& db_poses, const MiningConfig& cfg);

// Dispatch on cfg.strategy.
Triplet mine_one(std::uint64_t q_id, std::span<const float> q_desc,
                 const GeoPose& q_pose, const DescriptorSet& db,
                 const PoseTable& db_poses, const MiningConfig& cfg);

struct MiningOutcome {
    std::vector<Triplet> triplets;
    std::vector<std::uint64_t> skipped;  // queries with no positive in radius
};

// Mines every query, collecting the ones without a positive instead of
// failing the batch.
MiningOutcome mine_all(const DescriptorSet& queries, const PoseTable& q_poses,
                       const DescriptorSet& db, const PoseTable& db_poses,
                       const MiningConfig& cfg);

// Sum over negatives of max(0, |q-p|^2 - |q-n|^2 + margin).
double triplet_loss(std::span<const float> q, std::span<const float> p,
                    const MatrixF& negatives, double margin = 0.1);

}  // namespace vgb
