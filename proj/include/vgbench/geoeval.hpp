#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vgbench/common.hpp"
#include "vgbench/dataio.hpp"

namespace vgb {

inline constexpr double kEarthRadiusM = 6371000.0;

struct GeoPose {
    double lat_deg = 0.0;
    double lon_deg = 0.0;
    std::optional<double> heading_deg;
};

/// Great-circle distance on a 6371 km sphere, in meters.
double haversine_m(const GeoPose& a, const GeoPose& b);

/// Smallest angular difference between two headings, in [0, 180].
double heading_delta_deg(const GeoPose& a, const GeoPose& b);

/// Id-indexed pose lookup.
struct PoseTable {
    std::vector<std::uint64_t> ids;
    std::vector<GeoPose> poses;

    std::size_t size() const { return ids.size(); }
    void add(std::uint64_t id, const GeoPose& pose);
    const GeoPose& pose_of(std::uint64_t id) const;
    bool contains(std::uint64_t id) const;

    static PoseTable from_manifest(const Manifest& m, Split split);

   private:
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

struct EvalConfig {
    double threshold_m = 25.0;
    std::vector<std::size_t> n_list = {1, 5, 10, 20};
    std::optional<double> heading_max_deg;

    void validate() const;
};

struct EvalReport {
    std::map<std::size_t, double> recall_at;
    double upper_bound = 0.0;
    std::vector<std::optional<std::size_t>> per_query_first_hit_rank;  // 1-based
    TimingReport timing;
    EvalConfig config;
    std::size_t n_queries = 0;
    // true when cfg has a heading limit but some compared pair lacked a
    // heading and was counted as heading-unconstrained
    bool heading_unconstrained_pairs = false;
};

/// Database ids within threshold_m of q (and within heading_max_deg when the
/// config sets it and both poses carry headings).
std::vector<std::uint64_t> positives_of(const GeoPose& q,
                                        const PoseTable& db_poses,
                                        const EvalConfig& cfg);

/// recall@N for every N in cfg.n_list. Queries without any positive stay in
/// the denominator; upper_bound is the fraction of queries with >= 1
/// positive.
EvalReport recall_at_n(const std::vector<SearchResult>& results,
                       const PoseTable& q_poses, const PoseTable& db_poses,
                       const EvalConfig& cfg);

struct SweepPoint {
    double x = 0.0;
    double recall = 0.0;
    double upper_bound = 0.0;
};

/// recall@1 and upper bound per distance threshold.
std::vector<SweepPoint> threshold_sweep(
    const std::vector<SearchResult>& results, const PoseTable& q_poses,
    const PoseTable& db_poses, const std::vector<double>& thresholds_m,
    std::optional<double> heading_max_deg = std::nullopt);

struct RecallCurve {
    std::vector<double> recall;  // recall[i] = recall@(i+1)
    double upper_bound = 0.0;
    std::vector<std::optional<std::size_t>> first_hit_rank;

    /// P(first hit <= n2 | first hit > n1), counted over all queries.
    double conditional_found(std::size_t n1, std::size_t n2) const;
};

RecallCurve recall_curve(const std::vector<SearchResult>& results,
                         const PoseTable& q_poses, const PoseTable& db_poses,
                         const EvalConfig& cfg, std::size_t n_max = 100);

/// Id-disjoint union of several databases plus a per-id source tag.
struct MergedDatabase {
    DescriptorSet set;
    PoseTable poses;
    std::unordered_map<std::uint64_t, std::size_t> source_of;  // id -> input index
};

MergedDatabase merge_databases(
    const std::vector<std::pair<DescriptorSet, PoseTable>>& inputs);

struct FarPosePolicy {
    double clearance_m = 1000.0;  // minimum distance from every query
};

/// Append distractor descriptors with poses guaranteed farther than the
/// policy clearance from every query pose. New ids continue after the
/// current maximum.
std::pair<DescriptorSet, PoseTable> inject_distractors(
    const DescriptorSet& db, const PoseTable& db_poses,
    const DescriptorSet& distractors, const PoseTable& q_poses,
    const FarPosePolicy& policy);

}  // namespace vgb
