#include "vgbench/geoeval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vgb {

namespace {

double deg2rad(double deg) { return deg * M_PI / 180.0; }

void check_pose(const GeoPose& p) {
    if (!(p.lat_deg >= -90.0 && p.lat_deg <= 90.0))
        throw_error(ErrorCode::out_of_range,
                    "latitude out of range: " + std::to_string(p.lat_deg));
    if (!(p.lon_deg >= -180.0 && p.lon_deg <= 180.0))
        throw_error(ErrorCode::out_of_range,
                    "longitude out of range: " + std::to_string(p.lon_deg));
}

}  // namespace

double haversine_m(const GeoPose& a, const GeoPose& b) {
    check_pose(a);
    check_pose(b);
    const double lat1 = deg2rad(a.lat_deg);
    const double lat2 = deg2rad(b.lat_deg);
    const double dlat = deg2rad(b.lat_deg - a.lat_deg);
    const double dlon = deg2rad(b.lon_deg - a.lon_deg);
    const double u = std::sin(dlat / 2.0);
    const double v = std::sin(dlon / 2.0);
    const double h = u * u + std::cos(lat1) * std::cos(lat2) * v * v;
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

double heading_delta_deg(const GeoPose& a, const GeoPose& b) {
    if (!a.heading_deg || !b.heading_deg)
        throw_error(ErrorCode::missing_heading,
                    "heading_delta_deg: heading absent");
    double d = std::fmod(std::abs(*a.heading_deg - *b.heading_deg), 360.0);
    return std::min(d, 360.0 - d);
}

void PoseTable::add(std::uint64_t id, const GeoPose& pose) {
    check_pose(pose);
    if (index_.count(id))
        throw_error(ErrorCode::collision,
                    "pose table: duplicate id " + std::to_string(id));
    index_[id] = ids.size();
    ids.push_back(id);
    poses.push_back(pose);
}

const GeoPose& PoseTable::pose_of(std::uint64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end())
        throw_error(ErrorCode::invalid_input,
                    "pose table: unknown id " + std::to_string(id));
    return poses[it->second];
}

bool PoseTable::contains(std::uint64_t id) const { return index_.count(id); }

PoseTable PoseTable::from_manifest(const Manifest& m, Split split) {
    PoseTable t;
    for (const auto& r : m.rows) {
        if (r.split != split) continue;
        t.add(r.id, GeoPose{r.lat_deg, r.lon_deg, r.heading_deg});
    }
    return t;
}

void EvalConfig::validate() const {
    if (threshold_m <= 0.0)
        throw_error(ErrorCode::invalid_parameter,
                    "eval: threshold_m must be > 0");
    if (n_list.empty())
        throw_error(ErrorCode::invalid_parameter, "eval: empty N list");
    for (std::size_t i = 0; i < n_list.size(); ++i) {
        if (n_list[i] < 1)
            throw_error(ErrorCode::invalid_parameter, "eval: N must be >= 1");
        if (i > 0 && n_list[i] <= n_list[i - 1])
            throw_error(ErrorCode::invalid_parameter,
                        "eval: N list must be strictly ascending");
    }
    if (heading_max_deg &&
        (*heading_max_deg <= 0.0 || *heading_max_deg > 180.0))
        throw_error(ErrorCode::invalid_parameter,
                    "eval: heading_max_deg must be in (0, 180]");
}

namespace {

// Distance plus optional heading gate. Pairs with a missing heading count as
// heading-unconstrained; *relaxed is set when that happened.
bool is_positive(const GeoPose& q, const GeoPose& db, double threshold_m,
                 std::optional<double> heading_max, bool* relaxed) {
    if (haversine_m(q, db) > threshold_m) return false;
    if (heading_max) {
        if (q.heading_deg && db.heading_deg) {
            if (heading_delta_deg(q, db) > *heading_max) return false;
        } else if (relaxed) {
            *relaxed = true;
        }
    }
    return true;
}

}  // namespace

std::vector<std::uint64_t> positives_of(const GeoPose& q,
                                        const PoseTable& db_poses,
                                        const EvalConfig& cfg) {
    cfg.validate();
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < db_poses.size(); ++i) {
        if (is_positive(q, db_poses.poses[i], cfg.threshold_m,
                        cfg.heading_max_deg, nullptr))
            out.push_back(db_poses.ids[i]);
    }
    return out;
}

EvalReport recall_at_n(const std::vector<SearchResult>& results,
                       const PoseTable& q_poses, const PoseTable& db_poses,
                       const EvalConfig& cfg) {
    cfg.validate();
    EvalReport report;
    report.config = cfg;
    report.n_queries = results.size();

    std::map<std::size_t, std::size_t> found_at;
    for (std::size_t n : cfg.n_list) found_at[n] = 0;
    std::size_t with_positive = 0;

    for (const auto& r : results) {
        const GeoPose& q = q_poses.pose_of(r.query_id);

        bool any_positive = false;
        for (std::size_t i = 0; i < db_poses.size(); ++i) {
            if (is_positive(q, db_poses.poses[i], cfg.threshold_m,
                            cfg.heading_max_deg,
                            &report.heading_unconstrained_pairs)) {
                any_positive = true;
                break;
            }
        }
        if (any_positive) ++with_positive;

        std::optional<std::size_t> first_hit;
        for (std::size_t rank = 0; rank < r.hits.size(); ++rank) {
            const GeoPose& db = db_poses.pose_of(r.hits[rank].id);
            if (is_positive(q, db, cfg.threshold_m, cfg.heading_max_deg,
                            &report.heading_unconstrained_pairs)) {
                first_hit = rank + 1;
                break;
            }
        }
        report.per_query_first_hit_rank.push_back(first_hit);
        if (first_hit)
            for (std::size_t n : cfg.n_list)
                if (*first_hit <= n) found_at[n]++;
    }

    const double denom = results.empty() ? 1.0 : double(results.size());
    for (std::size_t n : cfg.n_list)
        report.recall_at[n] = double(found_at[n]) / denom;
    report.upper_bound = double(with_positive) / denom;
    return report;
}

std::vector<SweepPoint> threshold_sweep(
    const std::vector<SearchResult>& results, const PoseTable& q_poses,
    const PoseTable& db_poses, const std::vector<double>& thresholds_m,
    std::optional<double> heading_max_deg) {
    // Per query: geodesic distance of the top-1 hit (when heading-compatible)
    // and the smallest geodesic distance to any heading-compatible db item.
    std::vector<double> top1_dist(results.size(),
                                  std::numeric_limits<double>::infinity());
    std::vector<double> best_dist(results.size(),
                                  std::numeric_limits<double>::infinity());

    for (std::size_t qi = 0; qi < results.size(); ++qi) {
        const auto& r = results[qi];
        const GeoPose& q = q_poses.pose_of(r.query_id);

        if (!r.hits.empty()) {
            const GeoPose& db = db_poses.pose_of(r.hits[0].id);
            bool heading_ok = true;
            if (heading_max_deg && q.heading_deg && db.heading_deg)
                heading_ok = heading_delta_deg(q, db) <= *heading_max_deg;
            if (heading_ok) top1_dist[qi] = haversine_m(q, db);
        }
        for (std::size_t i = 0; i < db_poses.size(); ++i) {
            const GeoPose& db = db_poses.poses[i];
            if (heading_max_deg && q.heading_deg && db.heading_deg &&
                heading_delta_deg(q, db) > *heading_max_deg)
                continue;
            best_dist[qi] = std::min(best_dist[qi], haversine_m(q, db));
        }
    }

    const double denom = results.empty() ? 1.0 : double(results.size());
    std::vector<SweepPoint> curve;
    curve.reserve(thresholds_m.size());
    for (double t : thresholds_m) {
        if (t <= 0.0)
            throw_error(ErrorCode::invalid_parameter,
                        "threshold_sweep: thresholds must be > 0");
        SweepPoint pt;
        pt.x = t;
        std::size_t hit = 0, ub = 0;
        for (std::size_t qi = 0; qi < results.size(); ++qi) {
            if (top1_dist[qi] <= t) ++hit;
            if (best_dist[qi] <= t) ++ub;
        }
        pt.recall = double(hit) / denom;
        pt.upper_bound = double(ub) / denom;
        curve.push_back(pt);
    }
    return curve;
}

double RecallCurve::conditional_found(std::size_t n1, std::size_t n2) const {
    std::size_t not_in_n1 = 0, found_by_n2 = 0;
    for (const auto& rank : first_hit_rank) {
        const bool in_n1 = rank && *rank <= n1;
        if (in_n1) continue;
        ++not_in_n1;
        if (rank && *rank <= n2) ++found_by_n2;
    }
    if (not_in_n1 == 0) return 0.0;
    return double(found_by_n2) / double(not_in_n1);
}

RecallCurve recall_curve(const std::vector<SearchResult>& results,
                         const PoseTable& q_poses, const PoseTable& db_poses,
                         const EvalConfig& cfg, std::size_t n_max) {
    if (n_max < 1)
        throw_error(ErrorCode::invalid_parameter, "recall_curve: n_max >= 1");
    RecallCurve curve;
    curve.recall.assign(n_max, 0.0);

    std::size_t with_positive = 0;
    for (const auto& r : results) {
        const GeoPose& q = q_poses.pose_of(r.query_id);

        bool any = false;
        for (std::size_t i = 0; i < db_poses.size(); ++i)
            if (is_positive(q, db_poses.poses[i], cfg.threshold_m,
                            cfg.heading_max_deg, nullptr)) {
                any = true;
                break;
            }
        if (any) ++with_positive;

        std::optional<std::size_t> first_hit;
        const std::size_t limit = std::min(n_max, r.hits.size());
        for (std::size_t rank = 0; rank < limit; ++rank) {
            const GeoPose& db = db_poses.pose_of(r.hits[rank].id);
            if (is_positive(q, db, cfg.threshold_m, cfg.heading_max_deg,
                            nullptr)) {
                first_hit = rank + 1;
                break;
            }
        }
        curve.first_hit_rank.push_back(first_hit);
        if (first_hit)
            for (std::size_t n = *first_hit; n <= n_max; ++n)
                curve.recall[n - 1] += 1.0;
    }

    const double denom = results.empty() ? 1.0 : double(results.size());
    for (double& v : curve.recall) v /= denom;
    curve.upper_bound = double(with_positive) / denom;
    return curve;
}

MergedDatabase merge_databases(
    const std::vector<std::pair<DescriptorSet, PoseTable>>& inputs) {
    MergedDatabase merged;
    if (inputs.empty())
        throw_error(ErrorCode::invalid_input, "merge_databases: no inputs");

    const std::size_t dim = inputs.front().first.dim();
    std::size_t total = 0;
    for (const auto& [set, poses] : inputs) {
        if (set.dim() != dim)
            throw_error(ErrorCode::dimension_mismatch,
                        "merge_databases: descriptor dim mismatch");
        total += set.size();
    }

    merged.set.matrix = MatrixF(total, dim);
    merged.set.ids.reserve(total);
    merged.set.normalized = true;
    std::size_t row = 0;
    for (std::size_t src = 0; src < inputs.size(); ++src) {
        const auto& [set, poses] = inputs[src];
        if (!set.normalized) merged.set.normalized = false;
        for (std::size_t i = 0; i < set.size(); ++i, ++row) {
            const std::uint64_t id = set.ids[i];
            if (merged.source_of.count(id))
                throw_error(ErrorCode::collision,
                            "merge_databases: duplicate id " +
                                std::to_string(id));
            merged.source_of[id] = src;
            merged.set.ids.push_back(id);
            std::copy(set.matrix.row(i), set.matrix.row(i) + dim,
                      merged.set.matrix.row(row));
            merged.poses.add(id, poses.pose_of(id));
        }
    }
    return merged;
}

std::pair<DescriptorSet, PoseTable> inject_distractors(
    const DescriptorSet& db, const PoseTable& db_poses,
    const DescriptorSet& distractors, const PoseTable& q_poses,
    const FarPosePolicy& policy) {
    if (distractors.size() > 0 && distractors.dim() != db.dim())
        throw_error(ErrorCode::dimension_mismatch,
                    "inject_distractors: dim mismatch");
    if (policy.clearance_m <= 0.0)
        throw_error(ErrorCode::invalid_parameter,
                    "inject_distractors: clearance must be > 0");

    DescriptorSet out_set;
    out_set.normalized = db.normalized && distractors.normalized;
    out_set.matrix = MatrixF(db.size() + distractors.size(), db.dim());
    std::copy(db.matrix.data.begin(), db.matrix.data.end(),
              out_set.matrix.data.begin());
    out_set.ids = db.ids;

    PoseTable out_poses;
    for (std::size_t i = 0; i < db_poses.size(); ++i)
        out_poses.add(db_poses.ids[i], db_poses.poses[i]);

    if (distractors.size() == 0) return {std::move(out_set), out_poses};

    // March rows of poses northward, starting two clearances above the
    // northernmost query; meridian separation alone guarantees the margin.
    double max_lat = -90.0;
    for (const auto& p : q_poses.poses) max_lat = std::max(max_lat, p.lat_deg);
    const double step_deg = 2.0 * policy.clearance_m / 111320.0;
    double lat = max_lat + 2.0 * step_deg;

    std::uint64_t next_id = 0;
    for (std::uint64_t id : db.ids) next_id = std::max(next_id, id + 1);
    for (std::uint64_t id : q_poses.ids) next_id = std::max(next_id, id + 1);

    const std::size_t per_row = 360;  // one degree of longitude apart
    for (std::size_t i = 0; i < distractors.size(); ++i) {
        const double row_lat = lat + step_deg * double(i / per_row);
        if (row_lat > 89.0)
            throw_error(ErrorCode::degenerate_geometry,
                        "inject_distractors: ran out of room north of the "
                        "queries");
        const double lon = -180.0 + double(i % per_row);
        const std::uint64_t id = next_id + i;
        out_set.ids.push_back(id);
        std::copy(distractors.matrix.row(i),
                  distractors.matrix.row(i) + db.dim(),
                  out_set.matrix.row(db.size() + i));
        out_poses.add(id, GeoPose{row_lat, lon, std::nullopt});
    }
    return {std::move(out_set), out_poses};
}

}  // namespace vgb
