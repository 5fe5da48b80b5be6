#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "vgbench/common.hpp"
#include "vgbench/geoeval.hpp"
#include "vgbench/mining.hpp"
#include "vgbench/numerics.hpp"

using namespace vgb;

namespace {

constexpr double kEarthRadius = 6371000.0;

GeoPose pose(double lat, double lon) {
    GeoPose p;
    p.lat_deg = lat;
    p.lon_deg = lon;
    return p;
}

GeoPose north_of(const GeoPose& base, double meters) {
    return pose(base.lat_deg + meters / kEarthRadius * 180.0 / M_PI,
                base.lon_deg);
}

struct Scene {
    DescriptorSet db;
    PoseTable poses;
};

// db descriptors drawn from a unit gaussian; poses placed north of the base
// at the given offsets.
Scene make_scene(const std::vector<double>& offsets_m, std::size_t dim,
                 std::uint64_t seed) {
    Scene s;
    s.db.matrix = MatrixF(offsets_m.size(), dim);
    Rng rng(seed);
    for (float& v : s.db.matrix.data) v = static_cast<float>(rng.gaussian());
    const GeoPose base = pose(45.0, 7.6);
    for (std::size_t i = 0; i < offsets_m.size(); ++i) {
        s.db.ids.push_back(i);
        s.poses.add(i, north_of(base, offsets_m[i]));
    }
    return s;
}

std::vector<float> random_desc(std::size_t dim, std::uint64_t seed) {
    std::vector<float> d(dim);
    Rng rng(seed);
    for (float& v : d) v = static_cast<float>(rng.gaussian());
    return d;
}

// Reference miner: scan everything, sort by (distance, id).
Triplet brute_force_full(std::uint64_t q_id, std::span<const float> q_desc,
                         const GeoPose& q_pose, const Scene& s,
                         const MiningConfig& cfg) {
    Triplet t;
    t.query_id = q_id;
    struct Cand {
        float d;
        std::uint64_t id;
    };
    std::vector<Cand> pos, neg;
    for (std::size_t i = 0; i < s.db.ids.size(); ++i) {
        const double dist_m =
            haversine_m(q_pose, s.poses.pose_of(s.db.ids[i]));
        const float d =
            sq_l2_f32(q_desc.data(), s.db.matrix.row(i), q_desc.size());
        if (dist_m <= cfg.positive_radius_m) pos.push_back({d, s.db.ids[i]});
        if (dist_m > cfg.negative_min_m) neg.push_back({d, s.db.ids[i]});
    }
    auto by_dist = [](const Cand& a, const Cand& b) {
        if (a.d != b.d) return a.d < b.d;
        return a.id < b.id;
    };
    std::sort(pos.begin(), pos.end(), by_dist);
    std::sort(neg.begin(), neg.end(), by_dist);
    REQUIRE(!pos.empty());
    REQUIRE(neg.size() >= cfg.n_neg);
    t.positive_id = pos[0].id;
    for (std::size_t i = 0; i < cfg.n_neg; ++i)
        t.negative_ids.push_back(neg[i].id);
    return t;
}

}  // namespace

TEST_CASE("mining config validation") {
    MiningConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.n_neg = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = MiningConfig{};
    cfg.positive_radius_m = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = MiningConfig{};
    cfg.negative_min_m = cfg.positive_radius_m;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = MiningConfig{};
    cfg.partial_sample = cfg.n_neg - 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK(mining_strategy_from_name("partial") == MiningStrategy::partial);
    CHECK_THROWS_AS(mining_strategy_from_name("hardest"), Error);
}

TEST_CASE("select_positive picks the closest descriptor inside the radius") {
    // three candidates at 2 m, the query descriptor sits nearest to row 1
    Scene s = make_scene({2.0, 2.0, 2.0, 500.0}, 4, 1);
    MiningConfig cfg;
    std::vector<float> q(s.db.matrix.row(1), s.db.matrix.row(1) + 4);
    q[0] += 0.01f;

    const GeoPose q_pose = pose(45.0, 7.6);
    CHECK(select_positive(q, q_pose, s.db, s.poses, cfg) == 1);

    // the geographically ineligible row 3 never wins, even if identical
    std::copy(s.db.matrix.row(3), s.db.matrix.row(3) + 4, q.begin());
    const std::uint64_t chosen =
        select_positive(q, q_pose, s.db, s.poses, cfg);
    CHECK(chosen != 3);
}

TEST_CASE("select_positive breaks descriptor ties on the lower id") {
    Scene s = make_scene({2.0, 2.0}, 4, 2);
    std::copy(s.db.matrix.row(1), s.db.matrix.row(1) + 4, s.db.matrix.row(0));
    MiningConfig cfg;
    std::vector<float> q = random_desc(4, 3);
    CHECK(select_positive(q, pose(45.0, 7.6), s.db, s.poses, cfg) == 0);
}

TEST_CASE("select_positive reports a missing positive") {
    Scene s = make_scene({50.0, 60.0}, 4, 4);
    MiningConfig cfg;  // radius 10 m
    std::vector<float> q = random_desc(4, 5);
    try {
        select_positive(q, pose(45.0, 7.6), s.db, s.poses, cfg);
        FAIL("expected no_positive");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::no_positive);
    }
}

TEST_CASE("negative eligibility is strictly beyond negative_min_m") {
    // one positive at 2 m, a moat item at 24.9 m, negatives at 25.1+ m
    Scene s = make_scene({2.0, 24.9, 25.1, 40.0, 60.0}, 4, 6);
    MiningConfig cfg;
    cfg.n_neg = 3;
    std::vector<float> q = random_desc(4, 7);
    Triplet t = mine_full(9, q, pose(45.0, 7.6), s.db, s.poses, cfg);
    CHECK(t.positive_id == 0);
    std::vector<std::uint64_t> negs = t.negative_ids;
    std::sort(negs.begin(), negs.end());
    CHECK(negs == std::vector<std::uint64_t>{2, 3, 4});

    // with the moat item removed from the eligible pool, 3 negatives is
    // already the whole pool; asking for more fails
    cfg.n_neg = 4;
    try {
        mine_full(9, q, pose(45.0, 7.6), s.db, s.poses, cfg);
        FAIL("expected insufficient_pool");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::insufficient_pool);
    }
}

TEST_CASE("mine_full matches a brute-force reference") {
    std::vector<double> offsets;
    Rng rng(8);
    offsets.push_back(3.0);  // guaranteed positive
    for (int i = 0; i < 199; ++i)
        offsets.push_back(rng.next_double() * 900.0);
    Scene s = make_scene(offsets, 8, 9);
    MiningConfig cfg;
    cfg.n_neg = 10;
    const GeoPose q_pose = pose(45.0, 7.6);
    for (std::uint64_t q_seed = 0; q_seed < 5; ++q_seed) {
        std::vector<float> q = random_desc(8, 100 + q_seed);
        Triplet got = mine_full(q_seed, q, q_pose, s.db, s.poses, cfg);
        Triplet want = brute_force_full(q_seed, q, q_pose, s, cfg);
        CHECK(got.positive_id == want.positive_id);
        CHECK(got.negative_ids == want.negative_ids);
    }
}

TEST_CASE("hardest negatives come back in ascending distance order") {
    std::vector<double> offsets(60, 0.0);
    offsets[0] = 2.0;
    for (std::size_t i = 1; i < offsets.size(); ++i)
        offsets[i] = 30.0 + double(i);
    Scene s = make_scene(offsets, 6, 10);
    MiningConfig cfg;
    cfg.n_neg = 12;
    std::vector<float> q = random_desc(6, 11);
    Triplet t = mine_full(1, q, pose(45.0, 7.6), s.db, s.poses, cfg);
    float prev = -1.0f;
    for (std::uint64_t id : t.negative_ids) {
        const std::size_t row =
            std::find(s.db.ids.begin(), s.db.ids.end(), id) -
            s.db.ids.begin();
        const float d = sq_l2_f32(q.data(), s.db.matrix.row(row), 6);
        CHECK(d >= prev);
        prev = d;
    }
}

TEST_CASE("mine_partial with the pool fully sampled equals mine_full") {
    std::vector<double> offsets;
    offsets.push_back(1.0);
    for (int i = 0; i < 80; ++i) offsets.push_back(30.0 + i);
    Scene s = make_scene(offsets, 8, 12);
    MiningConfig cfg;
    cfg.n_neg = 10;
    cfg.partial_sample = 80;  // pool size is exactly 80
    cfg.seed = 42;
    std::vector<float> q = random_desc(8, 13);
    Triplet full = mine_full(5, q, pose(45.0, 7.6), s.db, s.poses, cfg);
    Triplet part = mine_partial(5, q, pose(45.0, 7.6), s.db, s.poses, cfg);
    CHECK(part.positive_id == full.positive_id);
    CHECK(part.negative_ids == full.negative_ids);

    // an oversized sample budget behaves the same way
    cfg.partial_sample = 10000;
    part = mine_partial(5, q, pose(45.0, 7.6), s.db, s.poses, cfg);
    CHECK(part.negative_ids == full.negative_ids);
}

TEST_CASE("partial mining is deterministic and order independent") {
    std::vector<double> offsets;
    offsets.push_back(1.0);
    for (int i = 0; i < 300; ++i) offsets.push_back(30.0 + i);
    Scene s = make_scene(offsets, 8, 14);
    MiningConfig cfg;
    cfg.strategy = MiningStrategy::partial;
    cfg.n_neg = 5;
    cfg.partial_sample = 50;
    cfg.seed = 7;
    const GeoPose q_pose = pose(45.0, 7.6);

    std::vector<float> qa = random_desc(8, 15);
    std::vector<float> qb = random_desc(8, 16);
    Triplet a1 = mine_partial(900, qa, q_pose, s.db, s.poses, cfg);
    Triplet a2 = mine_partial(900, qa, q_pose, s.db, s.poses, cfg);
    CHECK(a1.negative_ids == a2.negative_ids);

    // batch mining yields the same triplet regardless of batch order
    DescriptorSet queries;
    queries.ids = {900, 901};
    queries.matrix = MatrixF(2, 8);
    std::copy(qa.begin(), qa.end(), queries.matrix.row(0));
    std::copy(qb.begin(), qb.end(), queries.matrix.row(1));
    PoseTable q_poses;
    q_poses.add(900, q_pose);
    q_poses.add(901, q_pose);
    MiningOutcome joint = mine_all(queries, q_poses, s.db, s.poses, cfg);
    REQUIRE(joint.triplets.size() == 2);
    CHECK(joint.triplets[0].negative_ids == a1.negative_ids);

    DescriptorSet reversed;
    reversed.ids = {901, 900};
    reversed.matrix = MatrixF(2, 8);
    std::copy(qb.begin(), qb.end(), reversed.matrix.row(0));
    std::copy(qa.begin(), qa.end(), reversed.matrix.row(1));
    MiningOutcome swapped = mine_all(reversed, q_poses, s.db, s.poses, cfg);
    REQUIRE(swapped.triplets.size() == 2);
    CHECK(swapped.triplets[1].negative_ids == a1.negative_ids);
    CHECK(swapped.triplets[0].negative_ids ==
          joint.triplets[1].negative_ids);
}

TEST_CASE("different partial seeds explore different subsets") {
    std::vector<double> offsets;
    offsets.push_back(1.0);
    for (int i = 0; i < 500; ++i) offsets.push_back(30.0 + i);
    Scene s = make_scene(offsets, 8, 17);
    MiningConfig cfg;
    cfg.n_neg = 5;
    cfg.partial_sample = 20;
    std::vector<float> q = random_desc(8, 18);
    cfg.seed = 1;
    Triplet t1 = mine_partial(3, q, pose(45.0, 7.6), s.db, s.poses, cfg);
    cfg.seed = 2;
    Triplet t2 = mine_partial(3, q, pose(45.0, 7.6), s.db, s.poses, cfg);
    CHECK(t1.negative_ids != t2.negative_ids);
}

TEST_CASE("random negatives are uniform over the eligible pool") {
    // 1 positive + 10 eligible negatives; each query id reseeds the draw
    std::vector<double> offsets;
    offsets.push_back(1.0);
    for (int i = 0; i < 10; ++i) offsets.push_back(40.0 + i);
    Scene s = make_scene(offsets, 4, 19);
    MiningConfig cfg;
    cfg.n_neg = 1;
    cfg.seed = 3;
    std::vector<float> q = random_desc(4, 20);
    const GeoPose q_pose = pose(45.0, 7.6);

    std::vector<std::size_t> counts(11, 0);
    const std::size_t trials = 2000;
    for (std::size_t t = 0; t < trials; ++t) {
        Triplet tr = mine_random(t, q, q_pose, s.db, s.poses, cfg);
        REQUIRE(tr.negative_ids.size() == 1);
        counts[tr.negative_ids[0]]++;
    }
    CHECK(counts[0] == 0);  // the positive row is never drawn
    const double expect = double(trials) / 10.0;
    double chi2 = 0.0;
    for (std::size_t id = 1; id <= 10; ++id) {
        const double diff = double(counts[id]) - expect;
        chi2 += diff * diff / expect;
    }
    CHECK(chi2 < 27.88);  // chi-square 99.9th percentile, 9 dof
}

TEST_CASE("random negatives ignore the descriptor values") {
    std::vector<double> offsets;
    offsets.push_back(1.0);
    for (int i = 0; i < 30; ++i) offsets.push_back(40.0 + i);
    Scene s = make_scene(offsets, 4, 21);
    MiningConfig cfg;
    cfg.n_neg = 5;
    cfg.seed = 11;
    const GeoPose q_pose = pose(45.0, 7.6);
    Triplet ta =
        mine_random(77, random_desc(4, 22), q_pose, s.db, s.poses, cfg);
    Triplet tb =
        mine_random(77, random_desc(4, 23), q_pose, s.db, s.poses, cfg);
    CHECK(ta.negative_ids == tb.negative_ids);
    // and no repeats within a draw
    std::vector<std::uint64_t> sorted = ta.negative_ids;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("mine_one dispatches on the configured strategy") {
    std::vector<double> offsets;
    offsets.push_back(1.0);
    for (int i = 0; i < 40; ++i) offsets.push_back(40.0 + i);
    Scene s = make_scene(offsets, 4, 24);
    MiningConfig cfg;
    cfg.n_neg = 3;
    cfg.partial_sample = 10;
    std::vector<float> q = random_desc(4, 25);
    const GeoPose q_pose = pose(45.0, 7.6);

    cfg.strategy = MiningStrategy::full;
    CHECK(mine_one(1, q, q_pose, s.db, s.poses, cfg).negative_ids ==
          mine_full(1, q, q_pose, s.db, s.poses, cfg).negative_ids);
    cfg.strategy = MiningStrategy::partial;
    CHECK(mine_one(1, q, q_pose, s.db, s.poses, cfg).negative_ids ==
          mine_partial(1, q, q_pose, s.db, s.poses, cfg).negative_ids);
    cfg.strategy = MiningStrategy::random;
    CHECK(mine_one(1, q, q_pose, s.db, s.poses, cfg).negative_ids ==
          mine_random(1, q, q_pose, s.db, s.poses, cfg).negative_ids);
}

TEST_CASE("mine_all skips queries without positives and keeps the rest") {
    std::vector<double> offsets = {1.0, 40.0, 41.0, 42.0};
    Scene s = make_scene(offsets, 4, 26);
    MiningConfig cfg;
    cfg.n_neg = 2;

    DescriptorSet queries;
    queries.ids = {500, 501};
    queries.matrix = MatrixF(2, 4);
    Rng rng(27);
    for (float& v : queries.matrix.data) v = static_cast<float>(rng.gaussian());
    PoseTable q_poses;
    q_poses.add(500, pose(45.0, 7.6));       // has the 1 m positive
    q_poses.add(501, pose(45.04, 7.65));     // nothing nearby

    MiningOutcome out = mine_all(queries, q_poses, s.db, s.poses, cfg);
    REQUIRE(out.triplets.size() == 1);
    CHECK(out.triplets[0].query_id == 500);
    CHECK(out.skipped == std::vector<std::uint64_t>{501});

    // pool failures are real errors, not skips
    cfg.n_neg = 5;
    CHECK_THROWS_AS(mine_all(queries, q_poses, s.db, s.poses, cfg), Error);
}

TEST_CASE("mining validates dimensions") {
    Scene s = make_scene({1.0, 40.0}, 4, 28);
    MiningConfig cfg;
    cfg.n_neg = 1;
    std::vector<float> q = random_desc(6, 29);
    CHECK_THROWS_AS(mine_full(1, q, pose(45.0, 7.6), s.db, s.poses, cfg),
                    Error);
}

TEST_CASE("triplet loss matches scalar oracles") {
    auto loss1 = [](float qv, float pv, float nv, double margin) {
        std::vector<float> q = {qv}, p = {pv};
        MatrixF negs(1, 1);
        negs.at(0, 0) = nv;
        return triplet_loss(q, p, negs, margin);
    };
    // d(q,p)=4, d(q,n)=1 -> 4 - 1 + 0.1
    CHECK(loss1(0.0f, 2.0f, 1.0f, 0.1) == doctest::Approx(3.1));
    // d(q,p)=1, d(q,n)=4 -> clamped to zero
    CHECK(loss1(0.0f, 1.0f, 2.0f, 0.1) == doctest::Approx(0.0));
    // d(q,p)=1, d(q,n)=0.25 -> 0.85
    CHECK(loss1(0.0f, 1.0f, 0.5f, 0.1) == doctest::Approx(0.85));

    // several negatives accumulate
    std::vector<float> q = {0.0f}, p = {2.0f};
    MatrixF negs(2, 1);
    negs.at(0, 0) = 1.0f;
    negs.at(1, 0) = 3.0f;
    // terms: 4-1+0.1 = 3.1 and max(0, 4-9+0.1) = 0
    CHECK(triplet_loss(q, p, negs, 0.1) == doctest::Approx(3.1));

    MatrixF bad(1, 2);
    CHECK_THROWS_AS(triplet_loss(q, p, bad, 0.1), Error);
}
