#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "vgbench/common.hpp"
#include "vgbench/numerics.hpp"

using namespace vgb;

namespace {

MatrixF make_matrix(std::size_t rows, std::size_t cols,
                    std::initializer_list<float> vals) {
    MatrixF m(rows, cols);
    std::copy(vals.begin(), vals.end(), m.data.begin());
    return m;
}

MatrixF random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                      double scale = 1.0) {
    Rng rng(seed);
    MatrixF m(rows, cols);
    for (float& v : m.data) v = static_cast<float>(rng.gaussian() * scale);
    return m;
}

}  // namespace

TEST_CASE("l2_normalize scales to unit norm") {
    std::vector<float> v = {3.0f, 4.0f};
    CHECK(l2_normalize(v));
    CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-6));
    double norm = std::sqrt(double(v[0]) * v[0] + double(v[1]) * v[1]);
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("l2_normalize leaves a zero vector unchanged and reports it") {
    std::vector<float> v = {0.0f, 0.0f, 0.0f};
    CHECK_FALSE(l2_normalize(v));
    for (float x : v) CHECK(x == 0.0f);
}

TEST_CASE("l2_normalize rejects non-finite input") {
    std::vector<float> v = {1.0f, std::numeric_limits<float>::infinity()};
    CHECK_THROWS_AS(l2_normalize(v), Error);
}

TEST_CASE("sq_l2 matches a hand-computed value") {
    std::vector<float> a = {1.0f, 2.0f, 3.0f};
    std::vector<float> b = {4.0f, 6.0f, 3.0f};
    CHECK(sq_l2(a, b) == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(sq_l2(a, a) == 0.0);
}

TEST_CASE("sq_l2_f32 agrees with the double-accumulated reference") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t d = 1 + rng.bounded(40);
        std::vector<float> a(d), b(d);
        for (std::size_t i = 0; i < d; ++i) {
            a[i] = static_cast<float>(rng.gaussian());
            b[i] = static_cast<float>(rng.gaussian());
        }
        const double ref = sq_l2(a, b);
        const float fast = sq_l2_f32(a.data(), b.data(), d);
        CHECK(fast == doctest::Approx(ref).epsilon(1e-5));
    }
}

TEST_CASE("pairwise_sq_l2 lays out distances row by row") {
    MatrixF a = make_matrix(2, 2, {0.0f, 0.0f, 1.0f, 0.0f});
    MatrixF b = make_matrix(3, 2, {0.0f, 0.0f, 0.0f, 2.0f, 3.0f, 4.0f});
    MatrixF d = pairwise_sq_l2(a, b);
    REQUIRE(d.rows == 2);
    REQUIRE(d.cols == 3);
    CHECK(d.at(0, 0) == doctest::Approx(0.0));
    CHECK(d.at(0, 1) == doctest::Approx(4.0));
    CHECK(d.at(0, 2) == doctest::Approx(25.0));
    CHECK(d.at(1, 0) == doctest::Approx(1.0));
    CHECK(d.at(1, 1) == doctest::Approx(5.0));
    CHECK(d.at(1, 2) == doctest::Approx(20.0));

    MatrixF bad(1, 3);
    CHECK_THROWS_AS(pairwise_sq_l2(a, bad), Error);
}

TEST_CASE("kmeans separates two obvious 1-d clusters") {
    MatrixF data = make_matrix(6, 1, {0.0f, 0.1f, 0.2f, 10.0f, 10.1f, 10.2f});
    Codebook cb = kmeans(data, 2, 123);
    REQUIRE(cb.k == 2);
    std::vector<float> centers = {cb.centroids.at(0, 0), cb.centroids.at(1, 0)};
    std::sort(centers.begin(), centers.end());
    CHECK(centers[0] == doctest::Approx(0.1).epsilon(1e-5));
    CHECK(centers[1] == doctest::Approx(10.1).epsilon(1e-5));
    // inertia = sum of within-cluster squared deviations
    CHECK(cb.inertia == doctest::Approx(0.04).epsilon(1e-4));
}

TEST_CASE("kmeans with k = n puts every point on its own centroid") {
    MatrixF data = random_matrix(8, 3, 99);
    Codebook cb = kmeans(data, 8, 5);
    CHECK(cb.inertia == doctest::Approx(0.0).epsilon(1e-10));
    for (std::size_t i = 0; i < 8; ++i) {
        const std::size_t c = nearest_centroid(cb.centroids, data.row_span(i));
        CHECK(sq_l2(data.row_span(i), cb.centroids.row_span(c)) ==
              doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("kmeans is deterministic per seed and inertia never increases") {
    MatrixF data = random_matrix(200, 8, 31);
    KmeansTrace trace;
    Codebook a = kmeans(data, 10, 42, 50, &trace);
    Codebook b = kmeans(data, 10, 42, 50);
    CHECK(a.centroids.data == b.centroids.data);
    CHECK(a.inertia == b.inertia);
    REQUIRE(trace.inertia_per_iter.size() >= 1);
    for (std::size_t i = 1; i < trace.inertia_per_iter.size(); ++i)
        CHECK(trace.inertia_per_iter[i] <= trace.inertia_per_iter[i - 1] + 1e-9);
}

TEST_CASE("kmeans survives duplicate-heavy data needing cluster repair") {
    // Only two distinct locations but three clusters requested.
    MatrixF data(6, 2);
    for (int i = 0; i < 3; ++i) {
        data.at(i, 0) = 0.0f;
        data.at(i + 3, 0) = 10.0f;
        data.at(i, 1) = 0.0f;
        data.at(i + 3, 1) = 10.0f;
    }
    Codebook cb = kmeans(data, 3, 7, 20);
    REQUIRE(cb.k == 3);
    CHECK(std::isfinite(cb.inertia));
    CHECK(cb.centroids.all_finite());
}

TEST_CASE("kmeans input validation") {
    MatrixF data = random_matrix(4, 2, 1);
    CHECK_THROWS_AS(kmeans(data, 0, 1), Error);
    CHECK_THROWS_AS(kmeans(data, 5, 1), Error);  // more clusters than points
}

TEST_CASE("nearest_centroid breaks ties toward the lower index") {
    MatrixF cents = make_matrix(3, 2, {0.0f, 0.0f, 0.0f, 0.0f, 1.0f, 1.0f});
    std::vector<float> v = {0.0f, 0.0f};
    CHECK(nearest_centroid(cents, v) == 0);
    std::vector<float> w = {1.0f, 1.0f};
    CHECK(nearest_centroid(cents, w) == 2);
}

TEST_CASE("pca_fit recovers the dominant axis of a line cloud") {
    // points on y = 2x with a touch of orthogonal jitter
    Rng rng(11);
    MatrixF data(400, 2);
    for (std::size_t i = 0; i < 400; ++i) {
        const double t = rng.gaussian();
        const double j = rng.gaussian() * 0.01;
        data.at(i, 0) = static_cast<float>(t - 2.0 * j);
        data.at(i, 1) = static_cast<float>(2.0 * t + j);
    }
    PcaModel model = pca_fit(data, 2, false);
    REQUIRE(model.out_dim() == 2);
    // first component parallel to (1,2)/sqrt(5), sign-free
    const double c0 = model.components.at(0, 0);
    const double c1 = model.components.at(0, 1);
    const double dot = std::abs(c0 * (1.0 / std::sqrt(5.0)) +
                                c1 * (2.0 / std::sqrt(5.0)));
    CHECK(dot == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(model.eigenvalues[0] >= model.eigenvalues[1]);
    CHECK(model.eigenvalues[1] >= 0.0);
}

TEST_CASE("pca components are orthonormal") {
    MatrixF data = random_matrix(300, 16, 77);
    PcaModel model = pca_fit(data, 8, false);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < 16; ++c)
                dot += double(model.components.at(i, c)) *
                       model.components.at(j, c);
            CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-3));
        }
}

TEST_CASE("full-rank pca projection preserves pairwise distances") {
    MatrixF data = random_matrix(50, 6, 13);
    PcaModel model = pca_fit(data, 6, false);
    std::vector<std::vector<float>> proj;
    for (std::size_t i = 0; i < data.rows; ++i)
        proj.push_back(pca_project_raw(model, data.row_span(i)));
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = i + 1; j < 10; ++j) {
            const double orig = sq_l2(data.row_span(i), data.row_span(j));
            const double got = sq_l2(proj[i], proj[j]);
            CHECK(got == doctest::Approx(orig).epsilon(1e-3));
        }
}

TEST_CASE("projected variance matches the eigenvalue") {
    MatrixF data = random_matrix(500, 8, 21, 2.0);
    PcaModel model = pca_fit(data, 3, false);
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i = 0; i < data.rows; ++i) {
            const double v = pca_project_raw(model, data.row_span(i))[c];
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / data.rows;
        const double var = (sum2 - data.rows * mean * mean) / (data.rows - 1);
        CHECK(var == doctest::Approx(model.eigenvalues[c]).epsilon(1e-3));
    }
}

TEST_CASE("whitened projections have identity covariance") {
    MatrixF data = random_matrix(2000, 6, 3, 1.5);
    PcaModel model = pca_fit(data, 4, true);
    MatrixF proj(data.rows, 4);
    for (std::size_t i = 0; i < data.rows; ++i) {
        auto p = pca_project_raw(model, data.row_span(i));
        std::copy(p.begin(), p.end(), proj.row_span(i).begin());
    }
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a; b < 4; ++b) {
            double cov = 0.0;
            for (std::size_t i = 0; i < proj.rows; ++i)
                cov += double(proj.at(i, a)) * proj.at(i, b);
            cov /= (proj.rows - 1);
            CHECK(cov == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(0.1));
        }
}

TEST_CASE("pca_apply returns a unit-norm descriptor") {
    MatrixF data = random_matrix(100, 8, 17);
    PcaModel model = pca_fit(data, 4, false);
    Descriptor d = pca_apply(model, data.row_span(0));
    REQUIRE(d.dim() == 4);
    CHECK(d.normalized);
    double norm = 0.0;
    for (float v : d.values) norm += double(v) * v;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("pca_fit input validation") {
    MatrixF data = random_matrix(10, 4, 5);
    CHECK_THROWS_AS(pca_fit(data, 5, false), Error);  // out_dim > dim
    MatrixF one(1, 4);
    CHECK_THROWS_AS(pca_fit(one, 2, false), Error);  // needs n >= 2
}

TEST_CASE("rng streams are deterministic and well distributed") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(55);
    std::vector<int> buckets(8, 0);
    const int draws = 8000;
    for (int i = 0; i < draws; ++i) {
        const double x = r.next_double();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        ++buckets[static_cast<int>(x * 8)];
    }
    double chi2 = 0.0;
    for (int c : buckets) {
        const double diff = c - draws / 8.0;
        chi2 += diff * diff / (draws / 8.0);
    }
    CHECK(chi2 < 24.32);  // chi^2(7) at p = 0.001
}

TEST_CASE("gaussian draws have the right first two moments") {
    Rng r(99);
    const int n = 20000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = r.gaussian();
        sum += g;
        sum2 += g * g;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.03));
    CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("bounded draws are unbiased across buckets") {
    Rng r(4242);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 10000; ++i) ++counts[r.bounded(10)];
    double chi2 = 0.0;
    for (int c : counts) {
        const double diff = c - 1000.0;
        chi2 += diff * diff / 1000.0;
    }
    CHECK(chi2 < 27.88);  // chi^2(9) at p = 0.001
    CHECK_THROWS_AS(r.bounded(0), Error);
}

TEST_CASE("derive_seed separates streams per tag") {
    CHECK(derive_seed(7, 1) != derive_seed(7, 2));
    CHECK(derive_seed(7, 1) == derive_seed(7, 1));
    Rng a(derive_seed(7, 1)), b(derive_seed(7, 2));
    CHECK(a.next_u64() != b.next_u64());
}
