#include "vgbench/numerics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace vgb {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_input: return "invalid_input";
        case ErrorCode::invalid_parameter: return "invalid_parameter";
        case ErrorCode::dimension_mismatch: return "dimension_mismatch";
        case ErrorCode::insufficient_data: return "insufficient_data";
        case ErrorCode::no_positive: return "no_positive";
        case ErrorCode::insufficient_pool: return "insufficient_pool";
        case ErrorCode::missing_cls: return "missing_cls";
        case ErrorCode::missing_heading: return "missing_heading";
        case ErrorCode::degenerate_geometry: return "degenerate_geometry";
        case ErrorCode::out_of_range: return "out_of_range";
        case ErrorCode::format: return "format";
        case ErrorCode::collision: return "collision";
        case ErrorCode::io: return "io";
        case ErrorCode::config: return "config";
    }
    return "unknown";
}

void DescriptorSet::check_consistent() const {
    if (ids.size() != matrix.rows)
        throw_error(ErrorCode::invalid_input,
                    "descriptor set: ids/rows mismatch");
    std::vector<std::uint64_t> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw_error(ErrorCode::collision, "descriptor set: duplicate ids");
}

bool l2_normalize(std::span<float> v) {
    double sq = 0.0;
    for (float x : v) {
        if (!std::isfinite(x))
            throw_error(ErrorCode::invalid_input,
                        "l2_normalize: non-finite input");
        sq += static_cast<double>(x) * x;
    }
    const double norm = std::sqrt(sq);
    if (norm <= kNormEps) return false;
    const float inv = static_cast<float>(1.0 / norm);
    for (float& x : v) x *= inv;
    return true;
}

Descriptor make_descriptor(std::vector<float> values) {
    Descriptor d;
    d.values = std::move(values);
    d.normalized = l2_normalize(d.values);
    return d;
}

double sq_l2(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw_error(ErrorCode::dimension_mismatch, "sq_l2: dim mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc;
}

MatrixF pairwise_sq_l2(const MatrixF& a, const MatrixF& b) {
    if (a.cols != b.cols)
        throw_error(ErrorCode::dimension_mismatch,
                    "pairwise_sq_l2: dim mismatch");
    MatrixF out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const float* ai = a.row(i);
        float* oi = out.row(i);
        for (std::size_t j = 0; j < b.rows; ++j)
            oi[j] = sq_l2_f32(ai, b.row(j), a.cols);
    }
    return out;
}

std::size_t nearest_centroid(const MatrixF& centroids,
                             std::span<const float> v) {
    if (centroids.cols != v.size())
        throw_error(ErrorCode::dimension_mismatch,
                    "nearest_centroid: dim mismatch");
    std::size_t best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (std::size_t c = 0; c < centroids.rows; ++c) {
        const float acc = sq_l2_f32(v.data(), centroids.row(c), v.size());
        if (acc < best_d) {  // strict < keeps the lower index on ties
            best_d = acc;
            best = c;
        }
    }
    return best;
}

namespace {

// k-means++: each next centroid sampled with probability proportional to
// the squared distance to the nearest chosen one.
MatrixF kmeanspp_init(const MatrixF& data, std::size_t k, Rng& rng) {
    const std::size_t n = data.rows;
    const std::size_t dim = data.cols;
    MatrixF centroids(k, dim);

    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.bounded(n));
    std::memcpy(centroids.row(0), data.row(first), dim * sizeof(float));

    for (std::size_t c = 1; c < k; ++c) {
        const float* prev = centroids.row(c - 1);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const float acc = sq_l2_f32(data.row(i), prev, dim);
            d2[i] = std::min(d2[i], static_cast<double>(acc));
            total += d2[i];
        }
        std::size_t pick;
        if (total <= 0.0) {
            // all remaining mass is zero (duplicate points); fall back to
            // a uniform draw
            pick = static_cast<std::size_t>(rng.bounded(n));
        } else {
            const double target = rng.next_double() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum >= target) {
                    pick = i;
                    break;
                }
            }
        }
        std::memcpy(centroids.row(c), data.row(pick), dim * sizeof(float));
    }
    return centroids;
}

// Assign every point to its nearest centroid; returns total inertia.
double assign_points(const MatrixF& data, const MatrixF& centroids,
                     std::vector<std::uint32_t>& assign) {
    const std::size_t n = data.rows;
    const std::size_t k = centroids.rows;
    const std::size_t dim = data.cols;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const float* xi = data.row(i);
        float best_d = std::numeric_limits<float>::infinity();
        std::uint32_t best = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const float acc = sq_l2_f32(xi, centroids.row(c), dim);
            if (acc < best_d) {
                best_d = acc;
                best = static_cast<std::uint32_t>(c);
            }
        }
        assign[i] = best;
        inertia += best_d;
    }
    return inertia;
}

// Move the point farthest from its centroid in the largest cluster into
// each empty cluster. Deterministic: lowest empty index first, largest
// cluster by (count, lower index), farthest point by (distance, lower index).
std::size_t repair_empty_clusters(const MatrixF& data, MatrixF& centroids,
                                  std::vector<std::uint32_t>& assign,
                                  std::vector<std::size_t>& counts) {
    const std::size_t k = centroids.rows;
    const std::size_t dim = data.cols;
    std::size_t repairs = 0;
    for (std::size_t empty = 0; empty < k; ++empty) {
        if (counts[empty] != 0) continue;
        std::size_t largest = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (counts[c] > counts[largest]) largest = c;
        if (counts[largest] <= 1) break;  // nothing left to split

        double far_d = -1.0;
        std::size_t far_i = 0;
        for (std::size_t i = 0; i < data.rows; ++i) {
            if (assign[i] != largest) continue;
            const double d = sq_l2(data.row_span(i),
                                   centroids.row_span(largest));
            if (d > far_d) {
                far_d = d;
                far_i = i;
            }
        }
        std::memcpy(centroids.row(empty), data.row(far_i),
                    dim * sizeof(float));
        assign[far_i] = static_cast<std::uint32_t>(empty);
        counts[largest]--;
        counts[empty]++;
        repairs++;
    }
    return repairs;
}

}  // namespace

Codebook kmeans(const MatrixF& data, std::size_t k, std::uint64_t seed,
                std::size_t max_iters, KmeansTrace* trace) {
    const std::size_t n = data.rows;
    const std::size_t dim = data.cols;
    if (k < 1) throw_error(ErrorCode::invalid_parameter, "kmeans: k < 1");
    if (n < k)
        throw_error(ErrorCode::insufficient_data,
                    "kmeans: fewer points than clusters (n=" +
                        std::to_string(n) + ", k=" + std::to_string(k) + ")");
    if (!data.all_finite())
        throw_error(ErrorCode::invalid_input, "kmeans: non-finite data");

    Rng rng(seed);
    MatrixF centroids = kmeanspp_init(data, k, rng);

    std::vector<std::uint32_t> assign(n, 0);
    std::vector<std::size_t> counts(k, 0);
    std::vector<double> sums(k * dim, 0.0);

    double prev_inertia = std::numeric_limits<double>::infinity();
    double inertia = 0.0;

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        inertia = assign_points(data, centroids, assign);

        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) counts[assign[i]]++;
        std::size_t repairs =
            repair_empty_clusters(data, centroids, assign, counts);
        if (trace) trace->empty_cluster_repairs += repairs;
        if (repairs > 0) inertia = assign_points(data, centroids, assign);

        assert(inertia <= prev_inertia * (1.0 + 1e-9) ||
               prev_inertia == std::numeric_limits<double>::infinity());
        if (trace) trace->inertia_per_iter.push_back(inertia);

        // update step
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t c = assign[i];
            const float* xi = data.row(i);
            double* sc = sums.data() + static_cast<std::size_t>(c) * dim;
            for (std::size_t j = 0; j < dim; ++j) sc[j] += xi[j];
            counts[c]++;
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // handled by repair next round
            const double inv = 1.0 / static_cast<double>(counts[c]);
            float* cr = centroids.row(c);
            const double* sc = sums.data() + c * dim;
            for (std::size_t j = 0; j < dim; ++j)
                cr[j] = static_cast<float>(sc[j] * inv);
        }

        if (prev_inertia != std::numeric_limits<double>::infinity()) {
            const double denom = std::max(prev_inertia, 1e-300);
            if ((prev_inertia - inertia) / denom < 1e-7) break;
        }
        prev_inertia = inertia;
    }

    // final inertia against the updated centroids
    inertia = assign_points(data, centroids, assign);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) counts[assign[i]]++;
    const std::size_t repairs =
        repair_empty_clusters(data, centroids, assign, counts);
    if (trace) trace->empty_cluster_repairs += repairs;
    if (repairs > 0) inertia = assign_points(data, centroids, assign);

    Codebook cb;
    cb.k = k;
    cb.dim = dim;
    cb.centroids = std::move(centroids);
    cb.inertia = inertia;
    return cb;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (double, in place).
// Returns eigenvalues in `evals`; rows of `evecs` are the eigenvectors.
void jacobi_eigen(std::vector<double>& a, std::size_t d,
                  std::vector<double>& evals, std::vector<double>& evecs) {
    evecs.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) evecs[i * d + i] = 1.0;

    const std::size_t max_sweeps = 64;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q)
                off += a[p * d + q] * a[p * d + q];
        if (off < 1e-22) break;

        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[p * d + p];
                const double aqq = a[q * d + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0)
                                     ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                     : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (std::size_t i = 0; i < d; ++i) {
                    const double aip = a[i * d + p];
                    const double aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double api = a[p * d + i];
                    const double aqi = a[q * d + i];
                    a[p * d + i] = c * api - s * aqi;
                    a[q * d + i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double vpi = evecs[p * d + i];
                    const double vqi = evecs[q * d + i];
                    evecs[p * d + i] = c * vpi - s * vqi;
                    evecs[q * d + i] = s * vpi + c * vqi;
                }
            }
        }
    }
    evals.resize(d);
    for (std::size_t i = 0; i < d; ++i) evals[i] = a[i * d + i];
}

}  // namespace

PcaModel pca_fit(const MatrixF& data, std::size_t out_dim, bool whiten) {
    const std::size_t n = data.rows;
    const std::size_t dim = data.cols;
    if (n < 2)
        throw_error(ErrorCode::insufficient_data, "pca_fit: need n >= 2");
    if (out_dim == 0 || out_dim > dim || out_dim > n - 1)
        throw_error(ErrorCode::dimension_mismatch,
                    "pca_fit: out_dim must satisfy 1 <= out_dim <= min(n-1, "
                    "dim)");
    if (!data.all_finite())
        throw_error(ErrorCode::invalid_input, "pca_fit: non-finite data");

    std::vector<double> mean(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const float* xi = data.row(i);
        for (std::size_t j = 0; j < dim; ++j) mean[j] += xi[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    // sample covariance, divisor n-1
    std::vector<double> cov(dim * dim, 0.0);
    std::vector<double> xc(dim);
    for (std::size_t i = 0; i < n; ++i) {
        const float* xi = data.row(i);
        for (std::size_t j = 0; j < dim; ++j) xc[j] = xi[j] - mean[j];
        for (std::size_t p = 0; p < dim; ++p) {
            const double xp = xc[p];
            double* covp = cov.data() + p * dim;
            for (std::size_t q = p; q < dim; ++q) covp[q] += xp * xc[q];
        }
    }
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t p = 0; p < dim; ++p)
        for (std::size_t q = p; q < dim; ++q) {
            cov[p * dim + q] *= inv;
            cov[q * dim + p] = cov[p * dim + q];
        }

    std::vector<double> evals, evecs;
    jacobi_eigen(cov, dim, evals, evecs);

    std::vector<std::size_t> order(dim);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return evals[a] > evals[b];
    });

    PcaModel model;
    model.whiten = whiten;
    model.mean.resize(dim);
    for (std::size_t j = 0; j < dim; ++j)
        model.mean[j] = static_cast<float>(mean[j]);
    model.components = MatrixF(out_dim, dim);
    model.eigenvalues.resize(out_dim);
    for (std::size_t r = 0; r < out_dim; ++r) {
        const std::size_t src = order[r];
        model.eigenvalues[r] =
            static_cast<float>(std::max(evals[src], 0.0));
        float* dst = model.components.row(r);
        for (std::size_t j = 0; j < dim; ++j)
            dst[j] = static_cast<float>(evecs[src * dim + j]);
    }
    return model;
}

PcaModel pca_fit(const DescriptorSet& set, std::size_t out_dim, bool whiten) {
    return pca_fit(set.matrix, out_dim, whiten);
}

std::vector<float> pca_project_raw(const PcaModel& model,
                                   std::span<const float> v) {
    if (v.size() != model.in_dim())
        throw_error(ErrorCode::dimension_mismatch,
                    "pca_apply: input dim " + std::to_string(v.size()) +
                        " != model dim " + std::to_string(model.in_dim()));
    const std::size_t dim = model.in_dim();
    const std::size_t out = model.out_dim();
    std::vector<float> result(out);
    for (std::size_t r = 0; r < out; ++r) {
        const float* comp = model.components.row(r);
        double acc = 0.0;
        for (std::size_t j = 0; j < dim; ++j)
            acc += static_cast<double>(comp[j]) * (v[j] - model.mean[j]);
        if (model.whiten)
            acc /= std::sqrt(static_cast<double>(model.eigenvalues[r]) +
                             kWhitenEps);
        result[r] = static_cast<float>(acc);
    }
    return result;
}

Descriptor pca_apply(const PcaModel& model, std::span<const float> v) {
    return make_descriptor(pca_project_raw(model, v));
}

}  // namespace vgb
