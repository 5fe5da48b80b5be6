#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vgbench/common.hpp"

namespace vgb {

inline constexpr double kNormEps = 1e-12;
inline constexpr double kWhitenEps = 1e-9;

/// Scale v to unit L2 norm in place. Returns false and leaves v unchanged
/// when ||v|| <= kNormEps. Throws on non-finite input.
bool l2_normalize(std::span<float> v);

/// Convenience wrapper producing a Descriptor with the normalized flag set.
Descriptor make_descriptor(std::vector<float> values);

double sq_l2(std::span<const float> a, std::span<const float> b);

/// Hot-loop kernel behind kmeans and every index scan. Four accumulators,
/// summed in a fixed order so results are reproducible run to run.
inline float sq_l2_f32(const float* a, const float* b, std::size_t d) {
    float acc0 = 0.0f, acc1 = 0.0f, acc2 = 0.0f, acc3 = 0.0f;
    std::size_t i = 0;
    for (; i + 4 <= d; i += 4) {
        const float d0 = a[i] - b[i];
        const float d1 = a[i + 1] - b[i + 1];
        const float d2 = a[i + 2] - b[i + 2];
        const float d3 = a[i + 3] - b[i + 3];
        acc0 += d0 * d0;
        acc1 += d1 * d1;
        acc2 += d2 * d2;
        acc3 += d3 * d3;
    }
    for (; i < d; ++i) {
        const float d0 = a[i] - b[i];
        acc0 += d0 * d0;
    }
    return (acc0 + acc1) + (acc2 + acc3);
}

/// Entry (i, j) = ||a_i - b_j||^2. Throws on column mismatch.
MatrixF pairwise_sq_l2(const MatrixF& a, const MatrixF& b);

struct Codebook {
    std::size_t k = 0;
    std::size_t dim = 0;
    MatrixF centroids;  // k x dim
    double inertia = 0.0;
};

struct KmeansTrace {
    std::vector<double> inertia_per_iter;
    std::size_t empty_cluster_repairs = 0;
};

/// Lloyd's k-means from k-means++ initialization. Deterministic given seed.
/// Stops at max_iters or when the relative inertia improvement falls below
/// 1e-7. Empty clusters are repaired by stealing the point farthest from
/// its centroid in the largest cluster. Assignment ties break toward the
/// lower centroid index.
Codebook kmeans(const MatrixF& data, std::size_t k, std::uint64_t seed,
                std::size_t max_iters = 100, KmeansTrace* trace = nullptr);

/// Index of the nearest centroid (squared L2, ties to the lower index).
std::size_t nearest_centroid(const MatrixF& centroids,
                             std::span<const float> v);

struct PcaModel {
    std::vector<float> mean;    // input dim
    MatrixF components;         // out_dim x dim, orthonormal rows
    std::vector<float> eigenvalues;  // out_dim, descending, >= 0
    bool whiten = false;

    std::size_t in_dim() const { return mean.size(); }
    std::size_t out_dim() const { return components.rows; }
};

/// Top-out_dim eigenvectors of the sample covariance (divisor n-1).
PcaModel pca_fit(const MatrixF& data, std::size_t out_dim, bool whiten);
PcaModel pca_fit(const DescriptorSet& set, std::size_t out_dim, bool whiten);

/// Centered projection without normalization: components * (v - mean),
/// divided by sqrt(eigenvalue + kWhitenEps) per axis when whitening.
std::vector<float> pca_project_raw(const PcaModel& model,
                                   std::span<const float> v);

/// pca_project_raw followed by L2 normalization (descriptor convention).
Descriptor pca_apply(const PcaModel& model, std::span<const float> v);

}  // namespace vgb
