#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vgbench/common.hpp"

namespace vgb {

/// Dense backbone output, C x H x W row-major. Aggregators treat the H*W
/// spatial positions as an unordered set of C-dim local features.
struct FeatureMap {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;  // c * (H*W) + y * W + x

    FeatureMap() = default;
    FeatureMap(std::size_t c, std::size_t h, std::size_t w)
        : channels(c), height(h), width(w), data(c * h * w, 0.0f) {}

    std::size_t positions() const { return height * width; }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[c * positions() + y * width + x];
    }
    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return data[c * positions() + y * width + x];
    }
    void validate() const;
};

/// Token sequence output; token 0 is the CLS token when cls_present.
struct TokenMatrix {
    std::size_t n_tokens = 0;
    std::size_t dim = 0;
    MatrixF data;  // n_tokens x dim
    bool cls_present = false;

    void validate() const;
};

/// Soft-assignment VLAD parameters (no training here; loaded or seeded).
struct VladParams {
    std::size_t clusters = 0;  // K
    std::size_t channels = 0;  // C
    MatrixF centroids;         // K x C
    MatrixF assign_weights;    // K x C
    std::vector<float> assign_bias;  // K

    void validate() const;
    static VladParams seeded_random(std::size_t clusters, std::size_t channels,
                                    std::uint64_t seed);
};

// ---- feature map aggregators (all outputs L2-normalized) ----

/// Per-channel spatial mean.
Descriptor spoc(const FeatureMap& f);

/// Per-channel spatial max.
Descriptor mac(const FeatureMap& f);

/// Generalized mean: per channel (mean of max(x, eps)^p)^(1/p).
Descriptor gem(const FeatureMap& f, double p = 3.0, double eps = 1e-6);

/// Regional max pooling over a multi-scale grid of square regions; regional
/// max vectors are L2-normalized, summed, then normalized again.
Descriptor rmac(const FeatureMap& f, std::size_t levels = 3);

struct Region {
    std::size_t y0, x0, side;
};

/// The region grid used by rmac. Scale l in 1..levels yields squares of side
/// floor(2*min(H,W)/(l+1)), placed uniformly along each axis so consecutive
/// regions overlap by at least ~40% of their side: an axis of length L fits
/// n = ceil((L-side)/(0.6*side)) + 1 offsets, evenly rounded over [0, L-side].
std::vector<Region> rmac_regions(std::size_t height, std::size_t width,
                                 std::size_t levels);

/// Soft-assigned residual aggregation; output dim = K*C. Zero residual
/// blocks stay zero through intra-normalization; when `zero_blocks` is
/// given, entry k is set to 1 for each such block.
Descriptor netvlad(const FeatureMap& f, const VladParams& params,
                   std::vector<std::uint8_t>* zero_blocks = nullptr);

/// Per-position soft-assignment weights (K x positions), columns sum to 1.
MatrixF netvlad_assignments(const FeatureMap& f, const VladParams& params);

// ---- token aggregators ----

/// Attention-weighted token mean: softmax(attn . token_i) over non-CLS
/// tokens, then the weighted sum, L2-normalized.
Descriptor seqpool(const TokenMatrix& t, std::span<const float> attn_weights);

/// First token row, L2-normalized. Requires cls_present.
Descriptor cls_token(const TokenMatrix& t);

// ---- learned linear head ----

/// W*d + b, then L2 normalization.
Descriptor linear_project(const Descriptor& d, const MatrixF& weights,
                          std::span<const float> bias);

/// Random matrix with orthonormal rows (out <= in), for seeded projections.
MatrixF random_orthogonal(std::size_t out_dim, std::size_t in_dim,
                          std::uint64_t seed);

/***************************************************
 * Container IO.
 *
 * Feature maps: "fmapdims" (u64 n x 3: C, H, W), one f32 "fmap" section per
 * map (rows = C, cols = H*W), "itemids" (u64 n x 1).
 * Token matrices: "tokdims" (u64 n x 3: n_tokens, dim, cls flag), one f32
 * "tokens" section per item (rows = n_tokens, cols = dim), "itemids".
 * NetVLAD weights: "centroids" (K x C), "assign_w" (K x C),
 * "assign_b" (1 x K).
 ***************************************************/

struct FeatureMapSet {
    std::vector<std::uint64_t> ids;
    std::vector<FeatureMap> maps;
};

void write_feature_maps(const std::string& path, const FeatureMapSet& set);
FeatureMapSet read_feature_maps(const std::string& path);

struct TokenSet {
    std::vector<std::uint64_t> ids;
    std::vector<TokenMatrix> tokens;
};

void write_token_sets(const std::string& path, const TokenSet& set);
TokenSet read_token_sets(const std::string& path);

void write_vlad_params(const std::string& path, const VladParams& p);
VladParams read_vlad_params(const std::string& path);

}  // namespace vgb
