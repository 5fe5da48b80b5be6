// Query-side image geometry: resize policies, five-crop generation, and
// multi-crop result fusion.
//
// Images are dense H x W x C float arrays with values in [0,1], row-major
// with interleaved channels (index = (y*width + x)*channels + c). Resizing
// uses bilinear interpolation with the align_corners=false convention; all
// derived dimensions round half-up with a minimum of 1.

#pragma once

#include <cstddef>
#include <vector>

#include "vgbench/aggregation.hpp"
#include "vgbench/common.hpp"

namespace vgb {

struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<float> pixels;  // (y*width + x)*channels + c

    float at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
    float& at(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * width + x) * channels + c];
    }
    std::size_t min_side() const { return height < width ? height : width; }
    void validate() const;
};

enum class CropPolicy { hard_resize, single_query, central_crop, five_crops };

const char* crop_policy_name(CropPolicy p);
CropPolicy crop_policy_from_name(const std::string& name);

struct CropSet {
    CropPolicy policy = CropPolicy::hard_resize;
    std::vector<Image> crops;  // 1 or 5
};

// Rounds a target dimension half-up, clamping to at least 1.
std::size_t round_dim(double v);

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);

// Extracts the h x w window anchored at (y0, x0). Window must fit.
Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t h,
           std::size_t w);

// Anisotropic resize to exactly (db_h, db_w).
CropSet policy_hard_resize(const Image& q, std::size_t db_h, std::size_t db_w);

// Isotropic resize so the query's shortest side equals the database
// shortest side. Output dims may differ from (db_h, db_w).
CropSet policy_single_query(const Image& q, std::size_t db_h,
                            std::size_t db_w);

// Isotropic resize to the smallest size covering (db_h, db_w), then a
// centered crop of exactly (db_h, db_w). Offsets are floor((resized-target)/2).
CropSet policy_central_crop(const Image& q, std::size_t db_h,
                            std::size_t db_w);

// Isotropic resize so min-side = db_min_side, then five square crops of
// side db_min_side in the fixed order TL, TR, BL, BR, C.
CropSet policy_five_crops(const Image& q, std::size_t db_min_side);

CropSet apply_policy(const Image& q, CropPolicy policy, std::size_t db_h,
                     std::size_t db_w);

// Arithmetic mean of the crop descriptors followed by L2 normalization.
Descriptor fuse_mean(const std::vector<Descriptor>& crop_descs);

// Pools all (id, distance) pairs across crops, keeps the minimum distance
// per id, ranks ascending by (distance, id) and truncates to k.
SearchResult fuse_nearest_crop(const std::vector<SearchResult>& per_crop,
                               std::size_t k);

// Each crop votes for its top-20 ids with weight 1/(rank+1), rank 0-based.
// Ids are ranked by total vote descending; ties break on the best distance
// seen for the id, then on the id itself.
SearchResult fuse_majority_vote(const std::vector<SearchResult>& per_crop,
                                std::size_t k);

// Convolutional FLOPs (and descriptor storage for spatial methods) scale
// with pixel count: a resize ratio r keeps a fraction r^2 of the cost.
double flops_scale(double resize_ratio);

/***************************************************
 * Images in a VGBD container: "imgdims" (u64 n x 3: height, width,
 * channels), one f32 "image" section per image (rows = H, cols = W*C),
 * "itemids" (u64 n x 1), optional "cropidx" (u8 n x 1) for crop sets.
 * Item ids repeat across the crops of one query.
 ***************************************************/

struct ImageSet {
    std::vector<std::uint64_t> ids;
    std::vector<Image> images;
    std::vector<std::uint8_t> crop_index;  // empty unless crops

    void check_consistent() const;
};

void write_images(const std::string& path, const ImageSet& set);
ImageSet read_images(const std::string& path);

/// Reinterpret interleaved pixels as a planar feature map (C x H x W), so
/// an image can stand in for a backbone activation.
FeatureMap feature_map_from_image(const Image& img);

}  // namespace vgb
