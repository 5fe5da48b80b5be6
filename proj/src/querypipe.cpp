#include "vgbench/querypipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_map>

#include "vgbench/dataio.hpp"
#include "vgbench/numerics.hpp"

namespace vgb {

void Image::validate() const {
    if (height < 1 || width < 1 || channels < 1)
        throw_error(ErrorCode::invalid_input, "image: all dims must be >= 1");
    if (pixels.size() != height * width * channels)
        throw_error(ErrorCode::dimension_mismatch,
                    "image: pixel count mismatch");
    for (float v : pixels)
        if (!std::isfinite(v))
            throw_error(ErrorCode::invalid_input, "image: non-finite pixel");
}

const char* crop_policy_name(CropPolicy p) {
    switch (p) {
        case CropPolicy::hard_resize: return "hard_resize";
        case CropPolicy::single_query: return "single_query";
        case CropPolicy::central_crop: return "central_crop";
        case CropPolicy::five_crops: return "five_crops";
    }
    return "?";
}

CropPolicy crop_policy_from_name(const std::string& name) {
    if (name == "hard_resize") return CropPolicy::hard_resize;
    if (name == "single_query") return CropPolicy::single_query;
    if (name == "central_crop") return CropPolicy::central_crop;
    if (name == "five_crops") return CropPolicy::five_crops;
    throw_error(ErrorCode::invalid_parameter,
                "unknown crop policy \"" + name + "\"");
}

std::size_t round_dim(double v) {
    const double r = std::floor(v + 0.5);
    return r < 1.0 ? 1 : static_cast<std::size_t>(r);
}

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
    img.validate();
    if (out_h < 1 || out_w < 1)
        throw_error(ErrorCode::invalid_parameter,
                    "resize: target dims must be >= 1");
    if (out_h == img.height && out_w == img.width) return img;

    Image out;
    out.height = out_h;
    out.width = out_w;
    out.channels = img.channels;
    out.pixels.resize(out_h * out_w * img.channels);

    const double sy = double(img.height) / double(out_h);
    const double sx = double(img.width) / double(out_w);
    const std::size_t C = img.channels;

    for (std::size_t oy = 0; oy < out_h; ++oy) {
        // align_corners=false: sample at pixel centers
        double fy = (double(oy) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, double(img.height - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - double(y0);

        for (std::size_t ox = 0; ox < out_w; ++ox) {
            double fx = (double(ox) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, double(img.width - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - double(x0);

            float* dst = &out.at(oy, ox, 0);
            for (std::size_t c = 0; c < C; ++c) {
                const double top = (1.0 - wx) * img.at(y0, x0, c) +
                                   wx * img.at(y0, x1, c);
                const double bot = (1.0 - wx) * img.at(y1, x0, c) +
                                   wx * img.at(y1, x1, c);
                dst[c] = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t h,
           std::size_t w) {
    if (h < 1 || w < 1 || y0 + h > img.height || x0 + w > img.width)
        throw_error(ErrorCode::degenerate_geometry,
                    "crop: window " + std::to_string(h) + "x" +
                        std::to_string(w) + "@(" + std::to_string(y0) + "," +
                        std::to_string(x0) + ") exceeds " +
                        std::to_string(img.height) + "x" +
                        std::to_string(img.width));
    Image out;
    out.height = h;
    out.width = w;
    out.channels = img.channels;
    out.pixels.resize(h * w * img.channels);
    const std::size_t row_bytes = w * img.channels * sizeof(float);
    for (std::size_t y = 0; y < h; ++y)
        std::memcpy(out.pixels.data() + (y * w) * img.channels,
                    img.pixels.data() +
                        ((y0 + y) * img.width + x0) * img.channels,
                    row_bytes);
    return out;
}

namespace {

void check_db_dims(std::size_t db_h, std::size_t db_w) {
    if (db_h < 1 || db_w < 1)
        throw_error(ErrorCode::invalid_parameter,
                    "policy: database dims must be >= 1");
}

// Isotropic resize pinning the shortest side to target_min exactly; the
// other side rounds half-up.
Image resize_min_side(const Image& q, std::size_t target_min) {
    const double scale = double(target_min) / double(q.min_side());
    std::size_t out_h, out_w;
    if (q.height <= q.width) {
        out_h = target_min;
        out_w = round_dim(double(q.width) * scale);
    } else {
        out_w = target_min;
        out_h = round_dim(double(q.height) * scale);
    }
    return resize_bilinear(q, out_h, out_w);
}

}  // namespace

CropSet policy_hard_resize(const Image& q, std::size_t db_h,
                           std::size_t db_w) {
    check_db_dims(db_h, db_w);
    CropSet cs;
    cs.policy = CropPolicy::hard_resize;
    cs.crops.push_back(resize_bilinear(q, db_h, db_w));
    return cs;
}

CropSet policy_single_query(const Image& q, std::size_t db_h,
                            std::size_t db_w) {
    check_db_dims(db_h, db_w);
    q.validate();
    CropSet cs;
    cs.policy = CropPolicy::single_query;
    cs.crops.push_back(resize_min_side(q, std::min(db_h, db_w)));
    return cs;
}

CropSet policy_central_crop(const Image& q, std::size_t db_h,
                            std::size_t db_w) {
    check_db_dims(db_h, db_w);
    q.validate();
    // smallest isotropic size covering the target window
    const double scale =
        std::max(double(db_h) / double(q.height), double(db_w) / double(q.width));
    const std::size_t rh = std::max(db_h, round_dim(double(q.height) * scale));
    const std::size_t rw = std::max(db_w, round_dim(double(q.width) * scale));
    Image r = resize_bilinear(q, rh, rw);
    CropSet cs;
    cs.policy = CropPolicy::central_crop;
    cs.crops.push_back(crop(r, (rh - db_h) / 2, (rw - db_w) / 2, db_h, db_w));
    return cs;
}

CropSet policy_five_crops(const Image& q, std::size_t db_min_side) {
    if (db_min_side < 1)
        throw_error(ErrorCode::invalid_parameter,
                    "five_crops: db_min_side must be >= 1");
    q.validate();
    Image r = resize_min_side(q, db_min_side);
    const std::size_t s = db_min_side;
    if (r.height < s || r.width < s)
        throw_error(ErrorCode::degenerate_geometry,
                    "five_crops: resized image smaller than crop");
    const std::size_t ym = r.height - s;
    const std::size_t xm = r.width - s;
    CropSet cs;
    cs.policy = CropPolicy::five_crops;
    cs.crops.push_back(crop(r, 0, 0, s, s));        // TL
    cs.crops.push_back(crop(r, 0, xm, s, s));       // TR
    cs.crops.push_back(crop(r, ym, 0, s, s));       // BL
    cs.crops.push_back(crop(r, ym, xm, s, s));      // BR
    cs.crops.push_back(crop(r, ym / 2, xm / 2, s, s));  // C
    return cs;
}

CropSet apply_policy(const Image& q, CropPolicy policy, std::size_t db_h,
                     std::size_t db_w) {
    switch (policy) {
        case CropPolicy::hard_resize: return policy_hard_resize(q, db_h, db_w);
        case CropPolicy::single_query:
            return policy_single_query(q, db_h, db_w);
        case CropPolicy::central_crop:
            return policy_central_crop(q, db_h, db_w);
        case CropPolicy::five_crops:
            return policy_five_crops(q, std::min(db_h, db_w));
    }
    throw_error(ErrorCode::invalid_parameter, "policy: unknown policy");
}

Descriptor fuse_mean(const std::vector<Descriptor>& crop_descs) {
    if (crop_descs.empty())
        throw_error(ErrorCode::invalid_input, "fuse_mean: no descriptors");
    const std::size_t dim = crop_descs[0].dim();
    std::vector<double> acc(dim, 0.0);
    for (const Descriptor& d : crop_descs) {
        if (d.dim() != dim)
            throw_error(ErrorCode::dimension_mismatch,
                        "fuse_mean: descriptor dim mismatch");
        for (std::size_t i = 0; i < dim; ++i) acc[i] += d.values[i];
    }
    std::vector<float> mean(dim);
    for (std::size_t i = 0; i < dim; ++i)
        mean[i] = static_cast<float>(acc[i] / double(crop_descs.size()));
    return make_descriptor(std::move(mean));
}

namespace {

std::uint64_t common_query_id(const std::vector<SearchResult>& per_crop) {
    if (per_crop.empty())
        throw_error(ErrorCode::invalid_input, "fuse: no crop results");
    for (const SearchResult& r : per_crop)
        if (r.query_id != per_crop[0].query_id)
            throw_error(ErrorCode::invalid_input,
                        "fuse: crop results belong to different queries");
    return per_crop[0].query_id;
}

}  // namespace

SearchResult fuse_nearest_crop(const std::vector<SearchResult>& per_crop,
                               std::size_t k) {
    SearchResult out;
    out.query_id = common_query_id(per_crop);
    out.k_requested = k;

    std::unordered_map<std::uint64_t, float> best;
    for (const SearchResult& r : per_crop)
        for (const Hit& h : r.hits) {
            auto [it, fresh] = best.emplace(h.id, h.sq_distance);
            if (!fresh && h.sq_distance < it->second)
                it->second = h.sq_distance;
        }

    out.hits.reserve(best.size());
    for (const auto& [id, d] : best) out.hits.push_back(Hit{id, d});
    std::sort(out.hits.begin(), out.hits.end(), [](const Hit& a, const Hit& b) {
        if (a.sq_distance != b.sq_distance) return a.sq_distance < b.sq_distance;
        return a.id < b.id;
    });
    if (out.hits.size() > k) out.hits.resize(k);
    return out;
}

SearchResult fuse_majority_vote(const std::vector<SearchResult>& per_crop,
                                std::size_t k) {
    SearchResult out;
    out.query_id = common_query_id(per_crop);
    out.k_requested = k;

    struct Tally {
        double vote = 0.0;
        float best = std::numeric_limits<float>::infinity();
    };
    std::unordered_map<std::uint64_t, Tally> tally;
    for (const SearchResult& r : per_crop) {
        const std::size_t top = std::min<std::size_t>(20, r.hits.size());
        for (std::size_t rank = 0; rank < top; ++rank) {
            Tally& t = tally[r.hits[rank].id];
            t.vote += 1.0 / double(rank + 1);
            t.best = std::min(t.best, r.hits[rank].sq_distance);
        }
    }

    struct Entry {
        std::uint64_t id;
        double vote;
        float best;
    };
    std::vector<Entry> entries;
    entries.reserve(tally.size());
    for (const auto& [id, t] : tally) entries.push_back({id, t.vote, t.best});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.vote != b.vote) return a.vote > b.vote;
        if (a.best != b.best) return a.best < b.best;
        return a.id < b.id;
    });
    if (entries.size() > k) entries.resize(k);
    out.hits.reserve(entries.size());
    for (const Entry& e : entries) out.hits.push_back(Hit{e.id, e.best});
    return out;
}

double flops_scale(double resize_ratio) {
    if (!(resize_ratio > 0.0))
        throw_error(ErrorCode::invalid_parameter,
                    "flops_scale: ratio must be > 0");
    return resize_ratio * resize_ratio;
}

void ImageSet::check_consistent() const {
    if (ids.size() != images.size())
        throw_error(ErrorCode::invalid_input, "image set: ids/images mismatch");
    if (!crop_index.empty() && crop_index.size() != images.size())
        throw_error(ErrorCode::invalid_input,
                    "image set: cropidx/images mismatch");
    for (const Image& img : images) img.validate();
}

void write_images(const std::string& path, const ImageSet& set) {
    set.check_consistent();
    Container c;
    std::vector<std::uint64_t> dims;
    dims.reserve(set.images.size() * 3);
    for (const Image& img : set.images) {
        dims.push_back(img.height);
        dims.push_back(img.width);
        dims.push_back(img.channels);
    }
    c.sections.push_back(Section::from_u64("imgdims", set.images.size(), 3,
                                           std::span<const std::uint64_t>(dims)));
    c.sections.push_back(Section::from_u64(
        "itemids", set.ids.size(), 1, std::span<const std::uint64_t>(set.ids)));
    for (const Image& img : set.images)
        c.sections.push_back(Section::from_f32(
            "image", img.height,
            static_cast<std::uint32_t>(img.width * img.channels),
            std::span<const float>(img.pixels)));
    if (!set.crop_index.empty())
        c.sections.push_back(
            Section::from_u8("cropidx", set.crop_index.size(), 1,
                             std::span<const std::uint8_t>(set.crop_index)));
    write_vgbd(path, c);
}

ImageSet read_images(const std::string& path) {
    const Container c = read_vgbd(path);
    const Section& dims_sec = c.require("imgdims");
    if (dims_sec.cols != 3)
        throw_error(ErrorCode::format, path + ": imgdims must have 3 columns");
    const auto dims = dims_sec.as_u64();
    const auto imgs = c.find_all("image");
    if (imgs.size() != dims_sec.rows)
        throw_error(ErrorCode::format,
                    path + ": image section count != imgdims rows");

    ImageSet set;
    const auto idspan = c.require("itemids").as_u64();
    set.ids.assign(idspan.begin(), idspan.end());
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        Image img;
        img.height = dims[i * 3];
        img.width = dims[i * 3 + 1];
        img.channels = dims[i * 3 + 2];
        if (imgs[i]->rows != img.height ||
            imgs[i]->cols != img.width * img.channels)
            throw_error(ErrorCode::format,
                        path + ": image section dims disagree with imgdims");
        const auto px = imgs[i]->as_f32();
        img.pixels.assign(px.begin(), px.end());
        set.images.push_back(std::move(img));
    }
    if (const Section* ci = c.find("cropidx")) {
        const auto span = ci->as_u8();
        set.crop_index.assign(span.begin(), span.end());
    }
    set.check_consistent();
    return set;
}

FeatureMap feature_map_from_image(const Image& img) {
    img.validate();
    FeatureMap f(img.channels, img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c)
                f.at(c, y, x) = img.at(y, x, c);
    return f;
}

}  // namespace vgb
