#include "vgbench/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "vgbench/dataio.hpp"
#include "vgbench/numerics.hpp"

namespace vgb {

void FeatureMap::validate() const {
    if (channels < 1 || height < 1 || width < 1)
        throw_error(ErrorCode::invalid_input,
                    "feature map: all dims must be >= 1");
    if (data.size() != channels * height * width)
        throw_error(ErrorCode::dimension_mismatch,
                    "feature map: data size mismatch");
    for (float v : data)
        if (!std::isfinite(v))
            throw_error(ErrorCode::invalid_input,
                        "feature map: non-finite value");
}

void TokenMatrix::validate() const {
    if (n_tokens < 1)
        throw_error(ErrorCode::invalid_input, "tokens: n_tokens must be >= 1");
    if (cls_present && n_tokens < 2)
        throw_error(ErrorCode::invalid_input,
                    "tokens: cls_present requires n_tokens >= 2");
    if (data.rows != n_tokens || data.cols != dim)
        throw_error(ErrorCode::dimension_mismatch,
                    "tokens: matrix shape mismatch");
}

void VladParams::validate() const {
    if (clusters < 2)
        throw_error(ErrorCode::invalid_parameter, "vlad: K must be >= 2");
    if (centroids.rows != clusters || centroids.cols != channels ||
        assign_weights.rows != clusters || assign_weights.cols != channels ||
        assign_bias.size() != clusters)
        throw_error(ErrorCode::dimension_mismatch,
                    "vlad: parameter shape mismatch");
    if (!centroids.all_finite() || !assign_weights.all_finite())
        throw_error(ErrorCode::invalid_input, "vlad: non-finite parameters");
}

VladParams VladParams::seeded_random(std::size_t clusters,
                                     std::size_t channels,
                                     std::uint64_t seed) {
    Rng rng(seed);
    VladParams p;
    p.clusters = clusters;
    p.channels = channels;
    p.centroids = MatrixF(clusters, channels);
    p.assign_weights = MatrixF(clusters, channels);
    p.assign_bias.assign(clusters, 0.0f);
    for (std::size_t k = 0; k < clusters; ++k) {
        for (std::size_t c = 0; c < channels; ++c)
            p.centroids.at(k, c) = static_cast<float>(rng.gaussian());
        l2_normalize(p.centroids.row_span(k));
        // the usual VLAD initialization: w_k = 2*alpha*c_k, b_k = -alpha*|c_k|^2
        const double alpha = 10.0;
        double sq = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            p.assign_weights.at(k, c) =
                static_cast<float>(2.0 * alpha * p.centroids.at(k, c));
            sq += double(p.centroids.at(k, c)) * p.centroids.at(k, c);
        }
        p.assign_bias[k] = static_cast<float>(-alpha * sq);
    }
    return p;
}

Descriptor spoc(const FeatureMap& f) {
    f.validate();
    const std::size_t npos = f.positions();
    std::vector<float> out(f.channels);
    for (std::size_t c = 0; c < f.channels; ++c) {
        double acc = 0.0;
        const float* plane = f.data.data() + c * npos;
        for (std::size_t i = 0; i < npos; ++i) acc += plane[i];
        out[c] = static_cast<float>(acc / double(npos));
    }
    return make_descriptor(std::move(out));
}

Descriptor mac(const FeatureMap& f) {
    f.validate();
    const std::size_t npos = f.positions();
    std::vector<float> out(f.channels);
    for (std::size_t c = 0; c < f.channels; ++c) {
        const float* plane = f.data.data() + c * npos;
        float m = plane[0];
        for (std::size_t i = 1; i < npos; ++i) m = std::max(m, plane[i]);
        out[c] = m;
    }
    return make_descriptor(std::move(out));
}

Descriptor gem(const FeatureMap& f, double p, double eps) {
    f.validate();
    if (p < 1.0)
        throw_error(ErrorCode::invalid_parameter, "gem: p must be >= 1");
    if (eps <= 0.0)
        throw_error(ErrorCode::invalid_parameter, "gem: eps must be > 0");
    const std::size_t npos = f.positions();
    std::vector<float> out(f.channels);
    for (std::size_t c = 0; c < f.channels; ++c) {
        const float* plane = f.data.data() + c * npos;
        double acc = 0.0;
        for (std::size_t i = 0; i < npos; ++i)
            acc += std::pow(std::max(double(plane[i]), eps), p);
        out[c] = static_cast<float>(std::pow(acc / double(npos), 1.0 / p));
    }
    return make_descriptor(std::move(out));
}

std::vector<Region> rmac_regions(std::size_t height, std::size_t width,
                                 std::size_t levels) {
    if (levels < 1)
        throw_error(ErrorCode::invalid_parameter, "rmac: levels must be >= 1");
    const std::size_t short_side = std::min(height, width);

    auto axis_offsets = [](std::size_t length, std::size_t side) {
        std::vector<std::size_t> offsets;
        if (side >= length) {
            offsets.push_back(0);
            return offsets;
        }
        const double slack = double(length - side);
        const std::size_t n =
            static_cast<std::size_t>(std::ceil(slack / (0.6 * double(side)))) +
            1;
        for (std::size_t i = 0; i < n; ++i)
            offsets.push_back(static_cast<std::size_t>(
                std::floor(slack * double(i) / double(n - 1) + 0.5)));
        return offsets;
    };

    std::vector<Region> regions;
    for (std::size_t l = 1; l <= levels; ++l) {
        const std::size_t side = (2 * short_side) / (l + 1);
        if (side == 0)
            throw_error(ErrorCode::degenerate_geometry,
                        "rmac: region side rounds to 0 at level " +
                            std::to_string(l));
        for (std::size_t y : axis_offsets(height, side))
            for (std::size_t x : axis_offsets(width, side))
                regions.push_back(Region{y, x, side});
    }
    return regions;
}

Descriptor rmac(const FeatureMap& f, std::size_t levels) {
    f.validate();
    const auto regions = rmac_regions(f.height, f.width, levels);
    const std::size_t npos = f.positions();

    std::vector<float> sum(f.channels, 0.0f);
    std::vector<float> region_max(f.channels);
    for (const Region& r : regions) {
        for (std::size_t c = 0; c < f.channels; ++c) {
            const float* plane = f.data.data() + c * npos;
            float m = -std::numeric_limits<float>::infinity();
            for (std::size_t y = r.y0; y < r.y0 + r.side; ++y)
                for (std::size_t x = r.x0; x < r.x0 + r.side; ++x)
                    m = std::max(m, plane[y * f.width + x]);
            region_max[c] = m;
        }
        l2_normalize(region_max);  // zero-max regions stay zero
        for (std::size_t c = 0; c < f.channels; ++c) sum[c] += region_max[c];
    }
    return make_descriptor(std::move(sum));
}

MatrixF netvlad_assignments(const FeatureMap& f, const VladParams& params) {
    params.validate();
    if (params.channels != f.channels)
        throw_error(ErrorCode::dimension_mismatch,
                    "netvlad: channel mismatch (map " +
                        std::to_string(f.channels) + ", params " +
                        std::to_string(params.channels) + ")");
    const std::size_t npos = f.positions();
    const std::size_t K = params.clusters;

    MatrixF assign(K, npos);
    std::vector<double> logits(K);
    for (std::size_t i = 0; i < npos; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            const float* w = params.assign_weights.row(k);
            double acc = params.assign_bias[k];
            for (std::size_t c = 0; c < f.channels; ++c)
                acc += double(w[c]) * f.data[c * npos + i];
            logits[k] = acc;
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            logits[k] = std::exp(logits[k] - mx);
            denom += logits[k];
        }
        for (std::size_t k = 0; k < K; ++k)
            assign.at(k, i) = static_cast<float>(logits[k] / denom);
    }
    return assign;
}

Descriptor netvlad(const FeatureMap& f, const VladParams& params,
                   std::vector<std::uint8_t>* zero_blocks) {
    f.validate();
    const MatrixF assign = netvlad_assignments(f, params);
    const std::size_t npos = f.positions();
    const std::size_t K = params.clusters;
    const std::size_t C = f.channels;

    if (zero_blocks) zero_blocks->assign(K, 0);
    std::vector<float> out(K * C, 0.0f);
    for (std::size_t k = 0; k < K; ++k) {
        std::span<float> vk(out.data() + k * C, C);
        const float* ck = params.centroids.row(k);
        const float* ak = assign.row(k);
        for (std::size_t i = 0; i < npos; ++i) {
            const float a = ak[i];
            for (std::size_t c = 0; c < C; ++c)
                vk[c] += a * (f.data[c * npos + i] - ck[c]);
        }
        // intra-normalization; zero residual blocks stay zero
        if (!l2_normalize(vk) && zero_blocks) (*zero_blocks)[k] = 1;
    }
    return make_descriptor(std::move(out));
}

Descriptor seqpool(const TokenMatrix& t, std::span<const float> attn_weights) {
    t.validate();
    if (attn_weights.size() != t.dim)
        throw_error(ErrorCode::dimension_mismatch,
                    "seqpool: attention weight dim mismatch");
    const std::size_t start = t.cls_present ? 1 : 0;
    const std::size_t n = t.n_tokens - start;

    std::vector<double> scores(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const float* tok = t.data.row(start + i);
        double acc = 0.0;
        for (std::size_t j = 0; j < t.dim; ++j)
            acc += double(attn_weights[j]) * tok[j];
        scores[i] = acc;
        mx = std::max(mx, acc);
    }
    double denom = 0.0;
    for (double& s : scores) {
        s = std::exp(s - mx);
        denom += s;
    }

    std::vector<float> out(t.dim, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        const float w = static_cast<float>(scores[i] / denom);
        const float* tok = t.data.row(start + i);
        for (std::size_t j = 0; j < t.dim; ++j) out[j] += w * tok[j];
    }
    return make_descriptor(std::move(out));
}

Descriptor cls_token(const TokenMatrix& t) {
    t.validate();
    if (!t.cls_present)
        throw_error(ErrorCode::missing_cls, "cls_token: no CLS token");
    std::vector<float> out(t.data.row(0), t.data.row(0) + t.dim);
    return make_descriptor(std::move(out));
}

Descriptor linear_project(const Descriptor& d, const MatrixF& weights,
                          std::span<const float> bias) {
    if (weights.cols != d.dim())
        throw_error(ErrorCode::dimension_mismatch,
                    "linear_project: weight cols " +
                        std::to_string(weights.cols) + " != input dim " +
                        std::to_string(d.dim()));
    if (bias.size() != weights.rows)
        throw_error(ErrorCode::dimension_mismatch,
                    "linear_project: bias size mismatch");
    std::vector<float> out(weights.rows);
    for (std::size_t r = 0; r < weights.rows; ++r) {
        const float* w = weights.row(r);
        double acc = bias[r];
        for (std::size_t c = 0; c < weights.cols; ++c)
            acc += double(w[c]) * d.values[c];
        out[r] = static_cast<float>(acc);
    }
    return make_descriptor(std::move(out));
}

MatrixF random_orthogonal(std::size_t out_dim, std::size_t in_dim,
                          std::uint64_t seed) {
    if (out_dim > in_dim)
        throw_error(ErrorCode::invalid_parameter,
                    "random_orthogonal: out_dim must be <= in_dim");
    Rng rng(seed);
    MatrixF w(out_dim, in_dim);
    // Gram-Schmidt on Gaussian rows
    for (std::size_t r = 0; r < out_dim; ++r) {
        for (;;) {
            for (std::size_t c = 0; c < in_dim; ++c)
                w.at(r, c) = static_cast<float>(rng.gaussian());
            for (std::size_t prev = 0; prev < r; ++prev) {
                double dot = 0.0;
                for (std::size_t c = 0; c < in_dim; ++c)
                    dot += double(w.at(r, c)) * w.at(prev, c);
                for (std::size_t c = 0; c < in_dim; ++c)
                    w.at(r, c) -= static_cast<float>(dot * w.at(prev, c));
            }
            if (l2_normalize(w.row_span(r))) break;  // retry on degeneracy
        }
    }
    return w;
}

/***************************************************
 * Container IO
 ***************************************************/

void write_feature_maps(const std::string& path, const FeatureMapSet& set) {
    if (set.ids.size() != set.maps.size())
        throw_error(ErrorCode::invalid_input,
                    "feature map set: ids/maps mismatch");
    Container c;
    std::vector<std::uint64_t> dims;
    dims.reserve(set.maps.size() * 3);
    for (const FeatureMap& f : set.maps) {
        f.validate();
        dims.push_back(f.channels);
        dims.push_back(f.height);
        dims.push_back(f.width);
    }
    c.sections.push_back(Section::from_u64("fmapdims", set.maps.size(), 3,
                                           std::span<const std::uint64_t>(dims)));
    c.sections.push_back(Section::from_u64(
        "itemids", set.ids.size(), 1, std::span<const std::uint64_t>(set.ids)));
    for (const FeatureMap& f : set.maps)
        c.sections.push_back(Section::from_f32(
            "fmap", f.channels, static_cast<std::uint32_t>(f.positions()),
            std::span<const float>(f.data)));
    write_vgbd(path, c);
}

FeatureMapSet read_feature_maps(const std::string& path) {
    const Container c = read_vgbd(path);
    const Section& dims_sec = c.require("fmapdims");
    if (dims_sec.cols != 3)
        throw_error(ErrorCode::format, path + ": fmapdims must have 3 columns");
    const auto dims = dims_sec.as_u64();
    const auto maps = c.find_all("fmap");
    if (maps.size() != dims_sec.rows)
        throw_error(ErrorCode::format,
                    path + ": fmap section count != fmapdims rows");

    FeatureMapSet set;
    const auto idspan = c.require("itemids").as_u64();
    set.ids.assign(idspan.begin(), idspan.end());
    if (set.ids.size() != maps.size())
        throw_error(ErrorCode::format, path + ": itemids/fmap count mismatch");
    for (std::size_t i = 0; i < maps.size(); ++i) {
        FeatureMap f;
        f.channels = dims[i * 3];
        f.height = dims[i * 3 + 1];
        f.width = dims[i * 3 + 2];
        if (maps[i]->rows != f.channels ||
            maps[i]->cols != f.height * f.width)
            throw_error(ErrorCode::format,
                        path + ": fmap section dims disagree with fmapdims");
        const auto data = maps[i]->as_f32();
        f.data.assign(data.begin(), data.end());
        f.validate();
        set.maps.push_back(std::move(f));
    }
    return set;
}

void write_token_sets(const std::string& path, const TokenSet& set) {
    if (set.ids.size() != set.tokens.size())
        throw_error(ErrorCode::invalid_input, "token set: ids/tokens mismatch");
    Container c;
    std::vector<std::uint64_t> dims;
    dims.reserve(set.tokens.size() * 3);
    for (const TokenMatrix& t : set.tokens) {
        t.validate();
        dims.push_back(t.n_tokens);
        dims.push_back(t.dim);
        dims.push_back(t.cls_present ? 1 : 0);
    }
    c.sections.push_back(Section::from_u64("tokdims", set.tokens.size(), 3,
                                           std::span<const std::uint64_t>(dims)));
    c.sections.push_back(Section::from_u64(
        "itemids", set.ids.size(), 1, std::span<const std::uint64_t>(set.ids)));
    for (const TokenMatrix& t : set.tokens)
        c.sections.push_back(Section::from_f32(
            "tokens", t.n_tokens, static_cast<std::uint32_t>(t.dim),
            std::span<const float>(t.data.data)));
    write_vgbd(path, c);
}

TokenSet read_token_sets(const std::string& path) {
    const Container c = read_vgbd(path);
    const Section& dims_sec = c.require("tokdims");
    if (dims_sec.cols != 3)
        throw_error(ErrorCode::format, path + ": tokdims must have 3 columns");
    const auto dims = dims_sec.as_u64();
    const auto toks = c.find_all("tokens");
    if (toks.size() != dims_sec.rows)
        throw_error(ErrorCode::format,
                    path + ": tokens section count != tokdims rows");

    TokenSet set;
    const auto idspan = c.require("itemids").as_u64();
    set.ids.assign(idspan.begin(), idspan.end());
    if (set.ids.size() != toks.size())
        throw_error(ErrorCode::format, path + ": itemids/tokens count mismatch");
    for (std::size_t i = 0; i < toks.size(); ++i) {
        TokenMatrix t;
        t.n_tokens = dims[i * 3];
        t.dim = dims[i * 3 + 1];
        t.cls_present = dims[i * 3 + 2] != 0;
        if (toks[i]->rows != t.n_tokens || toks[i]->cols != t.dim)
            throw_error(ErrorCode::format,
                        path + ": tokens section dims disagree with tokdims");
        t.data = MatrixF(t.n_tokens, t.dim);
        const auto data = toks[i]->as_f32();
        std::copy(data.begin(), data.end(), t.data.data.begin());
        t.validate();
        set.tokens.push_back(std::move(t));
    }
    return set;
}

void write_vlad_params(const std::string& path, const VladParams& p) {
    p.validate();
    Container c;
    c.sections.push_back(Section::from_f32(
        "centroids", p.clusters, static_cast<std::uint32_t>(p.channels),
        std::span<const float>(p.centroids.data)));
    c.sections.push_back(Section::from_f32(
        "assign_w", p.clusters, static_cast<std::uint32_t>(p.channels),
        std::span<const float>(p.assign_weights.data)));
    c.sections.push_back(Section::from_f32(
        "assign_b", 1, static_cast<std::uint32_t>(p.clusters),
        std::span<const float>(p.assign_bias)));
    write_vgbd(path, c);
}

VladParams read_vlad_params(const std::string& path) {
    const Container c = read_vgbd(path);
    const Section& cent = c.require("centroids");
    const Section& w = c.require("assign_w");
    const Section& b = c.require("assign_b");
    VladParams p;
    p.clusters = cent.rows;
    p.channels = cent.cols;
    p.centroids = MatrixF(cent.rows, cent.cols);
    auto data = cent.as_f32();
    std::copy(data.begin(), data.end(), p.centroids.data.begin());
    p.assign_weights = MatrixF(w.rows, w.cols);
    data = w.as_f32();
    std::copy(data.begin(), data.end(), p.assign_weights.data.begin());
    data = b.as_f32();
    p.assign_bias.assign(data.begin(), data.end());
    p.validate();
    return p;
}

}  // namespace vgb
