#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vgb {

/***************************************************
 * Errors
 ***************************************************/

enum class ErrorCode {
    invalid_input,
    invalid_parameter,
    dimension_mismatch,
    insufficient_data,
    no_positive,
    insufficient_pool,
    missing_cls,
    missing_heading,
    degenerate_geometry,
    out_of_range,
    format,
    collision,
    io,
    config,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
   public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}

    ErrorCode code() const { return code_; }

   private:
    ErrorCode code_;
};

[[noreturn]] inline void throw_error(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

/***************************************************
 * Seeded PRNG
 *
 * splitmix64 for seeding / stream derivation, xoshiro256** for draws.
 * Self-contained so that seeded runs are reproducible across platforms
 * (std::mt19937 distributions are not portable bit-for-bit).
 ***************************************************/

struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
};

class Rng {
   public:
    explicit Rng(std::uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& s : s_) s = sm.next();
        has_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [0, bound) without modulo bias.
    std::uint64_t bounded(std::uint64_t bound) {
        if (bound == 0) throw_error(ErrorCode::invalid_parameter, "bounded(0)");
        const std::uint64_t threshold = -bound % bound;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    /// Standard normal draw (Box-Muller, deterministic given the stream).
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Derive an independent deterministic substream.
    Rng fork(std::uint64_t tag) {
        SplitMix64 sm(next_u64() ^ (tag * 0x9e3779b97f4a7c15ull));
        return Rng(sm.next());
    }

   private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
    bool has_spare_;
    double spare_;
};

/// Deterministic per-item seed derivation (e.g. per-query mining draws).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    SplitMix64 sm(seed ^ (tag * 0xd1342543de82ef95ull));
    return sm.next();
}

/***************************************************
 * Dense row-major float matrix
 ***************************************************/

struct MatrixF {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;  // row-major, rows*cols

    MatrixF() = default;
    MatrixF(std::size_t r, std::size_t c)
        : rows(r), cols(c), data(r * c, 0.0f) {}

    float* row(std::size_t i) { return data.data() + i * cols; }
    const float* row(std::size_t i) const { return data.data() + i * cols; }

    std::span<float> row_span(std::size_t i) { return {row(i), cols}; }
    std::span<const float> row_span(std::size_t i) const {
        return {row(i), cols};
    }

    float& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    float at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/***************************************************
 * Pipeline currency types
 ***************************************************/

/// Fixed-size global descriptor. `normalized` is false for degenerate
/// zero-norm outputs that could not be scaled to unit length.
struct Descriptor {
    std::vector<float> values;
    bool normalized = false;

    std::size_t dim() const { return values.size(); }
};

/// Id-aligned matrix of global descriptors.
struct DescriptorSet {
    std::vector<std::uint64_t> ids;
    MatrixF matrix;  // n x dim
    bool normalized = false;

    std::size_t size() const { return matrix.rows; }
    std::size_t dim() const { return matrix.cols; }

    void check_consistent() const;
};

struct Hit {
    std::uint64_t id;
    float sq_distance;
};

/// Top-k result for one query; hits ascend by (sq_distance, id).
struct SearchResult {
    std::uint64_t query_id = 0;
    std::vector<Hit> hits;
    std::size_t k_requested = 0;
};

/// Wall-clock and memory accounting attached to search/eval outputs.
struct TimingReport {
    std::optional<double> t_e_ms;  // extraction time per image
    double t_m_ms = 0.0;           // matching time for the whole batch
    std::uint64_t memory_bytes = 0;

    std::optional<double> t_i_ms() const {
        if (!t_e_ms) return std::nullopt;
        return *t_e_ms + t_m_ms;
    }
};

}  // namespace vgb
