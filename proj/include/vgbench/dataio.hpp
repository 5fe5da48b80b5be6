#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vgbench/common.hpp"
#include "vgbench/numerics.hpp"

namespace vgb {

/***************************************************
 * VGBD binary container
 *
 * Layout (all little-endian):
 *   magic "VGBD" | u16 version=1 | u16 flags | u32 section_count
 *   per section: 8-byte ASCII role tag (space padded) | u64 rows |
 *                u32 cols | u8 dtype | payload, row-major
 * dtype: 0 = f32, 1 = u64, 2 = u8
 ***************************************************/

enum class DType : std::uint8_t { f32 = 0, u64 = 1, u8 = 2 };

std::size_t dtype_size(DType t);

struct Section {
    std::string role;  // <= 8 ASCII chars
    std::uint64_t rows = 0;
    std::uint32_t cols = 0;
    DType dtype = DType::f32;
    std::vector<std::uint8_t> payload;

    static Section from_f32(const std::string& role, std::uint64_t rows,
                            std::uint32_t cols, std::span<const float> data);
    static Section from_u64(const std::string& role, std::uint64_t rows,
                            std::uint32_t cols,
                            std::span<const std::uint64_t> data);
    static Section from_u8(const std::string& role, std::uint64_t rows,
                           std::uint32_t cols,
                           std::span<const std::uint8_t> data);

    std::span<const float> as_f32() const;
    std::span<const std::uint64_t> as_u64() const;
    std::span<const std::uint8_t> as_u8() const;
};

struct Container {
    std::vector<Section> sections;

    const Section* find(const std::string& role) const;
    const Section& require(const std::string& role) const;
    std::vector<const Section*> find_all(const std::string& role) const;
};

/// Atomic write (temp file + rename), byte-exact round trip with read_vgbd.
void write_vgbd(const std::string& path, const Container& c);
Container read_vgbd(const std::string& path);

/// Descriptor sets travel as two sections: "desc" (f32 n x dim) and
/// "ids" (u64 n x 1).
void write_descriptor_set(const std::string& path, const DescriptorSet& set);
DescriptorSet read_descriptor_set(const std::string& path);
DescriptorSet descriptor_set_from(const Container& c);
void append_descriptor_sections(Container& c, const DescriptorSet& set);

/// Per-crop descriptor sets sharing one id table: one "desc" section per
/// crop in crop order, plus "ids" and "normflag". A single-crop file is
/// readable by read_descriptor_set and vice versa.
void write_crop_descriptor_sets(const std::string& path,
                                const std::vector<DescriptorSet>& per_crop);
std::vector<DescriptorSet> read_crop_descriptor_sets(const std::string& path);

/// PCA models travel as "mean" (1 x dim), "comps" (out x dim), "eigvals"
/// (1 x out) and "pcameta" (u64 1 x 1: whiten flag).
void write_pca_model(const std::string& path, const PcaModel& model);
PcaModel read_pca_model(const std::string& path);

/***************************************************
 * Manifests (CSV: id,lat,lon,heading,split)
 ***************************************************/

enum class Split { database, query };

struct ManifestRow {
    std::uint64_t id = 0;
    double lat_deg = 0.0;
    double lon_deg = 0.0;
    std::optional<double> heading_deg;
    Split split = Split::database;
};

struct Manifest {
    std::vector<ManifestRow> rows;
};

Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& m);

/***************************************************
 * Synthetic dataset generation
 *
 * Places get centers inside the bbox; database and query items of a place
 * share a descriptor prototype plus Gaussian jitter and lie within
 * place_spread_m of the center. confusion_rate pairs distant places by
 * giving them identical prototypes (planted hard negatives).
 ***************************************************/

struct BBox {
    double lat_min = 45.0;
    double lat_max = 45.09;
    double lon_min = 7.6;
    double lon_max = 7.7;
};

struct SynthSpec {
    std::size_t n_db = 1000;
    std::size_t n_q = 100;
    std::size_t dim = 64;
    std::size_t n_places = 100;
    double place_spread_m = 8.0;
    double descriptor_noise = 0.05;
    double confusion_rate = 0.0;
    BBox bbox;
    std::uint64_t seed = 0;
};

struct SynthDataset {
    Manifest manifest;  // database rows first, then query rows
    DescriptorSet db;
    DescriptorSet queries;
};

SynthDataset synth_generate(const SynthSpec& spec);

/***************************************************
 * Search results (JSON lines {"query": u64, "hits": [[id, sq_dist], ...]})
 ***************************************************/

void write_results(const std::string& path,
                   const std::vector<SearchResult>& results);
std::vector<SearchResult> read_results(const std::string& path);

}  // namespace vgb
