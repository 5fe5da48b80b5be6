// Nearest-neighbor search structures behind one contract: exhaustive flat
// scan, IVF, PQ with asymmetric distances, IVFPQ over residuals, the
// inverted multi-index, and HNSW. Built indexes are immutable; searches are
// const and safe to run concurrently.
//
// All randomized build steps (quantizer training, HNSW level draws) take
// their randomness from IndexConfig::seed, so equal seeds give identical
// indexes and memory_footprint is exactly reproducible.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vgbench/common.hpp"
#include "vgbench/dataio.hpp"
#include "vgbench/numerics.hpp"

namespace vgb {

enum class IndexKind : std::uint8_t {
    flat = 0,
    ivf = 1,
    pq = 2,
    ivfpq = 3,
    multiindex = 4,
    hnsw = 5,
};

const char* index_kind_name(IndexKind k);
IndexKind index_kind_from_name(const std::string& name);

struct IndexConfig {
    IndexKind kind = IndexKind::flat;

    // ivf / ivfpq
    std::size_t nlist = 64;
    std::size_t nprobe = 8;

    // pq / ivfpq
    std::size_t m_sub = 8;
    std::size_t nbits = 8;  // 4 or 8

    // multiindex
    std::size_t k_half = 16;

    // hnsw
    std::size_t m_links = 16;
    std::size_t ef_construction = 100;
    std::size_t ef_search = 50;

    std::uint64_t seed = 0;
    std::size_t train_iters = 20;  // Lloyd iterations for quantizer training

    void validate(std::size_t dim) const;

    // bytes of one PQ code (m_sub * nbits / 8)
    std::size_t code_bytes() const { return m_sub * nbits / 8; }
    std::size_t ksub() const { return std::size_t(1) << nbits; }
};

// Per-query search-time overrides; unset fields fall back to the config the
// index was built with.
struct SearchParams {
    std::optional<std::size_t> nprobe;
    std::optional<std::size_t> ef_search;
};

// Itemized analytic footprint (not process RSS). `vectors` is raw stored
// vectors, `codes` quantized codes, `centroids` every trained codebook,
// `links` graph adjacency, `tables` id lists and structural offsets.
struct FootprintBreakdown {
    std::uint64_t vectors = 0;
    std::uint64_t ids = 0;
    std::uint64_t codes = 0;
    std::uint64_t centroids = 0;
    std::uint64_t links = 0;
    std::uint64_t tables = 0;

    std::uint64_t total() const {
        return vectors + ids + codes + centroids + links + tables;
    }
};

// Analytic footprint for a hypothetical build of n vectors (no allocation).
// HNSW is excluded: its link count depends on the constructed graph.
FootprintBreakdown planned_footprint(const IndexConfig& cfg, std::uint64_t n,
                                     std::size_t dim);

struct Index {
    IndexConfig cfg;
    std::size_t dim = 0;
    std::size_t n = 0;

    virtual ~Index() = default;

    virtual SearchResult search_one(std::span<const float> q, std::size_t k,
                                    const SearchParams& params) const = 0;

    std::vector<SearchResult> search(const DescriptorSet& queries,
                                     std::size_t k,
                                     const SearchParams& params = {}) const;

    // Batch search with wall-clock matching time and footprint attached.
    std::vector<SearchResult> search_timed(const DescriptorSet& queries,
                                           std::size_t k, TimingReport& timing,
                                           const SearchParams& params = {}) const;

    virtual FootprintBreakdown memory_breakdown() const = 0;
    std::uint64_t memory_footprint() const { return memory_breakdown().total(); }

    virtual void save_sections(Container& c) const = 0;
};

/***************************************************
 * Concrete structures. Fields are public so tests and tools can inspect
 * the trained state (list membership, codes, graph degrees).
 ***************************************************/

struct IndexFlat : Index {
    std::vector<std::uint64_t> ids;
    MatrixF vectors;  // n x dim

    SearchResult search_one(std::span<const float> q, std::size_t k,
                            const SearchParams& params) const override;
    FootprintBreakdown memory_breakdown() const override;
    void save_sections(Container& c) const override;
};

struct IndexIvf : Index {
    MatrixF coarse;                       // nlist x dim
    std::vector<std::uint64_t> offsets;   // nlist+1 into grouped arrays
    std::vector<std::uint64_t> list_ids;  // n, grouped by list
    MatrixF list_vectors;                 // n x dim, grouped by list

    SearchResult search_one(std::span<const float> q, std::size_t k,
                            const SearchParams& params) const override;
    FootprintBreakdown memory_breakdown() const override;
    void save_sections(Container& c) const override;
};

struct IndexPq : Index {
    std::vector<std::uint64_t> ids;
    MatrixF codebooks;                // (m_sub*ksub) x dsub
    std::vector<std::uint8_t> codes;  // n * code_bytes

    std::size_t dsub() const { return dim / cfg.m_sub; }

    // ADC lookup table for one query: m_sub * ksub entries.
    void build_lut(std::span<const float> q, std::vector<float>& lut) const;
    float adc_distance(const std::uint8_t* code,
                       const std::vector<float>& lut) const;

    SearchResult search_one(std::span<const float> q, std::size_t k,
                            const SearchParams& params) const override;
    FootprintBreakdown memory_breakdown() const override;
    void save_sections(Container& c) const override;
};

struct IndexIvfPq : Index {
    MatrixF coarse;                        // nlist x dim
    MatrixF codebooks;                     // (m_sub*ksub) x dsub, residual space
    std::vector<std::uint64_t> offsets;    // nlist+1
    std::vector<std::uint64_t> list_ids;   // n, grouped by list
    std::vector<std::uint8_t> list_codes;  // n * code_bytes, grouped by list

    std::size_t dsub() const { return dim / cfg.m_sub; }

    SearchResult search_one(std::span<const float> q, std::size_t k,
                            const SearchParams& params) const override;
    FootprintBreakdown memory_breakdown() const override;
    void save_sections(Container& c) const override;
};

// Instrumentation for the multi-sequence traversal: cells in visit order
// with their summed half-distances.
struct MultiIndexTrace {
    struct CellVisit {
        std::size_t cell1;  // first-half centroid index
        std::size_t cell2;  // second-half centroid index
        float sum_dist;
        std::size_t n_items;
    };
    std::vector<CellVisit> visits;
};

struct IndexMulti : Index {
    MatrixF half1;                        // k_half x dim/2
    MatrixF half2;                        // k_half x dim/2
    std::vector<std::uint64_t> offsets;   // k_half^2 + 1, cell = c1*k_half + c2
    std::vector<std::uint64_t> list_ids;  // n, grouped by cell
    MatrixF list_vectors;                 // n x dim, grouped by cell

    static std::size_t candidate_cap(std::size_t k) {
        return std::max<std::size_t>(8 * k, 256);
    }

    SearchResult search_one(std::span<const float> q, std::size_t k,
                            const SearchParams& params) const override;
    SearchResult search_traced(std::span<const float> q, std::size_t k,
                               MultiIndexTrace* trace) const;
    FootprintBreakdown memory_breakdown() const override;
    void save_sections(Container& c) const override;
};

struct IndexHnsw : Index {
    std::vector<std::uint64_t> ids;
    MatrixF vectors;  // n x dim, insertion order

    // adjacency per node and layer; layer count = level[i]+1
    std::vector<std::vector<std::vector<std::uint32_t>>> links;
    std::vector<std::uint32_t> levels;
    std::int64_t entry_point = -1;
    int max_level = -1;

    std::size_t max_links(std::size_t layer) const {
        return layer == 0 ? 2 * cfg.m_links : cfg.m_links;
    }

    SearchResult search_one(std::span<const float> q, std::size_t k,
                            const SearchParams& params) const override;
    FootprintBreakdown memory_breakdown() const override;
    void save_sections(Container& c) const override;
};

std::unique_ptr<Index> build_index(const DescriptorSet& set,
                                   const IndexConfig& cfg);

void save_index(const std::string& path, const Index& index);
std::unique_ptr<Index> load_index(const std::string& path);

// Fraction of queries whose exact top-1 (brute force over `base`) appears in
// the index's top-k.
double recall_vs_exact(const Index& index, const DescriptorSet& base,
                       const DescriptorSet& queries, std::size_t k,
                       const SearchParams& params = {});

}  // namespace vgb
