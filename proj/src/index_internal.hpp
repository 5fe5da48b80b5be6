// Internals shared by the index translation units.

#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "vgbench/index.hpp"

namespace vgb {
namespace detail {

inline bool hit_less(const Hit& a, const Hit& b) {
    if (a.sq_distance != b.sq_distance) return a.sq_distance < b.sq_distance;
    return a.id < b.id;
}

// Bounded selection of the k smallest (distance, id) pairs; max-heap keeps
// the current worst on top.
struct TopK {
    std::size_t k;
    std::vector<Hit> heap;

    explicit TopK(std::size_t k_) : k(k_) { heap.reserve(k_ + 1); }

    void offer(std::uint64_t id, float d) {
        const Hit h{id, d};
        if (heap.size() < k) {
            heap.push_back(h);
            std::push_heap(heap.begin(), heap.end(), hit_less);
        } else if (hit_less(h, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), hit_less);
            heap.back() = h;
            std::push_heap(heap.begin(), heap.end(), hit_less);
        }
    }

    std::vector<Hit> finish() {
        std::sort_heap(heap.begin(), heap.end(), hit_less);
        return std::move(heap);
    }
};

void check_query(std::span<const float> q, std::size_t dim, std::size_t k);

std::unique_ptr<Index> build_hnsw(const DescriptorSet& set,
                                  const IndexConfig& cfg);
std::unique_ptr<Index> load_hnsw(const Container& c, const IndexConfig& cfg,
                                 std::size_t dim, std::size_t n);

}  // namespace detail
}  // namespace vgb
