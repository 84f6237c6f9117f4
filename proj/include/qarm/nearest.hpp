#pragma once

#include <optional>
#include <vector>

#include "qarm/kmeans.hpp"
#include "qarm/mat.hpp"

namespace qarm {

enum class Metric { SquaredL2, Cosine };

// Exhaustive top-k scan over the rows of C. Results come back best-first
// (ascending squared-L2 or descending cosine) with ties broken by
// ascending row index. The optional exclude skips one row, which callers
// use for self-exclusion.
std::vector<std::size_t> nearest_indices(
    const Mat& C, std::span<const double> q, std::size_t k, Metric metric,
    std::optional<std::size_t> exclude = std::nullopt);

inline std::vector<std::size_t> nearest_indices(
    const Centroids& C, std::span<const double> q, std::size_t k,
    Metric metric, std::optional<std::size_t> exclude = std::nullopt) {
  return nearest_indices(C.data, q, k, metric, exclude);
}

}  // namespace qarm
