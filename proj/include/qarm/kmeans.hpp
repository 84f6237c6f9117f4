#pragma once

#include <cstdint>
#include <vector>

#include "qarm/mat.hpp"

namespace qarm {

// One fitted set of k-means centroids. iter_inertia records the inertia
// after every Lloyd iteration (non-increasing by construction), which the
// tests assert on.
struct Centroids {
  std::size_t k = 0;
  std::size_t d = 0;
  Mat data;                          // k x d
  double inertia = 0.0;              // sum of squared distances at the end
  std::vector<double> iter_inertia;  // per-iteration trace
  std::uint64_t seed = 0;
};

// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded
// from the point farthest from its current centroid. Stops when the
// inertia improvement drops below tol, the assignment reaches a fixed
// point, or max_iters is hit. Bit-deterministic for fixed (X, k, seed).
Centroids kmeans_fit(const Mat& X, std::size_t k, std::size_t max_iters,
                     double tol, std::uint64_t seed);

}  // namespace qarm
