#include "qarm/kmeans.hpp"

#include <limits>
#include <stdexcept>

#include "qarm/rng.hpp"

namespace qarm {

namespace {

// Index of the nearest centroid, ties broken by ascending index.
std::size_t nearest_centroid(std::span<const double> x, const Mat& centers,
                             std::size_t k, double* out_d2) {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d2 = squared_l2(x, centers.row(c));
    if (d2 < best_d2) {
      best_d2 = d2;
      best = c;
    }
  }
  if (out_d2) *out_d2 = best_d2;
  return best;
}

// k-means++: D^2-weighted seeding. When every remaining distance is zero
// (duplicate rows), falls back to the lowest-index unchosen point.
Mat kmeanspp_init(const Mat& X, std::size_t k, Rng& rng) {
  const std::size_t n = X.rows;
  Mat centers(k, X.cols);
  std::vector<char> chosen(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::size_t first = rng.uniform_index(n);
  std::copy(X.row(first).begin(), X.row(first).end(), centers.row(0).begin());
  chosen[first] = 1;

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_l2(X.row(i), centers.row(c - 1));
      if (d < d2[i]) d2[i] = d;
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == n) {  // numeric edge: u consumed by rounding
        for (std::size_t i = n; i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
      }
    }
    if (pick == n) {
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    if (pick == n) pick = 0;
    std::copy(X.row(pick).begin(), X.row(pick).end(), centers.row(c).begin());
    chosen[pick] = 1;
  }
  return centers;
}

}  // namespace

Centroids kmeans_fit(const Mat& X, std::size_t k, std::size_t max_iters,
                     double tol, std::uint64_t seed) {
  const std::size_t n = X.rows;
  if (k == 0 || k > n)
    throw std::invalid_argument("kmeans_fit: k must be in [1, rows]");
  if (max_iters < 1)
    throw std::invalid_argument("kmeans_fit: max_iters must be >= 1");
  if (tol < 0.0) throw std::invalid_argument("kmeans_fit: tol must be >= 0");
  if (!X.all_finite())
    throw std::invalid_argument("kmeans_fit: non-finite input");

  Rng rng(seed);
  Centroids out;
  out.k = k;
  out.d = X.cols;
  out.seed = seed;
  out.data = kmeanspp_init(X, k, rng);

  std::vector<std::size_t> assign(n, 0);
  std::vector<std::size_t> prev_assign(n, k);  // k = "unassigned" sentinel
  std::vector<double> point_d2(n, 0.0);
  std::vector<std::size_t> counts(k, 0);
  double prev_inertia = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Assignment step.
    for (std::size_t i = 0; i < n; ++i)
      assign[i] = nearest_centroid(X.row(i), out.data, k, &point_d2[i]);

    // Mean update.
    out.data.fill(0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = out.data.row(assign[i]);
      auto src = X.row(i);
      for (std::size_t j = 0; j < X.cols; ++j) dst[j] += src[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto dst = out.data.row(c);
      for (std::size_t j = 0; j < X.cols; ++j)
        dst[j] /= static_cast<double>(counts[c]);
    }

    // Re-seed empty clusters from the point farthest from its centroid,
    // never donating the same point twice in one iteration.
    std::vector<char> donated(n, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_d2 = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (donated[i]) continue;
        if (point_d2[i] > far_d2) {
          far_d2 = point_d2[i];
          far = i;
        }
      }
      if (far == n) break;
      std::copy(X.row(far).begin(), X.row(far).end(), out.data.row(c).begin());
      donated[far] = 1;
    }

    // Inertia under the updated (and possibly repaired) centroids.
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d2;
      nearest_centroid(X.row(i), out.data, k, &d2);
      inertia += d2;
    }
    out.iter_inertia.push_back(inertia);
    out.inertia = inertia;

    const bool fixed_point = (assign == prev_assign);
    const double improvement = prev_inertia - inertia;
    prev_inertia = inertia;
    prev_assign = assign;
    if (fixed_point || improvement < tol) break;
  }
  return out;
}

}  // namespace qarm
