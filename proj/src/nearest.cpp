#include "qarm/nearest.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace qarm {

std::vector<std::size_t> nearest_indices(const Mat& C,
                                         std::span<const double> q,
                                         std::size_t k, Metric metric,
                                         std::optional<std::size_t> exclude) {
  if (q.size() != C.cols)
    throw std::invalid_argument("nearest_indices: dimension mismatch");
  const std::size_t candidates = C.rows - (exclude.has_value() ? 1 : 0);
  if (k == 0 || k > candidates)
    throw std::invalid_argument("nearest_indices: k out of range");

  double qn = 0.0;
  if (metric == Metric::Cosine) {
    qn = norm2(q);
    if (qn == 0.0)
      throw std::invalid_argument("nearest_indices: zero query under cosine");
  }

  // Score every row; smaller is better after sign normalization.
  std::vector<double> score(C.rows);
  for (std::size_t r = 0; r < C.rows; ++r) {
    if (metric == Metric::SquaredL2) {
      score[r] = squared_l2(q, C.row(r));
    } else {
      const double rn = norm2(C.row(r));
      if (rn == 0.0)
        throw std::invalid_argument("nearest_indices: zero row under cosine");
      score[r] = -dot(q, C.row(r)) / (qn * rn);
    }
  }

  std::vector<std::size_t> order(C.rows);
  std::iota(order.begin(), order.end(), 0);
  if (exclude.has_value())
    order.erase(std::remove(order.begin(), order.end(), *exclude),
                order.end());
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] < score[b];
    return a < b;
  });
  order.resize(k);
  return order;
}

}  // namespace qarm
