#include "qarm/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "qarm/errors.hpp"

namespace qarm {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: size mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("auc: labels must be 0/1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedMetric("auc: needs at least one positive and one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Tie-averaged ranks (1-based).
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

template <typename WeightFn>
double per_user_mean(const std::vector<UserGroup>& users, std::size_t* skipped,
                     WeightFn weight) {
  double num = 0.0, den = 0.0;
  std::size_t skip = 0;
  for (const auto& u : users) {
    bool has_pos = false, has_neg = false;
    for (int y : u.labels) (y == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
      ++skip;
      continue;
    }
    const double w = weight(u);
    num += w * auc(u.scores, u.labels);
    den += w;
  }
  if (skipped) *skipped = skip;
  if (den == 0.0)
    throw UndefinedMetric("per-user AUC: no user has both classes");
  return num / den;
}

}  // namespace

double uauc(const std::vector<UserGroup>& users, std::size_t* skipped) {
  return per_user_mean(users, skipped, [](const UserGroup&) { return 1.0; });
}

double gauc(const std::vector<UserGroup>& users, std::size_t* skipped) {
  return per_user_mean(users, skipped, [](const UserGroup& u) {
    return static_cast<double>(u.scores.size());
  });
}

}  // namespace qarm
