#pragma once

#include <span>
#include <vector>

namespace qarm {

// Mann-Whitney AUC via tie-averaged rank sums, O(n log n). Ties between a
// positive and a negative contribute 0.5. Throws UndefinedMetric when the
// labels are single-class.
double auc(std::span<const double> scores, std::span<const int> labels);

struct UserGroup {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Unweighted mean of per-user AUC over users with both classes present.
// Skipped (single-class) users are counted into *skipped when provided.
double uauc(const std::vector<UserGroup>& users, std::size_t* skipped = nullptr);

// Sample-count-weighted per-user AUC; weights renormalized over the valid
// users only.
double gauc(const std::vector<UserGroup>& users, std::size_t* skipped = nullptr);

}  // namespace qarm
