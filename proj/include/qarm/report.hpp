#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qarm/mat.hpp"
#include "qarm/metrics.hpp"
#include "qarm/ranker.hpp"
#include "qarm/synth.hpp"

namespace qarm {

// Catalog partition into six purchase-frequency sextiles: group 0 (L1) is
// the least purchased. Counts come from cvr positives over the full log;
// ties break by item_id. Returns group per catalog index.
std::vector<int> popularity_groups(
    const InteractionLog& log, const std::vector<std::string>& item_ids,
    int n_groups = 6);

struct TaskMetrics {
  double auc = 0.0;
  double uauc = 0.0;
  double gauc = 0.0;
  std::size_t skipped_users = 0;
};

struct GroupDelta {
  std::string group;  // "L1".."L6" or "ALL"
  std::size_t rows = 0;       // evaluated impressions in the group
  bool defined = false;       // both classes present
  double auc = 0.0;
  double auc_baseline = 0.0;
  double delta = 0.0;
};

struct MetricReport {
  std::map<std::string, TaskMetrics> per_task;
  // Group deltas for the ctr task (the headline sliced metric).
  std::vector<GroupDelta> groups;
};

// Per-example predictions aligned with `examples`. probs[i][t] is the
// task-t probability. Baseline predictions drive the per-group deltas.
MetricReport evaluate_predictions(
    const std::vector<RankingExample>& examples,
    const std::vector<std::array<double, 2>>& probs,
    const std::vector<std::array<double, 2>>& baseline_probs,
    const std::vector<int>& item_groups, const std::vector<std::string>& tasks);

// CTCVR companion metric: AUC of ctr*cvr score against the conversion
// label on ctr-positive traffic. Undefined (nullopt) on single-class input.
std::optional<double> ctcvr_auc(const std::vector<RankingExample>& examples,
                                const std::vector<std::array<double, 2>>& probs);

// TSV blocks plus a flat key=value summary.
void save_report(const std::filesystem::path& path, const MetricReport& report,
                 const std::optional<double>& ctcvr);
std::map<std::string, std::string> load_report_summary(
    const std::filesystem::path& path);

// "item_id\tx\ty\tcategory\tstyle" export for external plotting.
void save_projection_tsv(const std::filesystem::path& path,
                         const std::vector<std::string>& item_ids,
                         const Mat& projected,
                         const std::vector<ItemTags>& tags);

}  // namespace qarm
