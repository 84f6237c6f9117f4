#include "qarm/report.hpp"

#include <algorithm>
#include <numeric>

#include "qarm/errors.hpp"
#include "qarm/tsv.hpp"

namespace qarm {

std::vector<int> popularity_groups(const InteractionLog& log,
                                   const std::vector<std::string>& item_ids,
                                   int n_groups) {
  std::map<std::string, std::size_t> purchases;
  for (const auto& id : item_ids) purchases[id] = 0;
  for (const auto& r : log.rows)
    if (r.cvr == 1) {
      const auto it = purchases.find(r.item_id);
      if (it != purchases.end()) ++it->second;
    }

  std::vector<std::size_t> order(item_ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const std::size_t ca = purchases.at(item_ids[a]),
                      cb = purchases.at(item_ids[b]);
    if (ca != cb) return ca < cb;
    return item_ids[a] < item_ids[b];
  });

  std::vector<int> groups(item_ids.size(), 0);
  const std::size_t n = item_ids.size();
  for (std::size_t rank = 0; rank < n; ++rank)
    groups[order[rank]] =
        static_cast<int>((rank * static_cast<std::size_t>(n_groups)) / n);
  return groups;
}

namespace {

double auc_or_nan(std::span<const double> scores, std::span<const int> labels,
                  bool* defined) {
  try {
    const double v = auc(scores, labels);
    if (defined) *defined = true;
    return v;
  } catch (const UndefinedMetric&) {
    if (defined) *defined = false;
    return 0.0;
  }
}

}  // namespace

MetricReport evaluate_predictions(
    const std::vector<RankingExample>& examples,
    const std::vector<std::array<double, 2>>& probs,
    const std::vector<std::array<double, 2>>& baseline_probs,
    const std::vector<int>& item_groups,
    const std::vector<std::string>& tasks) {
  if (examples.size() != probs.size() ||
      examples.size() != baseline_probs.size())
    throw std::invalid_argument("evaluate_predictions: size mismatch");

  MetricReport report;
  for (std::size_t t = 0; t < tasks.size() && t < 2; ++t) {
    std::vector<double> scores(examples.size());
    std::vector<int> labels(examples.size());
    std::map<std::size_t, UserGroup> by_user;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      scores[i] = probs[i][t];
      labels[i] = tasks[t] == "cvr" ? examples[i].y_cvr : examples[i].y_ctr;
      auto& ug = by_user[examples[i].user_row];
      ug.scores.push_back(scores[i]);
      ug.labels.push_back(labels[i]);
    }
    std::vector<UserGroup> users;
    users.reserve(by_user.size());
    for (auto& [_, ug] : by_user) users.push_back(std::move(ug));

    TaskMetrics tm;
    tm.auc = auc(scores, labels);
    tm.uauc = uauc(users, &tm.skipped_users);
    tm.gauc = gauc(users);
    report.per_task[tasks[t]] = tm;
  }

  // ctr sliced by popularity group, plus the ALL row.
  const int n_groups =
      item_groups.empty()
          ? 0
          : *std::max_element(item_groups.begin(), item_groups.end()) + 1;
  for (int g = -1; g < n_groups; ++g) {
    std::vector<double> s, sb;
    std::vector<int> y;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (g >= 0) {
        if (examples[i].item_row == 0) continue;  // OOV has no group
        if (item_groups[examples[i].item_row - 1] != g) continue;
      }
      s.push_back(probs[i][0]);
      sb.push_back(baseline_probs[i][0]);
      y.push_back(examples[i].y_ctr);
    }
    GroupDelta gd;
    gd.group = g < 0 ? "ALL" : "L" + std::to_string(g + 1);
    gd.rows = s.size();
    bool def_a = false, def_b = false;
    gd.auc = auc_or_nan(s, y, &def_a);
    gd.auc_baseline = auc_or_nan(sb, y, &def_b);
    gd.defined = def_a && def_b;
    gd.delta = gd.defined ? gd.auc - gd.auc_baseline : 0.0;
    report.groups.push_back(std::move(gd));
  }
  return report;
}

std::optional<double> ctcvr_auc(
    const std::vector<RankingExample>& examples,
    const std::vector<std::array<double, 2>>& probs) {
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].y_ctr != 1) continue;
    s.push_back(probs[i][0] * probs[i][1]);
    y.push_back(examples[i].y_cvr);
  }
  bool defined = false;
  const double v = auc_or_nan(s, y, &defined);
  if (!defined) return std::nullopt;
  return v;
}

void save_report(const std::filesystem::path& path, const MetricReport& report,
                 const std::optional<double>& ctcvr) {
  std::string out;
  out += "# summary\n";
  for (const auto& [task, tm] : report.per_task) {
    out += task + ".auc=" + fmt_double(tm.auc) + "\n";
    out += task + ".uauc=" + fmt_double(tm.uauc) + "\n";
    out += task + ".gauc=" + fmt_double(tm.gauc) + "\n";
    out += task + ".skipped_users=" + std::to_string(tm.skipped_users) + "\n";
  }
  if (ctcvr) out += "ctcvr.auc=" + fmt_double(*ctcvr) + "\n";
  for (const auto& g : report.groups)
    if (g.group == "ALL")
      out += "group.ALL.delta=" + fmt_double(g.delta) + "\n";

  out += "# groups (ctr)\n";
  out += "group\trows\tdefined\tauc\tauc_baseline\tdelta\n";
  for (const auto& g : report.groups) {
    out += g.group + "\t" + std::to_string(g.rows) + "\t" +
           (g.defined ? "1" : "0") + "\t" + fmt_double(g.auc) + "\t" +
           fmt_double(g.auc_baseline) + "\t" + fmt_double(g.delta) + "\n";
  }
  write_text(path, out);
}

std::map<std::string, std::string> load_report_summary(
    const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  for (const auto& line : read_lines(path)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;  // group table rows
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void save_projection_tsv(const std::filesystem::path& path,
                         const std::vector<std::string>& item_ids,
                         const Mat& projected,
                         const std::vector<ItemTags>& tags) {
  if (projected.rows != item_ids.size() || projected.cols != 2)
    throw std::invalid_argument("save_projection_tsv: shape mismatch");
  std::map<std::string, const ItemTags*> tag_of;
  for (const auto& t : tags) tag_of[t.item_id] = &t;

  std::string out = "item_id\tx\ty\tcategory\tstyle\n";
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    const auto it = tag_of.find(item_ids[i]);
    const int cat = it != tag_of.end() ? it->second->category : -1;
    const int sty = it != tag_of.end() ? it->second->style : -1;
    out += item_ids[i] + "\t" + fmt_double(projected.at(i, 0)) + "\t" +
           fmt_double(projected.at(i, 1)) + "\t" + std::to_string(cat) + "\t" +
           std::to_string(sty) + "\n";
  }
  write_text(path, out);
}

}  // namespace qarm
