#include "qarm/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "qarm/rng.hpp"
#include "qarm/tsv.hpp"

namespace qarm {

namespace {

const char* source_name(PairSource s) {
  return s == PairSource::U2i ? "u2i" : "i2i";
}

PairSource parse_source(const std::string& s) {
  if (s == "u2i") return PairSource::U2i;
  if (s == "i2i") return PairSource::I2i;
  throw std::invalid_argument("pairs: unknown source " + s);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void canonical_sort(PairDataset& ds) {
  std::sort(ds.pairs.begin(), ds.pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.source != b.source) return a.source < b.source;
    if (a.trigger != b.trigger) return a.trigger < b.trigger;
    if (a.score != b.score) return a.score > b.score;
    return a.target < b.target;
  });
}

}  // namespace

IdEmbeddingModel make_initial_model(const InteractionLog& log,
                                    std::size_t d_id, std::uint64_t seed) {
  if (log.rows.empty())
    throw std::invalid_argument("id embeddings: empty log");
  if (d_id < 2) throw std::invalid_argument("id embeddings: d_id must be >= 2");

  std::set<std::string> users, items;
  for (const auto& r : log.rows) {
    users.insert(r.user_id);
    items.insert(r.item_id);
  }

  IdEmbeddingModel m;
  m.user_embeddings.ids.assign(users.begin(), users.end());
  m.item_embeddings.ids.assign(items.begin(), items.end());
  m.user_embeddings.data = Mat(users.size(), d_id);
  m.item_embeddings.data = Mat(items.size(), d_id);

  Rng rng(seed);
  for (double& v : m.user_embeddings.data.a) v = 0.1 * rng.normal();
  for (double& v : m.item_embeddings.data.a) v = 0.1 * rng.normal();
  return m;
}

IdEmbeddingModel train_id_embeddings(const InteractionLog& log,
                                     const MfConfig& cfg, std::uint64_t seed) {
  IdEmbeddingModel m = make_initial_model(log, cfg.d_id, seed);
  m.epochs = cfg.epochs;

  std::unordered_map<std::string, std::size_t> user_row, item_row;
  for (std::size_t i = 0; i < m.user_embeddings.ids.size(); ++i)
    user_row[m.user_embeddings.ids[i]] = i;
  for (std::size_t i = 0; i < m.item_embeddings.ids.size(); ++i)
    item_row[m.item_embeddings.ids[i]] = i;

  std::vector<std::pair<std::size_t, std::size_t>> positives;
  for (const auto& r : log.rows)
    if (r.ctr == 1)
      positives.emplace_back(user_row.at(r.user_id), item_row.at(r.item_id));

  const std::size_t d = cfg.d_id;
  const std::size_t n_items = m.item_embeddings.rows();
  Rng rng(seed + 1);
  std::vector<double> grad_u(d);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total_loss = 0.0;
    std::size_t terms = 0;
    for (const auto& [u, ipos] : positives) {
      auto pu = m.user_embeddings.data.row(u);
      for (std::size_t s = 0; s <= cfg.negatives; ++s) {
        const std::size_t item =
            (s == 0) ? ipos : rng.uniform_index(n_items);
        const double y = (s == 0) ? 1.0 : 0.0;
        auto qi = m.item_embeddings.data.row(item);
        const double z = dot(pu, qi);
        const double p = sigmoid(z);
        total_loss += (y > 0.5) ? -std::log(std::max(p, 1e-12))
                                : -std::log(std::max(1.0 - p, 1e-12));
        ++terms;
        const double g = p - y;  // dLoss/dz
        for (std::size_t j = 0; j < d; ++j) {
          grad_u[j] = g * qi[j];
          qi[j] -= cfg.lr * g * pu[j];
        }
        for (std::size_t j = 0; j < d; ++j) pu[j] -= cfg.lr * grad_u[j];
      }
    }
    m.loss_curve.push_back(terms ? total_loss / static_cast<double>(terms)
                                 : 0.0);
  }
  return m;
}

double mf_score(const IdEmbeddingModel& m, const std::string& user_id,
                const std::string& item_id) {
  auto find_row = [](const EmbeddingMatrix& e, const std::string& id) {
    const auto it = std::lower_bound(e.ids.begin(), e.ids.end(), id);
    if (it == e.ids.end() || *it != id)
      throw std::invalid_argument("mf_score: unknown id " + id);
    return static_cast<std::size_t>(it - e.ids.begin());
  };
  return dot(m.user_embeddings.data.row(find_row(m.user_embeddings, user_id)),
             m.item_embeddings.data.row(find_row(m.item_embeddings, item_id)));
}

PairDataset mine_u2i_pairs(const InteractionLog& log,
                           const IdEmbeddingModel& model,
                           std::size_t window) {
  std::unordered_map<std::string, std::size_t> item_row;
  for (std::size_t i = 0; i < model.item_embeddings.ids.size(); ++i)
    item_row[model.item_embeddings.ids[i]] = i;

  std::unordered_map<std::string, std::vector<std::size_t>> history;
  std::map<std::pair<std::string, std::string>, double> best;

  for (const auto& r : log.rows) {
    if (r.ctr != 1) continue;
    const auto it = item_row.find(r.item_id);
    if (it == item_row.end())
      throw std::invalid_argument("mine_u2i_pairs: item not in model: " +
                                  r.item_id);
    const std::size_t target = it->second;
    auto& hist = history[r.user_id];

    // Scan the last <= window positives, newest first; strict > keeps the
    // most recent item on score ties.
    const std::size_t take = std::min(window, hist.size());
    double best_score = -2.0;
    std::size_t trigger = model.item_embeddings.rows();
    auto tgt = model.item_embeddings.data.row(target);
    for (std::size_t s = 0; s < take; ++s) {
      const std::size_t cand = hist[hist.size() - 1 - s];
      if (cand == target) continue;
      const double c = cosine(model.item_embeddings.data.row(cand), tgt);
      if (c > best_score) {
        best_score = c;
        trigger = cand;
      }
    }
    if (trigger != model.item_embeddings.rows()) {
      const auto key = std::make_pair(model.item_embeddings.ids[trigger],
                                      r.item_id);
      const auto found = best.find(key);
      if (found == best.end() || best_score > found->second)
        best[key] = best_score;
    }
    hist.push_back(target);
  }

  PairDataset ds;
  for (const auto& [key, score] : best)
    ds.pairs.push_back(Pair{key.first, key.second, PairSource::U2i, score});
  canonical_sort(ds);
  return ds;
}

std::map<std::pair<std::string, std::string>, double> swing_scores(
    const InteractionLog& log, double alpha, std::size_t user_cap) {
  if (alpha <= 0.0) throw std::invalid_argument("swing: alpha must be > 0");

  // Ordered distinct positive items per user; most recent user_cap kept.
  std::map<std::string, std::vector<std::string>> by_user;
  {
    std::map<std::string, std::set<std::string>> seen;
    for (const auto& r : log.rows) {
      if (r.ctr != 1) continue;
      if (seen[r.user_id].insert(r.item_id).second)
        by_user[r.user_id].push_back(r.item_id);
    }
  }
  std::vector<std::vector<std::string>> user_items;
  for (auto& [_, items] : by_user) {
    if (items.size() > user_cap)
      items.erase(items.begin(),
                  items.begin() + static_cast<std::ptrdiff_t>(items.size() -
                                                              user_cap));
    std::sort(items.begin(), items.end());
    user_items.push_back(std::move(items));
  }

  std::map<std::pair<std::string, std::string>, double> scores;
  std::vector<std::string> common;
  for (std::size_t u = 0; u < user_items.size(); ++u) {
    for (std::size_t v = u + 1; v < user_items.size(); ++v) {
      common.clear();
      std::set_intersection(user_items[u].begin(), user_items[u].end(),
                            user_items[v].begin(), user_items[v].end(),
                            std::back_inserter(common));
      if (common.size() < 2) continue;
      const double w = 1.0 / (alpha + static_cast<double>(common.size()));
      for (std::size_t i = 0; i < common.size(); ++i)
        for (std::size_t j = i + 1; j < common.size(); ++j)
          scores[{common[i], common[j]}] += w;
    }
  }
  return scores;
}

PairDataset mine_i2i_swing(const InteractionLog& log, double alpha,
                           std::size_t top_m, std::size_t user_cap) {
  const auto scores = swing_scores(log, alpha, user_cap);

  std::map<std::string, std::vector<std::pair<std::string, double>>> partners;
  for (const auto& [key, s] : scores) {
    partners[key.first].emplace_back(key.second, s);
    partners[key.second].emplace_back(key.first, s);
  }

  PairDataset ds;
  for (auto& [item, list] : partners) {
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    const std::size_t take = std::min(top_m, list.size());
    for (std::size_t i = 0; i < take; ++i)
      ds.pairs.push_back(
          Pair{item, list[i].first, PairSource::I2i, list[i].second});
  }
  canonical_sort(ds);
  return ds;
}

PairDataset merge_pairs(const PairDataset& a, const PairDataset& b) {
  std::map<std::tuple<int, std::string, std::string>, double> best;
  for (const PairDataset* ds : {&a, &b})
    for (const auto& p : ds->pairs) {
      const auto key = std::make_tuple(static_cast<int>(p.source), p.trigger,
                                       p.target);
      const auto it = best.find(key);
      if (it == best.end() || p.score > it->second) best[key] = p.score;
    }
  PairDataset out;
  for (const auto& [key, score] : best)
    out.pairs.push_back(Pair{std::get<1>(key), std::get<2>(key),
                             static_cast<PairSource>(std::get<0>(key)),
                             score});
  canonical_sort(out);
  return out;
}

void split_pairs(const PairDataset& all, double holdout_frac,
                 std::uint64_t seed, PairDataset* train,
                 PairDataset* holdout) {
  Rng rng(seed);
  train->pairs.clear();
  holdout->pairs.clear();
  for (const auto& p : all.pairs)
    (rng.uniform() < holdout_frac ? holdout : train)->pairs.push_back(p);
}

void save_pairs(const std::filesystem::path& path, const PairDataset& ds) {
  std::string out = "trigger\ttarget\tsource\tscore\n";
  for (const auto& p : ds.pairs) {
    out += p.trigger;
    out += '\t';
    out += p.target;
    out += '\t';
    out += source_name(p.source);
    out += '\t';
    out += fmt_double(p.score);
    out += '\n';
  }
  write_text(path, out);
}

PairDataset load_pairs(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "trigger\ttarget\tsource\tscore")
    throw std::invalid_argument("pairs: bad header in " + path.string());
  PairDataset ds;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_tabs(lines[i]);
    if (f.size() != 4)
      throw std::invalid_argument("pairs: bad row in " + path.string());
    ds.pairs.push_back(Pair{f[0], f[1], parse_source(f[2]), parse_double(f[3])});
  }
  return ds;
}

}  // namespace qarm
