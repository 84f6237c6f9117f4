#include "qarm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qarm/rng.hpp"
#include "qarm/tsv.hpp"

namespace qarm {

namespace {

std::string padded_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%06zu", prefix, i);
  return buf;
}

}  // namespace

void GenConfig::validate() const {
  if (n_items < 1 || n_users < 1 || n_categories < 1 || n_styles < 1 ||
      d_base < 1)
    throw std::invalid_argument("GenConfig: sizes must be >= 1");
  if (noise < 0.0 || category_signal < 0.0)
    throw std::invalid_argument("GenConfig: noise and lambda must be >= 0");
  if (prefs_per_user < 1 || prefs_per_user > n_categories)
    throw std::invalid_argument("GenConfig: prefs_per_user out of range");
  for (const auto& t : tasks)
    if (t != "ctr" && t != "cvr")
      throw std::invalid_argument("GenConfig: unsupported task " + t);
}

EmbeddingMatrix World::base_embeddings() const {
  EmbeddingMatrix m;
  m.data = Mat(items.size(), config.d_base);
  m.ids.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    m.ids.push_back(items[i].item_id);
    std::copy(items[i].base_embedding.begin(), items[i].base_embedding.end(),
              m.data.row(i).begin());
  }
  return m;
}

World generate_world(const GenConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);

  World w;
  w.config = config;
  w.seed = seed;
  w.categories = config.n_categories;

  w.style_protos = Mat(config.n_styles, config.d_base);
  for (double& v : w.style_protos.a) v = rng.normal();
  w.category_signals = Mat(config.n_categories, config.d_base);
  for (double& v : w.category_signals.a) v = rng.normal();

  // Popularity ranks are a random permutation so popularity is decoupled
  // from category and style.
  std::vector<std::size_t> rank(config.n_items);
  std::iota(rank.begin(), rank.end(), 0);
  for (std::size_t i = config.n_items; i > 1; --i)
    std::swap(rank[i - 1], rank[rng.uniform_index(i)]);

  w.items.reserve(config.n_items);
  for (std::size_t i = 0; i < config.n_items; ++i) {
    Item it;
    it.item_id = padded_id('i', i);
    it.category = static_cast<int>(rng.uniform_index(config.n_categories));
    it.style = static_cast<int>(rng.uniform_index(config.n_styles));
    it.popularity =
        std::pow(static_cast<double>(rank[i] + 1), -config.pop_exponent);
    it.base_embedding.resize(config.d_base);
    for (std::size_t j = 0; j < config.d_base; ++j) {
      it.base_embedding[j] =
          w.style_protos.at(static_cast<std::size_t>(it.style), j) +
          config.category_signal *
              w.category_signals.at(static_cast<std::size_t>(it.category), j) +
          config.noise * rng.normal();
    }
    w.items.push_back(std::move(it));
  }

  // Users concentrate on a few categories: full affinity on the primary
  // preference, 0.6 on the others, a 0.05 floor elsewhere.
  w.users.reserve(config.n_users);
  for (std::size_t u = 0; u < config.n_users; ++u) {
    User user;
    user.user_id = padded_id('u', u);
    user.category_affinity.assign(config.n_categories, 0.05);
    std::vector<std::size_t> cats(config.n_categories);
    std::iota(cats.begin(), cats.end(), 0);
    for (std::size_t i = config.n_categories; i > 1; --i)
      std::swap(cats[i - 1], cats[rng.uniform_index(i)]);
    for (std::size_t p = 0; p < config.prefs_per_user; ++p)
      user.category_affinity[cats[p]] = (p == 0) ? 1.0 : 0.6;
    w.users.push_back(std::move(user));
  }
  return w;
}

InteractionLog emit_log(const World& world, std::size_t n_events,
                        std::uint64_t seed) {
  if (n_events < 1)
    throw std::invalid_argument("emit_log: n_events must be >= 1");
  const GenConfig& cfg = world.config;
  Rng rng(seed);

  // Pre-bucket items by category with cumulative popularity weights.
  const std::size_t n_cat = cfg.n_categories;
  std::vector<std::vector<std::size_t>> cat_items(n_cat);
  std::vector<std::vector<double>> cat_weights(n_cat);
  std::vector<double> cat_totals(n_cat, 0.0);
  std::vector<double> all_weights;
  double all_total = 0.0;
  for (std::size_t i = 0; i < world.items.size(); ++i) {
    const auto& it = world.items[i];
    cat_items[static_cast<std::size_t>(it.category)].push_back(i);
    cat_weights[static_cast<std::size_t>(it.category)].push_back(it.popularity);
    cat_totals[static_cast<std::size_t>(it.category)] += it.popularity;
    all_weights.push_back(it.popularity);
    all_total += it.popularity;
  }

  InteractionLog log;
  log.rows.reserve(n_events);
  for (std::size_t e = 0; e < n_events; ++e) {
    const std::size_t u = rng.uniform_index(world.users.size());
    const User& user = world.users[u];

    std::size_t item_idx;
    const double mode = rng.uniform();
    if (mode < cfg.explore_uniform) {
      item_idx = rng.uniform_index(world.items.size());
    } else if (mode < cfg.explore_uniform + cfg.in_pref_prob) {
      // Preferred category chosen proportional to affinity mass.
      double total = 0.0;
      for (std::size_t c = 0; c < n_cat; ++c)
        total += user.category_affinity[c] * (cat_items[c].empty() ? 0.0 : 1.0);
      double pick = rng.uniform() * total;
      std::size_t cat = 0;
      for (std::size_t c = 0; c < n_cat; ++c) {
        if (cat_items[c].empty()) continue;
        pick -= user.category_affinity[c];
        cat = c;
        if (pick < 0.0) break;
      }
      item_idx = cat_items[cat][rng.weighted_index(cat_weights[cat],
                                                   cat_totals[cat])];
    } else {
      item_idx = rng.weighted_index(all_weights, all_total);
    }

    const Item& item = world.items[item_idx];
    const double aff =
        user.category_affinity[static_cast<std::size_t>(item.category)];
    const double p_ctr = std::clamp(cfg.ctr_base + cfg.ctr_gain * aff, 0.0, 1.0);
    const int ctr = rng.uniform() < p_ctr ? 1 : 0;
    int cvr = 0;
    if (ctr == 1) {
      const double p_cvr =
          std::clamp(cfg.cvr_base + cfg.cvr_gain * aff, 0.0, 1.0);
      cvr = rng.uniform() < p_cvr ? 1 : 0;
    }
    log.rows.push_back(LogRow{user.user_id, item.item_id,
                              static_cast<std::int64_t>(e), ctr, cvr});
  }
  return log;
}

void save_log(const std::filesystem::path& path, const InteractionLog& log) {
  std::string out = "user_id\titem_id\tts\tctr\tcvr\n";
  for (const auto& r : log.rows) {
    out += r.user_id;
    out += '\t';
    out += r.item_id;
    out += '\t';
    out += std::to_string(r.ts);
    out += '\t';
    out += std::to_string(r.ctr);
    out += '\t';
    out += std::to_string(r.cvr);
    out += '\n';
  }
  write_text(path, out);
}

InteractionLog load_log(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "user_id\titem_id\tts\tctr\tcvr")
    throw std::invalid_argument("log: bad header in " + path.string());
  InteractionLog log;
  log.rows.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_tabs(lines[i]);
    if (f.size() != 5)
      throw std::invalid_argument("log: bad row in " + path.string());
    LogRow r;
    r.user_id = f[0];
    r.item_id = f[1];
    r.ts = parse_int(f[2]);
    r.ctr = static_cast<int>(parse_int(f[3]));
    r.cvr = static_cast<int>(parse_int(f[4]));
    if ((r.ctr != 0 && r.ctr != 1) || (r.cvr != 0 && r.cvr != 1) ||
        (r.cvr == 1 && r.ctr == 0))
      throw std::invalid_argument("log: bad labels in " + path.string());
    log.rows.push_back(std::move(r));
  }
  return log;
}

void save_world_manifest(const std::filesystem::path& path, const World& w) {
  const GenConfig& c = w.config;
  std::string out;
  out += "seed=" + std::to_string(w.seed) + "\n";
  out += "items=" + std::to_string(c.n_items) + "\n";
  out += "users=" + std::to_string(c.n_users) + "\n";
  out += "categories=" + std::to_string(c.n_categories) + "\n";
  out += "styles=" + std::to_string(c.n_styles) + "\n";
  out += "d_base=" + std::to_string(c.d_base) + "\n";
  out += "category_signal=" + fmt_double(c.category_signal) + "\n";
  out += "noise=" + fmt_double(c.noise) + "\n";
  out += "pop_exponent=" + fmt_double(c.pop_exponent) + "\n";
  out += "prefs_per_user=" + std::to_string(c.prefs_per_user) + "\n";
  out += "in_pref_prob=" + fmt_double(c.in_pref_prob) + "\n";
  out += "explore_uniform=" + fmt_double(c.explore_uniform) + "\n";
  out += "ctr_base=" + fmt_double(c.ctr_base) + "\n";
  out += "ctr_gain=" + fmt_double(c.ctr_gain) + "\n";
  out += "cvr_base=" + fmt_double(c.cvr_base) + "\n";
  out += "cvr_gain=" + fmt_double(c.cvr_gain) + "\n";
  write_text(path, out);
}

void save_items_tsv(const std::filesystem::path& path, const World& w) {
  std::string out = "item_id\tcategory\tstyle\tpopularity\n";
  for (const auto& it : w.items) {
    out += it.item_id;
    out += '\t';
    out += std::to_string(it.category);
    out += '\t';
    out += std::to_string(it.style);
    out += '\t';
    out += fmt_double(it.popularity);
    out += '\n';
  }
  write_text(path, out);
}

std::vector<ItemTags> load_items_tsv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "item_id\tcategory\tstyle\tpopularity")
    throw std::invalid_argument("items: bad header in " + path.string());
  std::vector<ItemTags> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_tabs(lines[i]);
    if (f.size() != 4)
      throw std::invalid_argument("items: bad row in " + path.string());
    out.push_back(ItemTags{f[0], static_cast<int>(parse_int(f[1])),
                           static_cast<int>(parse_int(f[2])),
                           parse_double(f[3])});
  }
  return out;
}

}  // namespace qarm
