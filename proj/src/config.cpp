#include "qarm/config.hpp"

#include <algorithm>
#include <functional>

#include "qarm/tsv.hpp"

namespace qarm {

PipelineConfig PipelineConfig::desk() { return PipelineConfig{}; }

PipelineConfig PipelineConfig::paper_default() {
  PipelineConfig cfg;
  cfg.preset = "paper-default";
  cfg.quant_K = 25;
  cfg.quant_L = 6;
  cfg.align.d_out = 64;
  cfg.align.d_hidden = 128;
  cfg.ranker.e = 64;
  return cfg;
}

void PipelineConfig::validate() const {
  world.validate();
  if (events < 1) throw std::invalid_argument("config: events must be >= 1");
  if (quant_K < 1 || quant_L < 1 || quant_N < 1)
    throw std::invalid_argument("config: quantizer sizes must be >= 1");
  if (quant_N > world.n_items)
    throw std::invalid_argument("config: quant.N exceeds catalog size");
  if (quant_K > world.n_items)
    throw std::invalid_argument("config: quant.K exceeds catalog size");
  if (align.temperature <= 0.0)
    throw std::invalid_argument("config: align.temperature must be > 0");
  if (pair_holdout < 0.0 || pair_holdout >= 1.0)
    throw std::invalid_argument("config: pairs.holdout must be in [0,1)");
  if (std::abs(split_train + split_valid + split_test - 1.0) > 1e-9)
    throw std::invalid_argument("config: ranker.split must sum to 1");
  for (std::size_t p : ranker.prefixes)
    if (p == 0 || p > quant_L)
      throw std::invalid_argument("config: ranker.prefixes out of range");
  if (variants.empty())
    throw std::invalid_argument("config: empty variant list");
}

PipelineConfig preset_config(const std::string& name) {
  if (name == "desk") return PipelineConfig::desk();
  if (name == "paper-default") return PipelineConfig::paper_default();
  throw std::invalid_argument("unknown preset: " + name);
}

namespace {

std::size_t to_size(const std::string& v) {
  const long long x = parse_int(v);
  if (x < 0) throw std::invalid_argument("expected non-negative integer");
  return static_cast<std::size_t>(x);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected boolean, got '" + v + "'");
}

std::vector<std::size_t> to_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(to_size(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(to_size(cur));
  return out;
}

std::vector<Variant> to_variants(const std::string& v) {
  std::vector<Variant> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(parse_variant(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(parse_variant(cur));
  return out;
}

std::string join_variants(const std::vector<Variant>& vs) {
  std::string s;
  for (std::size_t i = 0; i < vs.size(); ++i)
    s += std::string(i ? "," : "") + variant_name(vs[i]);
  return s;
}

std::string join_sizes(const std::vector<std::size_t>& vs) {
  std::string s;
  for (std::size_t i = 0; i < vs.size(); ++i)
    s += (i ? "," : "") + std::to_string(vs[i]);
  return s;
}

}  // namespace

void apply_config_kv(PipelineConfig& cfg, const std::string& key,
                     const std::string& v) {
  if (key == "preset") {
    cfg = preset_config(v);
    return;
  }
  if (key == "seed") { cfg.seed = static_cast<std::uint64_t>(parse_int(v)); return; }

  if (key == "world.items") { cfg.world.n_items = to_size(v); return; }
  if (key == "world.users") { cfg.world.n_users = to_size(v); return; }
  if (key == "world.categories") { cfg.world.n_categories = to_size(v); return; }
  if (key == "world.styles") { cfg.world.n_styles = to_size(v); return; }
  if (key == "world.d_base") { cfg.world.d_base = to_size(v); return; }
  if (key == "world.category_signal") { cfg.world.category_signal = parse_double(v); return; }
  if (key == "world.noise") { cfg.world.noise = parse_double(v); return; }
  if (key == "world.pop_exponent") { cfg.world.pop_exponent = parse_double(v); return; }
  if (key == "world.prefs_per_user") { cfg.world.prefs_per_user = to_size(v); return; }
  if (key == "world.in_pref_prob") { cfg.world.in_pref_prob = parse_double(v); return; }
  if (key == "world.explore_uniform") { cfg.world.explore_uniform = parse_double(v); return; }
  if (key == "world.ctr_base") { cfg.world.ctr_base = parse_double(v); return; }
  if (key == "world.ctr_gain") { cfg.world.ctr_gain = parse_double(v); return; }
  if (key == "world.cvr_base") { cfg.world.cvr_base = parse_double(v); return; }
  if (key == "world.cvr_gain") { cfg.world.cvr_gain = parse_double(v); return; }
  if (key == "world.events") { cfg.events = to_size(v); return; }

  if (key == "pairs.d_id") { cfg.mf.d_id = to_size(v); return; }
  if (key == "pairs.mf_epochs") { cfg.mf.epochs = to_size(v); return; }
  if (key == "pairs.mf_lr") { cfg.mf.lr = parse_double(v); return; }
  if (key == "pairs.negatives") { cfg.mf.negatives = to_size(v); return; }
  if (key == "pairs.window") { cfg.u2i_window = to_size(v); return; }
  if (key == "pairs.swing_alpha") { cfg.swing_alpha = parse_double(v); return; }
  if (key == "pairs.swing_top_m") { cfg.swing_top_m = to_size(v); return; }
  if (key == "pairs.swing_user_cap") { cfg.swing_user_cap = to_size(v); return; }
  if (key == "pairs.holdout") { cfg.pair_holdout = parse_double(v); return; }

  if (key == "align.d") { cfg.align.d_out = to_size(v); return; }
  if (key == "align.hidden") { cfg.align.d_hidden = to_size(v); return; }
  if (key == "align.temperature") { cfg.align.temperature = parse_double(v); return; }
  if (key == "align.lr") { cfg.align.lr = parse_double(v); return; }
  if (key == "align.momentum") { cfg.align.momentum = parse_double(v); return; }
  if (key == "align.steps") { cfg.align.steps = to_size(v); return; }
  if (key == "align.batch") { cfg.align.batch_size = to_size(v); return; }
  if (key == "align.layers") { cfg.align.layers = static_cast<int>(parse_int(v)); return; }

  if (key == "quant.K") { cfg.quant_K = to_size(v); return; }
  if (key == "quant.L") { cfg.quant_L = to_size(v); return; }
  if (key == "quant.N") { cfg.quant_N = to_size(v); return; }
  if (key == "quant.vq_exclude_self") { cfg.vq_exclude_self = to_bool(v); return; }

  if (key == "ranker.e") { cfg.ranker.e = to_size(v); return; }
  if (key == "ranker.e_id") { cfg.ranker.e_id = to_size(v); return; }
  if (key == "ranker.h") { cfg.ranker.h = to_size(v); return; }
  if (key == "ranker.item_hidden") { cfg.ranker.item_hidden = to_size(v); return; }
  if (key == "ranker.experts") { cfg.ranker.experts = to_size(v); return; }
  if (key == "ranker.expert_hidden") { cfg.ranker.expert_hidden = to_size(v); return; }
  if (key == "ranker.lr") { cfg.ranker.lr = parse_double(v); return; }
  if (key == "ranker.epochs") { cfg.ranker.epochs = to_size(v); return; }
  if (key == "ranker.batch") { cfg.ranker.batch = to_size(v); return; }
  if (key == "ranker.n_history") { cfg.ranker.n_history = to_size(v); return; }
  if (key == "ranker.max_matched") { cfg.ranker.max_matched = to_size(v); return; }
  if (key == "ranker.prefixes") { cfg.ranker.prefixes = to_size_list(v); return; }
  if (key == "ranker.variants") { cfg.variants = to_variants(v); return; }
  if (key == "ranker.split") {
    std::vector<double> parts;
    std::string cur;
    for (char c : v + ",") {
      if (c == ',') {
        parts.push_back(parse_double(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (parts.size() != 3)
      throw std::invalid_argument("ranker.split needs three ratios");
    cfg.split_train = parts[0];
    cfg.split_valid = parts[1];
    cfg.split_test = parts[2];
    return;
  }
  throw std::invalid_argument("unknown config key: " + key);
}

PipelineConfig load_config_file(const std::filesystem::path& path) {
  PipelineConfig cfg = PipelineConfig::desk();
  std::vector<std::filesystem::path> stack{path};
  // Depth-first include processing, applied line by line.
  std::function<void(const std::filesystem::path&)> apply_file =
      [&](const std::filesystem::path& p) {
        for (const auto& raw : read_lines(p)) {
          std::string line = raw;
          const auto hash = line.find('#');
          if (hash != std::string::npos) line = line.substr(0, hash);
          while (!line.empty() && (line.back() == ' ' || line.back() == '\t'))
            line.pop_back();
          std::size_t start = 0;
          while (start < line.size() &&
                 (line[start] == ' ' || line[start] == '\t'))
            ++start;
          line = line.substr(start);
          if (line.empty()) continue;
          if (line.rfind("include ", 0) == 0) {
            const std::filesystem::path inc = line.substr(8);
            apply_file(inc.is_absolute() ? inc : p.parent_path() / inc);
            continue;
          }
          const auto eq = line.find('=');
          if (eq == std::string::npos)
            throw std::invalid_argument("config: bad line '" + line + "' in " +
                                        p.string());
          apply_config_kv(cfg, line.substr(0, eq), line.substr(eq + 1));
        }
      };
  apply_file(path);
  return cfg;
}

std::vector<std::pair<std::string, std::string>> config_dump(
    const PipelineConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("preset", c.preset);
  kv.emplace_back("seed", std::to_string(c.seed));
  kv.emplace_back("world.items", std::to_string(c.world.n_items));
  kv.emplace_back("world.users", std::to_string(c.world.n_users));
  kv.emplace_back("world.categories", std::to_string(c.world.n_categories));
  kv.emplace_back("world.styles", std::to_string(c.world.n_styles));
  kv.emplace_back("world.d_base", std::to_string(c.world.d_base));
  kv.emplace_back("world.category_signal", fmt_double(c.world.category_signal));
  kv.emplace_back("world.noise", fmt_double(c.world.noise));
  kv.emplace_back("world.pop_exponent", fmt_double(c.world.pop_exponent));
  kv.emplace_back("world.prefs_per_user", std::to_string(c.world.prefs_per_user));
  kv.emplace_back("world.in_pref_prob", fmt_double(c.world.in_pref_prob));
  kv.emplace_back("world.explore_uniform", fmt_double(c.world.explore_uniform));
  kv.emplace_back("world.ctr_base", fmt_double(c.world.ctr_base));
  kv.emplace_back("world.ctr_gain", fmt_double(c.world.ctr_gain));
  kv.emplace_back("world.cvr_base", fmt_double(c.world.cvr_base));
  kv.emplace_back("world.cvr_gain", fmt_double(c.world.cvr_gain));
  kv.emplace_back("world.events", std::to_string(c.events));
  kv.emplace_back("pairs.d_id", std::to_string(c.mf.d_id));
  kv.emplace_back("pairs.mf_epochs", std::to_string(c.mf.epochs));
  kv.emplace_back("pairs.mf_lr", fmt_double(c.mf.lr));
  kv.emplace_back("pairs.negatives", std::to_string(c.mf.negatives));
  kv.emplace_back("pairs.window", std::to_string(c.u2i_window));
  kv.emplace_back("pairs.swing_alpha", fmt_double(c.swing_alpha));
  kv.emplace_back("pairs.swing_top_m", std::to_string(c.swing_top_m));
  kv.emplace_back("pairs.swing_user_cap", std::to_string(c.swing_user_cap));
  kv.emplace_back("pairs.holdout", fmt_double(c.pair_holdout));
  kv.emplace_back("align.d", std::to_string(c.align.d_out));
  kv.emplace_back("align.hidden", std::to_string(c.align.d_hidden));
  kv.emplace_back("align.temperature", fmt_double(c.align.temperature));
  kv.emplace_back("align.lr", fmt_double(c.align.lr));
  kv.emplace_back("align.momentum", fmt_double(c.align.momentum));
  kv.emplace_back("align.steps", std::to_string(c.align.steps));
  kv.emplace_back("align.batch", std::to_string(c.align.batch_size));
  kv.emplace_back("align.layers", std::to_string(c.align.layers));
  kv.emplace_back("quant.K", std::to_string(c.quant_K));
  kv.emplace_back("quant.L", std::to_string(c.quant_L));
  kv.emplace_back("quant.N", std::to_string(c.quant_N));
  kv.emplace_back("quant.vq_exclude_self", c.vq_exclude_self ? "true" : "false");
  kv.emplace_back("ranker.e", std::to_string(c.ranker.e));
  kv.emplace_back("ranker.e_id", std::to_string(c.ranker.e_id));
  kv.emplace_back("ranker.h", std::to_string(c.ranker.h));
  kv.emplace_back("ranker.item_hidden", std::to_string(c.ranker.item_hidden));
  kv.emplace_back("ranker.experts", std::to_string(c.ranker.experts));
  kv.emplace_back("ranker.expert_hidden", std::to_string(c.ranker.expert_hidden));
  kv.emplace_back("ranker.lr", fmt_double(c.ranker.lr));
  kv.emplace_back("ranker.epochs", std::to_string(c.ranker.epochs));
  kv.emplace_back("ranker.batch", std::to_string(c.ranker.batch));
  kv.emplace_back("ranker.n_history", std::to_string(c.ranker.n_history));
  kv.emplace_back("ranker.max_matched", std::to_string(c.ranker.max_matched));
  kv.emplace_back("ranker.prefixes", join_sizes(c.ranker.prefixes));
  kv.emplace_back("ranker.variants", join_variants(c.variants));
  kv.emplace_back("ranker.split", fmt_double(c.split_train) + "," +
                                      fmt_double(c.split_valid) + "," +
                                      fmt_double(c.split_test));
  return kv;
}

}  // namespace qarm
