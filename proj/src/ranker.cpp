#include "qarm/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "qarm/errors.hpp"
#include "qarm/tsv.hpp"

namespace qarm {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::IaRep: return "ia_rep";
    case Variant::Vq: return "vq";
    case Variant::Rq: return "rq";
    case Variant::VqRq: return "vq_rq";
  }
  return "baseline";
}

Variant parse_variant(const std::string& name) {
  if (name == "baseline") return Variant::Baseline;
  if (name == "ia_rep") return Variant::IaRep;
  if (name == "vq") return Variant::Vq;
  if (name == "rq") return Variant::Rq;
  if (name == "vq_rq") return Variant::VqRq;
  throw std::invalid_argument("unknown variant: " + name);
}

DatasetSplit assemble_dataset(const InteractionLog& log,
                              const std::vector<std::string>& item_ids,
                              const std::vector<std::string>& user_ids,
                              std::size_t n_history, double train_frac,
                              double valid_frac, double test_frac) {
  if (train_frac < 0 || valid_frac < 0 || test_frac < 0 ||
      std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("assemble_dataset: split ratios must sum to 1");
  if (train_frac == 0.0)
    throw std::invalid_argument("assemble_dataset: empty train split");
  if (log.rows.empty())
    throw std::invalid_argument("assemble_dataset: empty log");

  const auto row_of = [](const std::vector<std::string>& ids,
                         const std::string& id) -> std::size_t {
    const auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return 0;  // OOV
    return static_cast<std::size_t>(it - ids.begin()) + 1;
  };

  std::vector<LogRow> rows = log.rows;
  std::stable_sort(rows.begin(), rows.end(),
                   [](const LogRow& a, const LogRow& b) { return a.ts < b.ts; });

  std::vector<RankingExample> all;
  all.reserve(rows.size());
  std::map<std::string, std::vector<std::size_t>> history;
  for (const auto& r : rows) {
    RankingExample ex;
    ex.user_row = row_of(user_ids, r.user_id);
    ex.item_row = row_of(item_ids, r.item_id);
    ex.y_ctr = r.ctr;
    ex.y_cvr = r.cvr;
    ex.ts = r.ts;
    const auto& h = history[r.user_id];
    const std::size_t take = std::min(n_history, h.size());
    ex.history_rows.assign(h.end() - static_cast<std::ptrdiff_t>(take),
                           h.end());
    all.push_back(std::move(ex));
    if (r.ctr == 1) {
      const std::size_t row = row_of(item_ids, r.item_id);
      if (row != 0) history[r.user_id].push_back(row);
    }
  }

  DatasetSplit split;
  const std::size_t n = all.size();
  const std::size_t n_train =
      static_cast<std::size_t>(std::floor(train_frac * double(n)));
  const std::size_t n_valid =
      static_cast<std::size_t>(std::floor(valid_frac * double(n)));
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train)
      split.train.push_back(std::move(all[i]));
    else if (i < n_train + n_valid)
      split.valid.push_back(std::move(all[i]));
    else
      split.test.push_back(std::move(all[i]));
  }
  return split;
}

MoEModel make_moe_model(const RankerConfig& cfg,
                        const std::vector<SemanticCodes>* codes,
                        const Mat* aligned, std::size_t n_users,
                        std::size_t n_items, std::uint64_t seed) {
  MoEModel m;
  m.cfg = cfg;
  m.codes = codes;
  m.aligned = aligned;
  Rng rng(seed);

  std::size_t dim = 3 * cfg.e_id;  // user id, item id, pooled history ids
  if (m.uses_codes()) {
    if (!codes || codes->empty())
      throw std::invalid_argument("make_moe_model: variant needs codes");
    CodeFeatureConfig cc;
    cc.use_vq = cfg.variant != Variant::Rq;
    cc.use_rq = cfg.variant != Variant::Vq;
    cc.K = (*codes)[0].vq.size();
    cc.L = (*codes)[0].rq.size();
    cc.vq_vocab = n_items;
    std::size_t max_rq = 0;
    for (const auto& c : *codes)
      for (std::size_t r : c.rq) max_rq = std::max(max_rq, r);
    cc.rq_vocab = max_rq + 1;
    cc.e = cfg.e;
    m.tables = CodeEmbeddingTables(cc, rng);
    const std::vector<std::size_t> plens =
        cc.use_rq ? cfg.prefixes : std::vector<std::size_t>{};
    m.nets = FeatureNets(cc, cfg.h, cfg.item_hidden, plens, rng);
    dim += 2 * cfg.h + cfg.h * plens.size();
  } else if (cfg.variant == Variant::IaRep) {
    if (!aligned || aligned->rows == 0)
      throw std::invalid_argument("make_moe_model: ia_rep needs aligned matrix");
    dim += 2 * aligned->cols;  // target rep + pooled history rep, frozen
  }
  m.input_dim = dim;

  m.user_table = Param("id.user", n_users + 1, cfg.e_id);
  m.item_table = Param("id.item", n_items + 1, cfg.e_id);
  m.user_table.init_normal(rng, 0.1);
  m.item_table.init_normal(rng, 0.1);

  for (std::size_t e = 0; e < cfg.experts; ++e) {
    MoEModel::Expert ex;
    const std::string tag = "expert" + std::to_string(e);
    ex.W1 = Param(tag + ".W1", dim, cfg.expert_hidden);
    ex.b1 = Param(tag + ".b1", 1, cfg.expert_hidden);
    ex.W2 = Param(tag + ".W2", cfg.expert_hidden, cfg.h);
    ex.b2 = Param(tag + ".b2", 1, cfg.h);
    ex.W1.init_xavier(rng);
    ex.W2.init_xavier(rng);
    m.experts.push_back(std::move(ex));
  }
  for (const auto& task : cfg.tasks) {
    MoEModel::TaskHead head;
    head.task = task;
    head.gate_W = Param("gate." + task + ".W", dim, cfg.experts);
    head.gate_b = Param("gate." + task + ".b", 1, cfg.experts);
    head.tower_w = Param("tower." + task + ".w", cfg.h, 1);
    head.tower_b = Param("tower." + task + ".b", 1, 1);
    head.gate_W.init_xavier(rng);
    head.tower_w.init_xavier(rng);
    m.heads.push_back(std::move(head));
  }
  return m;
}

std::vector<Param*> MoEModel::trainable_params() {
  std::vector<Param*> out;
  if (uses_codes()) {
    for (Param* p : tables.params()) out.push_back(p);
    for (Param* p : nets.params()) out.push_back(p);
  }
  out.push_back(&user_table);
  out.push_back(&item_table);
  for (auto& e : experts) {
    out.push_back(&e.W1);
    out.push_back(&e.b1);
    out.push_back(&e.W2);
    out.push_back(&e.b2);
  }
  for (auto& h : heads) {
    out.push_back(&h.gate_W);
    out.push_back(&h.gate_b);
    out.push_back(&h.tower_w);
    out.push_back(&h.tower_b);
  }
  return out;
}

std::vector<Tape::NodeId> MoEModel::forward(Tape& tape,
                                            const RankingExample& ex,
                                            ForwardTrace* trace) {
  std::vector<Tape::NodeId> parts;

  // Id features: user, target item, mean of history item ids.
  parts.push_back(tape.gather(user_table, {ex.user_row}));
  parts.push_back(tape.gather(item_table, {ex.item_row}));
  const std::size_t window = std::min(cfg.n_history, ex.history_rows.size());
  std::vector<std::size_t> hist(ex.history_rows.end() -
                                    static_cast<std::ptrdiff_t>(window),
                                ex.history_rows.end());
  if (hist.empty()) {
    parts.push_back(tape.constant(Mat(1, cfg.e_id)));
  } else {
    parts.push_back(tape.mean_rows(tape.gather(item_table, hist)));
  }

  if (uses_codes()) {
    const SemanticCodes oov = oov_codes(tables.cfg);
    const auto code_of = [&](std::size_t row) -> const SemanticCodes* {
      return row == 0 ? &oov : &(*codes)[row - 1];
    };
    std::vector<const SemanticCodes*> hist_codes;
    hist_codes.reserve(hist.size());
    for (std::size_t r : hist) hist_codes.push_back(code_of(r));
    const std::vector<std::size_t> plens =
        tables.cfg.use_rq ? cfg.prefixes : std::vector<std::size_t>{};
    FeatureBundle fb = build_feature_bundle(
        tape, tables, nets, hist_codes, *code_of(ex.item_row), plens,
        cfg.max_matched, trace ? &trace->features : nullptr);
    parts.push_back(fb.user_code_rep);
    parts.push_back(fb.item_code_rep);
    if (!plens.empty()) parts.push_back(fb.cross_code_rep);
  } else if (cfg.variant == Variant::IaRep) {
    // Frozen representation inputs: constants on the tape, so backward
    // never produces a gradient for the aligned matrix.
    if (ex.item_row == 0) {
      parts.push_back(tape.constant(Mat(1, aligned->cols)));
    } else {
      parts.push_back(tape.gather_const(*aligned, {ex.item_row - 1}));
    }
    if (hist.empty()) {
      parts.push_back(tape.constant(Mat(1, aligned->cols)));
    } else {
      std::vector<std::size_t> rows;
      rows.reserve(hist.size());
      for (std::size_t r : hist) rows.push_back(r - 1);
      parts.push_back(tape.mean_rows(tape.gather_const(*aligned, rows)));
    }
  }

  const auto x = tape.concat_cols(parts);

  std::vector<Tape::NodeId> expert_outs;
  expert_outs.reserve(experts.size());
  for (auto& e : experts) {
    auto hdn = tape.relu(tape.add_rowvec(tape.matmul(x, tape.leaf(e.W1)),
                                         tape.leaf(e.b1)));
    expert_outs.push_back(tape.add_rowvec(tape.matmul(hdn, tape.leaf(e.W2)),
                                          tape.leaf(e.b2)));
  }
  const auto stack = experts.size() == 1 ? expert_outs[0]
                                         : tape.concat_rows(expert_outs);

  std::vector<Tape::NodeId> logits;
  if (trace) trace->gates.clear();
  for (auto& head : heads) {
    const auto gate = tape.softmax_rows(tape.add_rowvec(
        tape.matmul(x, tape.leaf(head.gate_W)), tape.leaf(head.gate_b)));
    if (trace) {
      const Mat& g = tape.val(gate);
      trace->gates.emplace_back(g.a.begin(), g.a.end());
    }
    const auto mix = tape.matmul(gate, stack);  // 1 x h
    logits.push_back(tape.add(tape.matmul(mix, tape.leaf(head.tower_w)),
                              tape.leaf(head.tower_b)));
  }
  return logits;
}

std::vector<std::array<double, 2>> MoEModel::predict(
    std::span<const RankingExample> examples) {
  std::vector<std::array<double, 2>> out;
  out.reserve(examples.size());
  Tape tape;
  for (const auto& ex : examples) {
    tape.clear();
    const auto logits = forward(tape, ex);
    std::array<double, 2> probs{0.5, 0.5};
    for (std::size_t t = 0; t < logits.size() && t < 2; ++t)
      probs[t] = 1.0 / (1.0 + std::exp(-tape.val(logits[t]).at(0, 0)));
    out.push_back(probs);
  }
  return out;
}

TrainStats train_ranker(MoEModel& model,
                        const std::vector<RankingExample>& train,
                        std::uint64_t seed, bool probe_code_grads) {
  if (train.empty())
    throw std::invalid_argument("train_ranker: empty training set");
  TrainStats stats;
  auto params = model.trainable_params();
  Sgd opt{model.cfg.lr, 0.0, {}};
  Rng rng(seed);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  Tape tape;
  for (std::size_t epoch = 0; epoch < model.cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);

    double total_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t bsz = std::min(model.cfg.batch, order.size() - done);
      for (std::size_t b = 0; b < bsz; ++b) {
        const RankingExample& ex = train[order[done + b]];
        tape.clear();
        const auto logits = model.forward(tape, ex);
        std::vector<Tape::NodeId> terms;
        for (std::size_t t = 0; t < model.heads.size(); ++t) {
          const double label =
              model.heads[t].task == "cvr" ? ex.y_cvr : ex.y_ctr;
          terms.push_back(tape.bce_with_logit(logits[t], label));
        }
        const auto loss = tape.add_scalars(terms);
        const double lv = tape.val(loss).at(0, 0);
        if (!std::isfinite(lv))
          throw TrainingDiverged("ranker loss diverged at epoch " +
                                 std::to_string(epoch) + " example " +
                                 std::to_string(done + b));
        total_loss += lv;
        tape.backward(loss);
      }
      if (probe_code_grads && model.uses_codes()) {
        double linf = 0.0;
        for (Param* p : model.tables.params())
          for (double g : p->g.a) linf = std::max(linf, std::abs(g));
        stats.step_code_grad_linf.push_back(linf);
      }
      opt.step(params, 1.0 / static_cast<double>(bsz));
      done += bsz;
    }
    stats.epoch_loss.push_back(total_loss / static_cast<double>(order.size()));
  }
  return stats;
}

std::uint64_t params_checksum(MoEModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (Param* p : model.trainable_params()) {
    h = fnv1a(p->name.data(), p->name.size(), h);
    h = fnv1a(p->w.a.data(), p->w.a.size() * sizeof(double), h);
  }
  return h;
}

namespace {

std::string param_file(const std::string& name) {
  std::string s = name;
  for (char& c : s)
    if (c == '.') c = '_';
  return s + ".qemb";
}

void save_param(const std::filesystem::path& dir, const Param& p) {
  EmbeddingMatrix m;
  m.data = p.w;
  for (std::size_t i = 0; i < p.w.rows; ++i) m.ids.push_back(std::to_string(i));
  save_qemb(dir / param_file(p.name), m);
}

void load_param(const std::filesystem::path& dir, Param& p) {
  const EmbeddingMatrix m = load_qemb(dir / param_file(p.name));
  if (m.data.rows != p.w.rows || m.data.cols != p.w.cols)
    throw std::invalid_argument("checkpoint: shape mismatch for " + p.name);
  p.w = m.data;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= s.size() && !s.empty()) {
    const std::size_t pos = s.find(',', start);
    const std::string tok =
        s.substr(start, pos == std::string::npos ? pos : pos - start);
    if (!tok.empty()) out.push_back(static_cast<std::size_t>(parse_int(tok)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, MoEModel& model) {
  std::filesystem::create_directories(dir);
  const RankerConfig& c = model.cfg;
  std::string mf;
  mf += "variant=" + std::string(variant_name(c.variant)) + "\n";
  mf += "e=" + std::to_string(c.e) + "\n";
  mf += "e_id=" + std::to_string(c.e_id) + "\n";
  mf += "h=" + std::to_string(c.h) + "\n";
  mf += "item_hidden=" + std::to_string(c.item_hidden) + "\n";
  mf += "experts=" + std::to_string(c.experts) + "\n";
  mf += "expert_hidden=" + std::to_string(c.expert_hidden) + "\n";
  mf += "n_history=" + std::to_string(c.n_history) + "\n";
  mf += "max_matched=" + std::to_string(c.max_matched) + "\n";
  mf += "prefixes=" + join_sizes(c.prefixes) + "\n";
  mf += "users=" + std::to_string(model.user_table.w.rows - 1) + "\n";
  mf += "items=" + std::to_string(model.item_table.w.rows - 1) + "\n";
  std::string tasks;
  for (std::size_t i = 0; i < c.tasks.size(); ++i)
    tasks += (i ? "," : "") + c.tasks[i];
  mf += "tasks=" + tasks + "\n";
  write_text(dir / "model.manifest", mf);

  for (Param* p : model.trainable_params()) save_param(dir, *p);
}

MoEModel load_checkpoint(const std::filesystem::path& dir,
                         const std::vector<SemanticCodes>* codes,
                         const Mat* aligned) {
  RankerConfig cfg;
  std::size_t users = 0, items = 0;
  for (const auto& line : read_lines(dir / "model.manifest")) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "variant") cfg.variant = parse_variant(val);
    if (key == "e") cfg.e = static_cast<std::size_t>(parse_int(val));
    if (key == "e_id") cfg.e_id = static_cast<std::size_t>(parse_int(val));
    if (key == "h") cfg.h = static_cast<std::size_t>(parse_int(val));
    if (key == "item_hidden")
      cfg.item_hidden = static_cast<std::size_t>(parse_int(val));
    if (key == "experts") cfg.experts = static_cast<std::size_t>(parse_int(val));
    if (key == "expert_hidden")
      cfg.expert_hidden = static_cast<std::size_t>(parse_int(val));
    if (key == "n_history")
      cfg.n_history = static_cast<std::size_t>(parse_int(val));
    if (key == "max_matched")
      cfg.max_matched = static_cast<std::size_t>(parse_int(val));
    if (key == "prefixes") cfg.prefixes = split_sizes(val);
    if (key == "users") users = static_cast<std::size_t>(parse_int(val));
    if (key == "items") items = static_cast<std::size_t>(parse_int(val));
    if (key == "tasks") {
      cfg.tasks.clear();
      std::string cur;
      for (char ch : val) {
        if (ch == ',') {
          cfg.tasks.push_back(cur);
          cur.clear();
        } else {
          cur += ch;
        }
      }
      if (!cur.empty()) cfg.tasks.push_back(cur);
    }
  }
  MoEModel m = make_moe_model(cfg, codes, aligned, users, items, 0);
  for (Param* p : m.trainable_params()) load_param(dir, *p);
  return m;
}

void save_epoch_metrics(const std::filesystem::path& path,
                        const TrainStats& stats) {
  std::string out = "epoch\tloss\n";
  for (std::size_t i = 0; i < stats.epoch_loss.size(); ++i)
    out += std::to_string(i + 1) + "\t" + fmt_double(stats.epoch_loss[i]) +
           "\n";
  write_text(path, out);
}

}  // namespace qarm
