#include "qarm/align.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "qarm/errors.hpp"
#include "qarm/nearest.hpp"

namespace qarm {

ProjectionHead::ProjectionHead(std::size_t d_base, const AlignConfig& cfg,
                               Rng& rng)
    : layers(cfg.layers) {
  if (layers != 1 && layers != 2)
    throw std::invalid_argument("ProjectionHead: layers must be 1 or 2");
  const std::size_t mid = (layers == 2) ? cfg.d_hidden : cfg.d_out;
  W1 = Param("align.W1", d_base, mid);
  b1 = Param("align.b1", 1, mid);
  W1.init_xavier(rng);
  if (layers == 2) {
    W2 = Param("align.W2", cfg.d_hidden, cfg.d_out);
    b2 = Param("align.b2", 1, cfg.d_out);
    W2.init_xavier(rng);
  }
}

std::vector<Param*> ProjectionHead::params() {
  if (layers == 2) return {&W1, &b1, &W2, &b2};
  return {&W1, &b1};
}

Tape::NodeId ProjectionHead::project(Tape& tape, const Mat& base,
                                     const std::vector<std::size_t>& rows) const {
  auto& self = const_cast<ProjectionHead&>(*this);
  const Tape::NodeId x = tape.gather_const(base, rows);
  Tape::NodeId h =
      tape.add_rowvec(tape.matmul(x, tape.leaf(self.W1)), tape.leaf(self.b1));
  if (layers == 2) {
    h = tape.relu(h);
    h = tape.add_rowvec(tape.matmul(h, tape.leaf(self.W2)),
                        tape.leaf(self.b2));
  }
  return h;
}

Tape::NodeId batch_contrastive_loss(Tape& tape, Tape::NodeId trigger_proj,
                                    Tape::NodeId target_proj,
                                    double temperature) {
  if (temperature <= 0.0)
    throw std::invalid_argument("batch_contrastive_loss: temperature <= 0");
  const Tape::NodeId t = tape.row_l2_normalize(trigger_proj);
  const Tape::NodeId g = tape.row_l2_normalize(target_proj);
  const Tape::NodeId logits =
      tape.scale(tape.matmul(t, g, false, true), 1.0 / temperature);
  const Tape::NodeId fwd = tape.xent_diag_mean(logits);
  const Tape::NodeId bwd = tape.xent_diag_mean(tape.transpose(logits));
  return tape.scale(tape.add_scalars({fwd, bwd}), 0.5);
}

double batch_contrastive_loss_value(const Mat& trigger_proj,
                                    const Mat& target_proj,
                                    double temperature) {
  Tape tape;
  const auto t = tape.constant(trigger_proj);
  const auto g = tape.constant(target_proj);
  return tape.val(batch_contrastive_loss(tape, t, g, temperature)).at(0, 0);
}

AlignResult align_train(const EmbeddingMatrix& base, const PairDataset& pairs,
                        const AlignConfig& cfg, std::uint64_t seed) {
  if (cfg.temperature <= 0.0)
    throw std::invalid_argument("align_train: temperature must be > 0");
  if (pairs.pairs.empty())
    throw std::invalid_argument("align_train: empty pair dataset");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("align_train: batch_size must be >= 1");
  base.validate();

  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < base.ids.size(); ++i) row_of[base.ids[i]] = i;
  std::vector<std::pair<std::size_t, std::size_t>> pair_rows;
  pair_rows.reserve(pairs.pairs.size());
  for (const auto& p : pairs.pairs) {
    const auto t = row_of.find(p.trigger);
    const auto g = row_of.find(p.target);
    if (t == row_of.end() || g == row_of.end())
      throw std::invalid_argument("align_train: pair references unknown item " +
                                  (t == row_of.end() ? p.trigger : p.target));
    pair_rows.emplace_back(t->second, g->second);
  }

  Rng rng(seed);
  ProjectionHead head(base.cols(), cfg, rng);
  auto params = head.params();
  Sgd opt{cfg.lr, cfg.momentum, {}};

  AlignResult result;
  result.config = cfg;
  result.loss_curve.reserve(cfg.steps);

  Tape tape;
  std::vector<std::size_t> trig(cfg.batch_size), targ(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto& pr = pair_rows[rng.uniform_index(pair_rows.size())];
      trig[b] = pr.first;
      targ[b] = pr.second;
    }
    tape.clear();
    const auto tp = head.project(tape, base.data, trig);
    const auto gp = head.project(tape, base.data, targ);
    const auto loss = batch_contrastive_loss(tape, tp, gp, cfg.temperature);
    const double loss_v = tape.val(loss).at(0, 0);
    if (!std::isfinite(loss_v))
      throw TrainingDiverged("alignment loss diverged at step " +
                             std::to_string(step));
    result.loss_curve.push_back(loss_v);
    tape.backward(loss);
    opt.step(params);
  }

  // Project the full catalog.
  std::vector<std::size_t> all(base.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  tape.clear();
  const auto proj = head.project(tape, base.data, all);
  result.aligned_raw = tape.val(proj);
  const auto normed = tape.row_l2_normalize(proj);
  result.aligned.data = tape.val(normed);
  result.aligned.ids = base.ids;
  return result;
}

double eval_pair_recall(const EmbeddingMatrix& aligned,
                        const PairDataset& held_out, std::size_t k) {
  if (held_out.pairs.empty()) return 0.0;
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < aligned.ids.size(); ++i)
    row_of[aligned.ids[i]] = i;

  std::size_t hits = 0;
  for (const auto& p : held_out.pairs) {
    const auto t = row_of.find(p.trigger);
    const auto g = row_of.find(p.target);
    if (t == row_of.end() || g == row_of.end())
      throw std::invalid_argument(
          "eval_pair_recall: pair references unknown item");
    const auto nn =
        nearest_indices(aligned.data, aligned.data.row(t->second),
                        std::min(k, aligned.rows() - 1), Metric::Cosine,
                        t->second);
    if (std::find(nn.begin(), nn.end(), g->second) != nn.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(held_out.pairs.size());
}

}  // namespace qarm
