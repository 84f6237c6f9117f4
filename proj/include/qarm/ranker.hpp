#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qarm/features.hpp"
#include "qarm/synth.hpp"

namespace qarm {

// Feature ladder mirroring the ablation rows: id-only baseline, frozen
// aligned representations, then trainable code lookups.
enum class Variant { Baseline, IaRep, Vq, Rq, VqRq };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct RankingExample {
  std::size_t user_row = 0;  // 0 = out-of-vocab
  std::size_t item_row = 0;  // 0 = out-of-vocab, else catalog index + 1
  std::vector<std::size_t> history_rows;  // chronological, in-vocab, +1 shifted
  int y_ctr = 0;
  int y_cvr = 0;
  std::int64_t ts = 0;
};

struct DatasetSplit {
  std::vector<RankingExample> train, valid, test;
};

struct RankerConfig {
  Variant variant = Variant::Baseline;
  std::size_t e = 8;       // code embedding width
  std::size_t e_id = 8;    // id embedding width
  std::size_t h = 16;      // feature representation width
  std::size_t item_hidden = 32;
  std::size_t experts = 4;
  std::size_t expert_hidden = 32;
  double lr = 0.15;
  std::size_t epochs = 2;
  std::size_t batch = 32;
  std::size_t n_history = 20;
  std::size_t max_matched = 10;
  std::vector<std::size_t> prefixes = {1, 2};
  std::vector<std::string> tasks = {"ctr", "cvr"};
};

// Time-ordered split: train gets the earliest events, test the latest.
// Histories contain only strictly earlier ctr-positives of the same user.
DatasetSplit assemble_dataset(const InteractionLog& log,
                              const std::vector<std::string>& item_ids,
                              const std::vector<std::string>& user_ids,
                              std::size_t n_history, double train_frac,
                              double valid_frac, double test_frac);

// Multi-task mixture-of-experts ranker. Gates are per-task softmaxes over
// the shared experts; towers emit one logit per task.
struct MoEModel {
  RankerConfig cfg;
  CodeEmbeddingTables tables;  // empty unless the variant uses codes
  FeatureNets nets;
  Param user_table, item_table;

  struct Expert {
    Param W1, b1, W2, b2;
  };
  std::vector<Expert> experts;

  struct TaskHead {
    std::string task;
    Param gate_W, gate_b;
    Param tower_w, tower_b;
  };
  std::vector<TaskHead> heads;

  // Borrowed inputs; the aligned matrix is frozen by construction (it is
  // never registered as a parameter, so no gradient can reach it).
  const std::vector<SemanticCodes>* codes = nullptr;
  const Mat* aligned = nullptr;

  std::size_t input_dim = 0;

  bool uses_codes() const {
    return cfg.variant == Variant::Vq || cfg.variant == Variant::Rq ||
           cfg.variant == Variant::VqRq;
  }

  std::vector<Param*> trainable_params();

  struct ForwardTrace {
    std::vector<std::vector<double>> gates;  // one per task
    FeatureTrace features;
  };

  // One logit node per task.
  std::vector<Tape::NodeId> forward(Tape& tape, const RankingExample& ex,
                                    ForwardTrace* trace = nullptr);

  // Per-task probabilities for a batch of examples.
  std::vector<std::array<double, 2>> predict(
      std::span<const RankingExample> examples);
};

MoEModel make_moe_model(const RankerConfig& cfg,
                        const std::vector<SemanticCodes>* codes,
                        const Mat* aligned, std::size_t n_users,
                        std::size_t n_items, std::uint64_t seed);

struct TrainStats {
  std::vector<double> epoch_loss;  // mean per-example loss
  // Max |grad| reaching any code-table row at each step (probe for the
  // learnability contrast); empty unless requested.
  std::vector<double> step_code_grad_linf;
};

TrainStats train_ranker(MoEModel& model, const std::vector<RankingExample>& train,
                        std::uint64_t seed, bool probe_code_grads = false);

std::uint64_t params_checksum(MoEModel& model);

void save_checkpoint(const std::filesystem::path& dir, MoEModel& model);
MoEModel load_checkpoint(const std::filesystem::path& dir,
                         const std::vector<SemanticCodes>* codes,
                         const Mat* aligned);

void save_epoch_metrics(const std::filesystem::path& path,
                        const TrainStats& stats);

}  // namespace qarm
