#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qarm/embedding.hpp"
#include "qarm/synth.hpp"

namespace qarm {

enum class PairSource { U2i, I2i };

struct Pair {
  std::string trigger;
  std::string target;
  PairSource source = PairSource::U2i;
  double score = 0.0;
};

// Mined behavior pairs; trigger != target, no duplicate
// (trigger, target, source) triples.
struct PairDataset {
  std::vector<Pair> pairs;
};

// Matrix-factorization id-embedding model trained on ctr positives with
// sampled-negative binary cross-entropy. Stands in for a production
// User2Item retrieval model: its item rows define the "ID representation
// space" that U2I mining searches.
struct IdEmbeddingModel {
  EmbeddingMatrix item_embeddings;  // ids are item ids
  EmbeddingMatrix user_embeddings;  // ids are user ids
  std::size_t epochs = 0;
  std::vector<double> loss_curve;  // mean loss per epoch
};

struct MfConfig {
  std::size_t d_id = 16;
  std::size_t epochs = 3;
  double lr = 0.08;
  std::size_t negatives = 4;
};

// Random-init model covering every logged user and item (sorted ids).
IdEmbeddingModel make_initial_model(const InteractionLog& log,
                                    std::size_t d_id, std::uint64_t seed);

IdEmbeddingModel train_id_embeddings(const InteractionLog& log,
                                     const MfConfig& cfg, std::uint64_t seed);

double mf_score(const IdEmbeddingModel& m, const std::string& user_id,
                const std::string& item_id);

// For each positive event, the most id-similar item among the user's
// previous <= window positive clicks becomes the trigger.
PairDataset mine_u2i_pairs(const InteractionLog& log,
                           const IdEmbeddingModel& model,
                           std::size_t window = 50);

// Swing co-occurrence scores over ctr-positive item sets:
// s(i,j) = sum over user pairs co-clicking i and j of 1/(alpha + |Iu ∩ Iv|).
// Keys are (min_id, max_id); exposed for the symmetry property test.
std::map<std::pair<std::string, std::string>, double> swing_scores(
    const InteractionLog& log, double alpha, std::size_t user_cap = 200);

PairDataset mine_i2i_swing(const InteractionLog& log, double alpha = 1.0,
                           std::size_t top_m = 10, std::size_t user_cap = 200);

// Merge + dedup keeping max score per (trigger, target, source), then sort
// by (source, trigger, score desc, target).
PairDataset merge_pairs(const PairDataset& a, const PairDataset& b);

// Deterministic split for held-out evaluation pairs.
void split_pairs(const PairDataset& all, double holdout_frac,
                 std::uint64_t seed, PairDataset* train, PairDataset* holdout);

// TSV "trigger\ttarget\tsource\tscore", rows already in canonical order.
void save_pairs(const std::filesystem::path& path, const PairDataset& ds);
PairDataset load_pairs(const std::filesystem::path& path);

}  // namespace qarm
