#pragma once

#include <vector>

#include "qarm/autograd.hpp"
#include "qarm/quantize.hpp"

namespace qarm {

// Sentinel for "no code": resolves to the reserved row 0 of every table.
inline constexpr std::size_t kOovCode = static_cast<std::size_t>(-1);

// Which code families feed the model. IDLookUp concatenates the enabled
// families in (vq, rq) order.
struct CodeFeatureConfig {
  bool use_vq = true;
  bool use_rq = true;
  std::size_t K = 8;        // VQ codes per item
  std::size_t L = 4;        // RQ levels
  std::size_t vq_vocab = 0;  // catalog size (+1 reserved OOV row 0)
  std::size_t rq_vocab = 0;  // centroids per level (+1 reserved OOV row 0)
  std::size_t e = 8;        // embedding width per code position

  std::size_t code_dim() const {
    return ((use_vq ? K : 0) + (use_rq ? L : 0)) * e;
  }
};

// One shared table for all K VQ positions (vocab = catalog), one table per
// RQ level (vocab = centroids). Row 0 of every table is the out-of-vocab
// row; stored code c maps to row c + 1.
struct CodeEmbeddingTables {
  CodeFeatureConfig cfg;
  Param vq_table;
  std::vector<Param> rq_tables;

  CodeEmbeddingTables() = default;
  CodeEmbeddingTables(const CodeFeatureConfig& cfg, Rng& rng);

  std::vector<Param*> params();
};

// Code_i = IDLookUp([v1..vK] ++ [r1..rL]) as a 1 x code_dim node.
Tape::NodeId lookup_code_embedding(Tape& tape, CodeEmbeddingTables& tables,
                                   const SemanticCodes& codes);

// Reserved codes for an out-of-vocab item: every position points at row 0.
SemanticCodes oov_codes(const CodeFeatureConfig& cfg);

// For each requested prefix length p, the indices (into `history`,
// most-recent-first) of items among the latest max_len whose first p RQ
// codes match the target's. Longer prefixes select subsets of shorter
// ones by construction.
std::vector<std::vector<std::size_t>> target_aware_search(
    const std::vector<const SemanticCodes*>& history,
    const SemanticCodes& target, const std::vector<std::size_t>& prefix_lengths,
    std::size_t max_len);

// Nets over code embeddings: a 2-layer MLP for the target item, mean-pool
// plus affine for the history, and per-prefix dot-product attention with
// the item representation as query. Empty matched sequences contribute a
// learned null vector.
struct FeatureNets {
  std::size_t h = 16;  // representation width

  Param item_W1, item_b1, item_W2, item_b2;
  Param user_W, user_b;
  struct PrefixAttention {
    Param key_W;
    Param value_W;
    Param null_vec;  // 1 x h
  };
  std::vector<PrefixAttention> prefixes;

  FeatureNets() = default;
  FeatureNets(const CodeFeatureConfig& cfg, std::size_t h,
              std::size_t item_hidden, const std::vector<std::size_t>& plens,
              Rng& rng);

  std::vector<Param*> params();
};

struct FeatureBundle {
  Tape::NodeId item_code_rep;   // 1 x h
  Tape::NodeId user_code_rep;   // 1 x h
  Tape::NodeId cross_code_rep;  // 1 x (h * |prefixes|)
};

// Attention weights per prefix, captured when a trace sink is supplied.
struct FeatureTrace {
  std::vector<std::vector<double>> attention;  // one vector per prefix
};

FeatureBundle build_feature_bundle(
    Tape& tape, CodeEmbeddingTables& tables, FeatureNets& nets,
    const std::vector<const SemanticCodes*>& history,
    const SemanticCodes& target, const std::vector<std::size_t>& prefix_lengths,
    std::size_t max_matched, FeatureTrace* trace = nullptr);

}  // namespace qarm
