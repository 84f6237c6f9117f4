#pragma once

#include <cstdint>
#include <vector>

#include "qarm/autograd.hpp"
#include "qarm/embedding.hpp"
#include "qarm/pairs.hpp"

namespace qarm {

struct AlignConfig {
  std::size_t d_hidden = 64;
  std::size_t d_out = 32;
  double temperature = 0.05;
  double lr = 0.1;
  double momentum = 0.0;
  std::size_t steps = 800;
  std::size_t batch_size = 128;
  int layers = 2;  // 1 = single affine map, 2 = affine/relu/affine
};

// Trainable projection over frozen base embeddings. Both sides of a pair
// go through the same head.
struct ProjectionHead {
  Param W1, b1, W2, b2;
  int layers = 2;

  ProjectionHead() = default;
  ProjectionHead(std::size_t d_base, const AlignConfig& cfg, Rng& rng);

  std::vector<Param*> params();

  // Projects the given rows; output is pre-normalization.
  Tape::NodeId project(Tape& tape, const Mat& base,
                       const std::vector<std::size_t>& rows) const;
};

struct AlignResult {
  EmbeddingMatrix aligned;  // L2-normalized rows (feeds the VQ codebook)
  Mat aligned_raw;          // pre-normalization projections (feeds RQ fits)
  std::vector<double> loss_curve;
  AlignConfig config;
};

// Symmetric in-batch softmax contrastive loss on normalized projections:
// logits = (T . G^T) / temperature, cross-entropy against the diagonal,
// averaged over both directions. Exposed so tests can feed exact inputs.
Tape::NodeId batch_contrastive_loss(Tape& tape, Tape::NodeId trigger_proj,
                                    Tape::NodeId target_proj,
                                    double temperature);

// Pure evaluation of the loss on explicit projection matrices (rows are
// already projected, pre-normalization).
double batch_contrastive_loss_value(const Mat& trigger_proj,
                                    const Mat& target_proj,
                                    double temperature);

AlignResult align_train(const EmbeddingMatrix& base, const PairDataset& pairs,
                        const AlignConfig& cfg, std::uint64_t seed);

// Fraction of pairs whose target lands in the k cosine-nearest catalog
// rows of the trigger (self excluded).
double eval_pair_recall(const EmbeddingMatrix& aligned,
                        const PairDataset& held_out, std::size_t k);

}  // namespace qarm
