#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qarm/embedding.hpp"
#include "qarm/kmeans.hpp"

namespace qarm {

// The VQ codebook is the full aligned catalog itself (no copy drift: a
// content checksum ties it to the matrix it wrapped).
struct VQCodebook {
  EmbeddingMatrix matrix;  // unit-norm rows
  std::uint64_t checksum = 0;
};

// L levels of residual k-means centroids, each with the same centroid
// count and dimension.
struct RQCodebooks {
  std::vector<Centroids> levels;
  std::size_t n_centroids = 0;
  std::size_t d = 0;
  std::uint64_t seed = 0;
};

struct SemanticCodes {
  std::string item_id;
  std::vector<std::size_t> vq;  // K catalog indices
  std::vector<std::size_t> rq;  // L centroid indices, one per level
  double rq_residual_norm = 0.0;
};

VQCodebook build_vq_codebook(const EmbeddingMatrix& aligned);

// Top-K cosine neighbors, ties by ascending index, optional self skip.
std::vector<std::size_t> vq_encode(const VQCodebook& v,
                                   std::span<const double> m, std::size_t K,
                                   std::optional<std::size_t> exclude_self =
                                       std::nullopt);

// Level 1 fits M; level l fits the residuals left by level l-1. Per-level
// seeds are seed + level.
RQCodebooks build_rq_codebooks(const Mat& M, std::size_t N, std::size_t L,
                               std::uint64_t seed,
                               std::size_t kmeans_max_iters = 50,
                               double kmeans_tol = 1e-9);

struct RqCode {
  std::vector<std::size_t> codes;
  double residual_norm = 0.0;
};

// Greedy per-level nearest-centroid encoding under squared-L2, subtracting
// each level's chosen centroid from the running residual.
RqCode rq_encode(const RQCodebooks& r, std::span<const double> m);

// Codebooks truncated to the first `levels` levels (for residual-decay
// measurements).
RQCodebooks truncate_levels(const RQCodebooks& r, std::size_t levels);

// Full-catalog encoding: VQ on the normalized rows, RQ on the raw
// projections. Throws StaleArtifact when V was not built from
// aligned_norm. Output is sorted by item_id.
std::vector<SemanticCodes> encode_catalog(const EmbeddingMatrix& aligned_norm,
                                          const Mat& aligned_raw,
                                          const VQCodebook& v,
                                          const RQCodebooks& r, std::size_t K,
                                          bool vq_exclude_self = false);

double mean_squared_residual(const std::vector<SemanticCodes>& codes);

// TSV "item_id  v1..vK  r1..rL  residual_norm".
void save_codes(const std::filesystem::path& path,
                const std::vector<SemanticCodes>& codes, std::size_t K,
                std::size_t L);
std::vector<SemanticCodes> load_codes(const std::filesystem::path& path,
                                      std::size_t K, std::size_t L);

// One QEMB per level plus a key=value manifest carrying shapes, metrics,
// seeds and the aligned-matrix checksum.
void save_rq_codebooks(const std::filesystem::path& dir, const RQCodebooks& r,
                       std::size_t K, std::uint64_t aligned_checksum);
RQCodebooks load_rq_codebooks(const std::filesystem::path& dir,
                              std::uint64_t* aligned_checksum = nullptr);

}  // namespace qarm
