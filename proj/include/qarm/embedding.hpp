#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qarm/mat.hpp"

namespace qarm {

// Dense item-representation matrix: one row per item, with the ordered
// item-id list mapping row -> item. Base, ID and aligned embeddings all
// travel in this shape.
struct EmbeddingMatrix {
  Mat data;
  std::vector<std::string> ids;  // row index -> item id

  std::size_t rows() const { return data.rows; }
  std::size_t cols() const { return data.cols; }

  // Throws std::invalid_argument on non-finite values, empty shape,
  // duplicate ids or an id list that does not match the row count.
  void validate() const;
};

// QEMB v1 container: magic "QEMB", u16 version (=1), u64 N, u64 d,
// N length-prefixed id strings, then N*d IEEE-754 float32, all
// little-endian, row-major. Values are truncated to float32 on save.
void save_qemb(const std::filesystem::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix load_qemb(const std::filesystem::path& path);

// FNV-1a over the float32 image of the values plus the id list. Stable
// across a save/load round trip, which is what codebook staleness checks
// rely on.
std::uint64_t content_checksum(const EmbeddingMatrix& m);

// FNV-1a over raw file bytes; used by stage manifests.
std::uint64_t file_checksum(const std::filesystem::path& path);

std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace qarm
