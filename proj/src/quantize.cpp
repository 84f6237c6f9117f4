#include "qarm/quantize.hpp"

#include <algorithm>
#include <cmath>

#include "qarm/errors.hpp"
#include "qarm/nearest.hpp"
#include "qarm/tsv.hpp"

namespace qarm {

VQCodebook build_vq_codebook(const EmbeddingMatrix& aligned) {
  aligned.validate();
  for (std::size_t r = 0; r < aligned.rows(); ++r) {
    const double n = norm2(aligned.data.row(r));
    if (std::abs(n - 1.0) > 1e-6)
      throw std::invalid_argument(
          "build_vq_codebook: row " + std::to_string(r) +
          " is not unit-norm (" + fmt_double(n) + ")");
  }
  VQCodebook v;
  v.matrix = aligned;
  v.checksum = content_checksum(aligned);
  return v;
}

std::vector<std::size_t> vq_encode(const VQCodebook& v,
                                   std::span<const double> m, std::size_t K,
                                   std::optional<std::size_t> exclude_self) {
  return nearest_indices(v.matrix.data, m, K, Metric::Cosine, exclude_self);
}

RQCodebooks build_rq_codebooks(const Mat& M, std::size_t N, std::size_t L,
                               std::uint64_t seed,
                               std::size_t kmeans_max_iters,
                               double kmeans_tol) {
  if (L < 1) throw std::invalid_argument("build_rq_codebooks: L must be >= 1");
  if (N > M.rows)
    throw std::invalid_argument("build_rq_codebooks: N exceeds row count");

  RQCodebooks out;
  out.n_centroids = N;
  out.d = M.cols;
  out.seed = seed;

  Mat residual = M;
  for (std::size_t level = 0; level < L; ++level) {
    Centroids c =
        kmeans_fit(residual, N, kmeans_max_iters, kmeans_tol, seed + level + 1);
    // Subtract each point's nearest centroid to form the next level's input.
    for (std::size_t i = 0; i < residual.rows; ++i) {
      const auto idx =
          nearest_indices(c.data, residual.row(i), 1, Metric::SquaredL2)[0];
      auto row = residual.row(i);
      auto cent = c.data.row(idx);
      for (std::size_t j = 0; j < residual.cols; ++j) row[j] -= cent[j];
    }
    out.levels.push_back(std::move(c));
  }
  return out;
}

RqCode rq_encode(const RQCodebooks& r, std::span<const double> m) {
  if (m.size() != r.d)
    throw std::invalid_argument("rq_encode: dimension mismatch");
  RqCode out;
  std::vector<double> residual(m.begin(), m.end());
  for (const Centroids& level : r.levels) {
    const auto idx = nearest_indices(level.data, residual, 1,
                                     Metric::SquaredL2)[0];
    out.codes.push_back(idx);
    auto cent = level.data.row(idx);
    for (std::size_t j = 0; j < residual.size(); ++j) residual[j] -= cent[j];
  }
  out.residual_norm = norm2(residual);
  return out;
}

RQCodebooks truncate_levels(const RQCodebooks& r, std::size_t levels) {
  if (levels < 1 || levels > r.levels.size())
    throw std::invalid_argument("truncate_levels: bad level count");
  RQCodebooks out;
  out.n_centroids = r.n_centroids;
  out.d = r.d;
  out.seed = r.seed;
  out.levels.assign(r.levels.begin(),
                    r.levels.begin() + static_cast<std::ptrdiff_t>(levels));
  return out;
}

std::vector<SemanticCodes> encode_catalog(const EmbeddingMatrix& aligned_norm,
                                          const Mat& aligned_raw,
                                          const VQCodebook& v,
                                          const RQCodebooks& r, std::size_t K,
                                          bool vq_exclude_self) {
  if (v.checksum != content_checksum(aligned_norm))
    throw StaleArtifact(
        "encode_catalog: VQ codebook was built from a different aligned "
        "matrix (re-run build-codes)");
  if (aligned_raw.rows != aligned_norm.rows())
    throw std::invalid_argument("encode_catalog: raw/normalized row mismatch");

  std::vector<SemanticCodes> codes(aligned_norm.rows());
  for (std::size_t i = 0; i < aligned_norm.rows(); ++i) {
    SemanticCodes sc;
    sc.item_id = aligned_norm.ids[i];
    sc.vq = vq_encode(v, aligned_norm.data.row(i), K,
                      vq_exclude_self ? std::optional<std::size_t>(i)
                                      : std::nullopt);
    RqCode rq = rq_encode(r, aligned_raw.row(i));
    sc.rq = std::move(rq.codes);
    sc.rq_residual_norm = rq.residual_norm;
    codes[i] = std::move(sc);
  }
  std::sort(codes.begin(), codes.end(),
            [](const SemanticCodes& a, const SemanticCodes& b) {
              return a.item_id < b.item_id;
            });
  return codes;
}

double mean_squared_residual(const std::vector<SemanticCodes>& codes) {
  if (codes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : codes) s += c.rq_residual_norm * c.rq_residual_norm;
  return s / static_cast<double>(codes.size());
}

void save_codes(const std::filesystem::path& path,
                const std::vector<SemanticCodes>& codes, std::size_t K,
                std::size_t L) {
  std::string out = "item_id";
  for (std::size_t k = 0; k < K; ++k) out += "\tv" + std::to_string(k + 1);
  for (std::size_t l = 0; l < L; ++l) out += "\tr" + std::to_string(l + 1);
  out += "\tresidual_norm\n";
  for (const auto& c : codes) {
    if (c.vq.size() != K || c.rq.size() != L)
      throw std::invalid_argument("save_codes: code width mismatch");
    out += c.item_id;
    for (std::size_t v : c.vq) out += '\t' + std::to_string(v);
    for (std::size_t r : c.rq) out += '\t' + std::to_string(r);
    out += '\t' + fmt_double(c.rq_residual_norm) + '\n';
  }
  write_text(path, out);
}

std::vector<SemanticCodes> load_codes(const std::filesystem::path& path,
                                      std::size_t K, std::size_t L) {
  const auto lines = read_lines(path);
  if (lines.empty())
    throw std::invalid_argument("codes: empty file " + path.string());
  std::string header = "item_id";
  for (std::size_t k = 0; k < K; ++k) header += "\tv" + std::to_string(k + 1);
  for (std::size_t l = 0; l < L; ++l) header += "\tr" + std::to_string(l + 1);
  header += "\tresidual_norm";
  if (lines[0] != header)
    throw std::invalid_argument("codes: header mismatch in " + path.string());

  std::vector<SemanticCodes> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_tabs(lines[i]);
    if (f.size() != 2 + K + L)
      throw std::invalid_argument("codes: bad row in " + path.string());
    SemanticCodes c;
    c.item_id = f[0];
    for (std::size_t k = 0; k < K; ++k)
      c.vq.push_back(static_cast<std::size_t>(parse_int(f[1 + k])));
    for (std::size_t l = 0; l < L; ++l)
      c.rq.push_back(static_cast<std::size_t>(parse_int(f[1 + K + l])));
    c.rq_residual_norm = parse_double(f[1 + K + L]);
    out.push_back(std::move(c));
  }
  return out;
}

void save_rq_codebooks(const std::filesystem::path& dir, const RQCodebooks& r,
                       std::size_t K, std::uint64_t aligned_checksum) {
  std::filesystem::create_directories(dir);
  std::string manifest;
  manifest += "levels=" + std::to_string(r.levels.size()) + "\n";
  manifest += "n_centroids=" + std::to_string(r.n_centroids) + "\n";
  manifest += "d=" + std::to_string(r.d) + "\n";
  manifest += "K=" + std::to_string(K) + "\n";
  manifest += "seed=" + std::to_string(r.seed) + "\n";
  manifest += "metric_vq=cosine\n";
  manifest += "metric_rq=squared_l2\n";
  manifest += "aligned_checksum=" + std::to_string(aligned_checksum) + "\n";
  for (std::size_t l = 0; l < r.levels.size(); ++l) {
    EmbeddingMatrix m;
    m.data = r.levels[l].data;
    for (std::size_t i = 0; i < r.n_centroids; ++i)
      m.ids.push_back(std::to_string(i));
    const auto file = "rq_level_" + std::to_string(l + 1) + ".qemb";
    save_qemb(dir / file, m);
    manifest += "level_" + std::to_string(l + 1) +
                "_inertia=" + fmt_double(r.levels[l].inertia) + "\n";
  }
  write_text(dir / "codebooks.manifest", manifest);
}

RQCodebooks load_rq_codebooks(const std::filesystem::path& dir,
                              std::uint64_t* aligned_checksum) {
  const auto lines = read_lines(dir / "codebooks.manifest");
  std::size_t levels = 0;
  RQCodebooks r;
  for (const auto& line : lines) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "levels") levels = static_cast<std::size_t>(parse_int(val));
    if (key == "n_centroids")
      r.n_centroids = static_cast<std::size_t>(parse_int(val));
    if (key == "d") r.d = static_cast<std::size_t>(parse_int(val));
    if (key == "seed") r.seed = static_cast<std::uint64_t>(parse_int(val));
    if (key == "aligned_checksum" && aligned_checksum)
      *aligned_checksum = static_cast<std::uint64_t>(
          std::stoull(val));
  }
  for (std::size_t l = 0; l < levels; ++l) {
    const auto file = dir / ("rq_level_" + std::to_string(l + 1) + ".qemb");
    EmbeddingMatrix m = load_qemb(file);
    Centroids c;
    c.k = m.rows();
    c.d = m.cols();
    c.data = m.data;
    r.levels.push_back(std::move(c));
  }
  return r;
}

}  // namespace qarm
