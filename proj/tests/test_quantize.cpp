#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "qarm/errors.hpp"
#include "qarm/quantize.hpp"
#include "qarm/rng.hpp"

using namespace qarm;

namespace {

Mat from_rows(const std::vector<std::vector<double>>& rows) {
  Mat m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

EmbeddingMatrix unit_catalog(std::size_t n, std::size_t d,
                             std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingMatrix m;
  m.data = Mat(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    double nn = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      m.data.at(r, c) = rng.normal();
      nn += m.data.at(r, c) * m.data.at(r, c);
    }
    nn = std::sqrt(nn);
    for (std::size_t c = 0; c < d; ++c) m.data.at(r, c) /= nn;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "i%04zu", r);
    m.ids.push_back(buf);
  }
  return m;
}

}  // namespace

TEST_CASE("vq: codebook wraps the matrix and records a stable checksum") {
  const EmbeddingMatrix m = unit_catalog(3, 6, 1);
  const VQCodebook a = build_vq_codebook(m);
  const VQCodebook b = build_vq_codebook(m);
  CHECK(a.matrix.rows() == 3);
  CHECK(a.checksum == b.checksum);
  CHECK(a.checksum == content_checksum(m));
}

TEST_CASE("vq: rejects non-normalized rows") {
  EmbeddingMatrix m = unit_catalog(3, 6, 2);
  m.data.at(1, 0) *= 1.5;
  CHECK_THROWS_AS(build_vq_codebook(m), std::invalid_argument);
}

TEST_CASE("vq: own row is the first code; exclusion skips it") {
  const EmbeddingMatrix m = unit_catalog(10, 8, 3);
  const VQCodebook v = build_vq_codebook(m);
  const auto with_self = vq_encode(v, m.data.row(5), 1);
  CHECK(with_self == std::vector<std::size_t>{5});
  const auto without = vq_encode(v, m.data.row(5), 1, 5);
  CHECK(without[0] != 5);
  CHECK_THROWS_AS(vq_encode(v, m.data.row(5), 11), std::invalid_argument);
  CHECK_THROWS_AS(vq_encode(v, m.data.row(5), 10, 5), std::invalid_argument);
}

TEST_CASE("vq: one-hot catalog orders codes by cosine") {
  EmbeddingMatrix m;
  m.data = from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  m.ids = {"a", "b", "c"};
  const VQCodebook v = build_vq_codebook(m);
  const double n = std::sqrt(0.8 * 0.8 + 0.6 * 0.6);
  const std::vector<double> q{0.8 / n, 0.6 / n, 0.0};
  const auto codes = vq_encode(v, q, 2);
  CHECK(codes == std::vector<std::size_t>{0, 1});
}

TEST_CASE("rq: L=1, N=rows of distinct points -> zero inertia and residual") {
  const Mat M = from_rows({{0, 0}, {1, 1}, {2, 0}, {-1, 3}});
  const RQCodebooks r = build_rq_codebooks(M, 4, 1, 9);
  CHECK(r.levels[0].inertia == doctest::Approx(0.0));
  for (std::size_t i = 0; i < M.rows; ++i) {
    const RqCode c = rq_encode(r, M.row(i));
    CHECK(c.residual_norm == doctest::Approx(0.0));
  }
}

TEST_CASE("rq: single-level toy encodes the nearest centroid") {
  RQCodebooks r;
  r.n_centroids = 2;
  r.d = 2;
  Centroids level;
  level.k = 2;
  level.d = 2;
  level.data = from_rows({{0, 0}, {4, 0}});
  r.levels.push_back(level);

  const std::vector<double> m{3, 0};
  const RqCode c = rq_encode(r, m);
  CHECK(c.codes == std::vector<std::size_t>{1});
  CHECK(c.residual_norm == doctest::Approx(1.0));

  const std::vector<double> bad{1, 2, 3};
  CHECK_THROWS_AS(rq_encode(r, bad), std::invalid_argument);
}

TEST_CASE("rq: second level shrinks the residuals of two tight clusters") {
  Rng rng(17);
  Mat M(20, 4);
  for (std::size_t i = 0; i < 20; ++i) {
    const double base = i < 10 ? 0.0 : 8.0;
    for (std::size_t j = 0; j < 4; ++j)
      M.at(i, j) = base + 0.05 * rng.normal();
  }
  const RQCodebooks r2 = build_rq_codebooks(M, 2, 2, 5);
  const RQCodebooks r1 = truncate_levels(r2, 1);

  double mean1 = 0.0, mean2 = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    mean1 += rq_encode(r1, M.row(i)).residual_norm;
    mean2 += rq_encode(r2, M.row(i)).residual_norm;
  }
  CHECK(mean2 < mean1);
}

TEST_CASE("rq: deterministic for fixed seed") {
  Rng rng(21);
  Mat M(50, 6);
  for (double& v : M.a) v = rng.normal();
  const RQCodebooks a = build_rq_codebooks(M, 8, 3, 77);
  const RQCodebooks b = build_rq_codebooks(M, 8, 3, 77);
  for (std::size_t l = 0; l < 3; ++l)
    CHECK(a.levels[l].data == b.levels[l].data);
  CHECK_THROWS_AS(build_rq_codebooks(M, 51, 1, 1), std::invalid_argument);
}

TEST_CASE("rq: reconstruction identity holds numerically") {
  Rng rng(23);
  Mat M(40, 5);
  for (double& v : M.a) v = rng.normal();
  const RQCodebooks r = build_rq_codebooks(M, 6, 3, 31);
  for (std::size_t i = 0; i < M.rows; ++i) {
    const RqCode c = rq_encode(r, M.row(i));
    std::vector<double> recon(5, 0.0);
    for (std::size_t l = 0; l < 3; ++l) {
      const auto cent = r.levels[l].data.row(c.codes[l]);
      for (std::size_t j = 0; j < 5; ++j) recon[j] += cent[j];
    }
    double err = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      const double d = M.at(i, j) - recon[j];
      err += d * d;
    }
    CHECK(std::sqrt(err) == doctest::Approx(c.residual_norm).epsilon(1e-5));
  }
}

TEST_CASE("encode_catalog: self-first codes, sorted output, stale guard") {
  const EmbeddingMatrix aligned = unit_catalog(30, 8, 41);
  Rng rng(42);
  Mat raw(30, 8);
  for (double& v : raw.a) v = rng.normal();

  const VQCodebook v = build_vq_codebook(aligned);
  const RQCodebooks r = build_rq_codebooks(raw, 5, 3, 43);
  const auto codes = encode_catalog(aligned, raw, v, r, 4);
  REQUIRE(codes.size() == 30);
  for (std::size_t i = 1; i < codes.size(); ++i)
    CHECK(codes[i - 1].item_id < codes[i].item_id);
  for (const auto& c : codes) {
    REQUIRE(c.vq.size() == 4);
    REQUIRE(c.rq.size() == 3);
    CHECK(c.rq_residual_norm >= 0.0);
  }
  // ids are already sorted in unit_catalog, so row i <-> codes[i].
  for (std::size_t i = 0; i < codes.size(); ++i) CHECK(codes[i].vq[0] == i);

  const EmbeddingMatrix other = unit_catalog(30, 8, 99);
  CHECK_THROWS_AS(encode_catalog(other, raw, v, r, 4), StaleArtifact);
}

TEST_CASE("encode_catalog: identical rows share rq codes and vq sets") {
  EmbeddingMatrix aligned = unit_catalog(12, 6, 51);
  // Make rows 3 and 7 identical.
  std::copy(aligned.data.row(3).begin(), aligned.data.row(3).end(),
            aligned.data.row(7).begin());
  Mat raw = aligned.data;

  const VQCodebook v = build_vq_codebook(aligned);
  const RQCodebooks r = build_rq_codebooks(raw, 4, 2, 52);
  const auto codes = encode_catalog(aligned, raw, v, r, 5);
  CHECK(codes[3].rq == codes[7].rq);

  std::set<std::size_t> a(codes[3].vq.begin(), codes[3].vq.end());
  std::set<std::size_t> b(codes[7].vq.begin(), codes[7].vq.end());
  a.erase(3); a.erase(7);
  b.erase(3); b.erase(7);
  CHECK(a == b);
}

TEST_CASE("encode_catalog: residual decays as levels accumulate") {
  const EmbeddingMatrix aligned = unit_catalog(200, 8, 61);
  Rng rng(62);
  Mat raw(200, 8);
  for (double& v : raw.a) v = rng.normal();
  const VQCodebook v = build_vq_codebook(aligned);
  const RQCodebooks full = build_rq_codebooks(raw, 16, 4, 63);

  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t L = 1; L <= 4; ++L) {
    const RQCodebooks trunc = truncate_levels(full, L);
    const auto codes = encode_catalog(aligned, raw, v, trunc, 2);
    const double mse = mean_squared_residual(codes);
    CHECK(mse <= prev + 1e-12);
    prev = mse;
  }
}

TEST_CASE("encode_catalog: paper-default shape K=25 L=6 d=64 is accepted") {
  const EmbeddingMatrix aligned = unit_catalog(100, 64, 71);
  Rng rng(72);
  Mat raw(100, 64);
  for (double& v : raw.a) v = rng.normal();
  const VQCodebook v = build_vq_codebook(aligned);
  const RQCodebooks r = build_rq_codebooks(raw, 32, 6, 73, 10);
  const auto codes = encode_catalog(aligned, raw, v, r, 25);
  REQUIRE(codes.size() == 100);
  CHECK(codes[0].vq.size() == 25);
  CHECK(codes[0].rq.size() == 6);
}

TEST_CASE("codes: TSV round trip") {
  const EmbeddingMatrix aligned = unit_catalog(10, 4, 81);
  const VQCodebook v = build_vq_codebook(aligned);
  const RQCodebooks r = build_rq_codebooks(aligned.data, 3, 2, 82);
  const auto codes = encode_catalog(aligned, aligned.data, v, r, 3);

  const auto path = std::filesystem::temp_directory_path() / "qarm_codes.tsv";
  save_codes(path, codes, 3, 2);
  const auto back = load_codes(path, 3, 2);
  REQUIRE(back.size() == codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    CHECK(back[i].item_id == codes[i].item_id);
    CHECK(back[i].vq == codes[i].vq);
    CHECK(back[i].rq == codes[i].rq);
    CHECK(back[i].rq_residual_norm ==
          doctest::Approx(codes[i].rq_residual_norm));
  }
  CHECK_THROWS_AS(load_codes(path, 4, 2), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST_CASE("codebooks: directory round trip keeps centroids and metadata") {
  Rng rng(91);
  Mat M(40, 6);
  for (double& v : M.a) v = rng.normal();
  const RQCodebooks r = build_rq_codebooks(M, 8, 3, 92);

  const auto dir = std::filesystem::temp_directory_path() / "qarm_cbooks";
  save_rq_codebooks(dir, r, 7, 12345);
  std::uint64_t checksum = 0;
  const RQCodebooks back = load_rq_codebooks(dir, &checksum);
  CHECK(checksum == 12345);
  CHECK(back.levels.size() == 3);
  CHECK(back.n_centroids == 8);
  CHECK(back.d == 6);
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t i = 0; i < back.levels[l].data.a.size(); ++i)
      CHECK(back.levels[l].data.a[i] ==
            doctest::Approx(r.levels[l].data.a[i]).epsilon(1e-6));
  std::filesystem::remove_all(dir);
}
