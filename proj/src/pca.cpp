#include "qarm/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qarm {

void jacobi_eigen(const Mat& sym, std::vector<double>& eigenvalues,
                  Mat& eigenvectors) {
  const std::size_t d = sym.rows;
  Mat a = sym;
  eigenvectors = Mat(d, d);
  for (std::size_t i = 0; i < d; ++i) eigenvectors.at(i, i) = 1.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a.at(p, q) * a.at(p, q);
    if (off < 1e-24) break;

    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < d; ++i) {
          const double aip = a.at(i, p), aiq = a.at(i, q);
          a.at(i, p) = c * aip - s * aiq;
          a.at(i, q) = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double api = a.at(p, i), aqi = a.at(q, i);
          a.at(p, i) = c * api - s * aqi;
          a.at(q, i) = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double vip = eigenvectors.at(i, p),
                       viq = eigenvectors.at(i, q);
          eigenvectors.at(i, p) = c * vip - s * viq;
          eigenvectors.at(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  eigenvalues.resize(d);
  for (std::size_t i = 0; i < d; ++i) eigenvalues[i] = a.at(i, i);
}

Mat pca_project_2d(const Mat& X) {
  const std::size_t n = X.rows, d = X.cols;
  if (n < 2) throw std::invalid_argument("pca_project_2d: need N >= 2");

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += X.at(i, j);
  for (double& m : mean) m /= static_cast<double>(n);

  Mat cov(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < d; ++p) {
      const double xp = X.at(i, p) - mean[p];
      for (std::size_t q = p; q < d; ++q)
        cov.at(p, q) += xp * (X.at(i, q) - mean[q]);
    }
  for (std::size_t p = 0; p < d; ++p)
    for (std::size_t q = p; q < d; ++q) {
      cov.at(p, q) /= static_cast<double>(n - 1);
      cov.at(q, p) = cov.at(p, q);
    }

  std::vector<double> eigenvalues;
  Mat vecs;
  jacobi_eigen(cov, eigenvalues, vecs);

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (eigenvalues[a] != eigenvalues[b]) return eigenvalues[a] > eigenvalues[b];
    return a < b;
  });

  Mat proj(n, 2);
  for (int comp = 0; comp < 2; ++comp) {
    const std::size_t col = order[static_cast<std::size_t>(comp)];
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = vecs.at(j, col);
    // Sign convention: largest-magnitude loading positive.
    std::size_t arg = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0.0)
      for (double& x : v) x = -x;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (X.at(i, j) - mean[j]) * v[j];
      proj.at(i, static_cast<std::size_t>(comp)) = s;
    }
  }
  return proj;
}

}  // namespace qarm
