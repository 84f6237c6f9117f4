#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace qarm {

// Row-major dense matrix of doubles. The workhorse container for
// embeddings, centroids and model parameters.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), a(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {a.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {a.data() + r * cols, cols};
  }

  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool all_finite() const {
    for (double v : a)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { a.assign(a.size(), v); }

  bool operator==(const Mat& o) const {
    return rows == o.rows && cols == o.cols && a == o.a;
  }
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double squared_l2(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

// Cosine similarity; throws on zero-norm input.
inline double cosine(std::span<const double> x, std::span<const double> y) {
  const double nx = norm2(x), ny = norm2(y);
  if (nx == 0.0 || ny == 0.0)
    throw std::invalid_argument("cosine: zero-norm vector");
  return dot(x, y) / (nx * ny);
}

}  // namespace qarm
