#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "astro/errors.hpp"

namespace astro {

inline std::string shape_str(const std::vector<size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

// Dense row-major tensor of doubles. Rank is dynamic; most of the library
// works on rank-1/2 views through raw pointers for speed.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> shp) : shape(std::move(shp)) {
    data.assign(numel_of(shape), 0.0);
  }

  static size_t numel_of(const std::vector<size_t>& shp) {
    size_t n = 1;
    for (size_t d : shp) n *= d;
    return n;
  }

  size_t numel() const { return data.size(); }
  size_t dim(size_t i) const { return shape.at(i); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  // Row pointer for rank-2 tensors.
  double* row(size_t r) { return data.data() + r * shape[1]; }
  const double* row(size_t r) const { return data.data() + r * shape[1]; }

  double& at(size_t i, size_t j) { return data[i * shape[1] + j]; }
  double at(size_t i, size_t j) const { return data[i * shape[1] + j]; }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require_shape(const Tensor& t, const std::vector<size_t>& want,
                          const char* what) {
  if (t.shape != want) {
    throw ValidationError(std::string(what) + ": expected shape " + shape_str(want) +
                          ", got " + shape_str(t.shape));
  }
}

// C (m x n) = or += A (m x k) * B (k x n). Row-major, i-k-j loop order so the
// inner loop runs over contiguous rows of B and C.
inline void matmul(const double* a, const double* b, double* c, size_t m, size_t k,
                   size_t n, bool accumulate = false) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (m x n) = or += A (m x k) * B^T where B is (n x k).
inline void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k,
                      size_t n, bool accumulate = false) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

// C (k x n) += A^T * B where A is (m x k), B is (m x n). Accumulating form
// used for weight gradients.
inline void matmul_tn_acc(const double* a, const double* b, double* c, size_t m,
                          size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace astro
