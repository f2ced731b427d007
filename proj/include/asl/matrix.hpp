#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace asl {

// Dense row-major matrix of doubles. The one tensor type of the toolkit;
// vectors are n x 1 (columns) or 1 x n (rows) as noted at each use site.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative shape");
  }

  static Matrix scalar(double v) {
    Matrix m(1, 1);
    m.a[0] = v;
    return m;
  }

  static Matrix zeros_like(const Matrix& m) { return Matrix(m.rows, m.cols); }

  static Matrix from_column(const std::vector<double>& v) {
    Matrix m(static_cast<int>(v.size()), 1);
    m.a = v;
    return m;
  }

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  size_t size() const { return a.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : a)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

inline void check_same_shape(const Matrix& x, const Matrix& y, const char* where) {
  if (!x.same_shape(y))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " + shape_str(x) + " vs " + shape_str(y));
}

}  // namespace asl
