#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "asl/errors.hpp"
#include "asl/matrix.hpp"

namespace asl {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(x)) without overflow for large |x|.
inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// Exact GELU (erf form). Smooth, which keeps finite differences clean.
inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_derivative(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

// Row-wise softmax, stabilized by row-max subtraction.
inline Matrix softmax_rows(const Matrix& m) {
  if (!m.all_finite()) throw NumericError("softmax_rows: non-finite input");
  Matrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    double mx = m(i, 0);
    for (int j = 1; j < m.cols; ++j) mx = std::max(mx, m(i, j));
    double sum = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      double e = std::exp(m(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < m.cols; ++j) out(i, j) /= sum;
  }
  return out;
}

constexpr double kLayerNormEps = 1e-5;

// Normalizes v to zero mean, unit variance (population variance, eps in the
// denominator), then applies gain and bias elementwise.
inline std::vector<double> layer_norm(const std::vector<double>& v, const std::vector<double>& gain,
                                      const std::vector<double>& bias) {
  if (v.size() < 2) throw std::invalid_argument("layer_norm: length must be >= 2");
  if (gain.size() != v.size() || bias.size() != v.size())
    throw std::invalid_argument("layer_norm: gain/bias length mismatch");
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

}  // namespace asl
