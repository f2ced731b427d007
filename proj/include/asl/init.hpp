#pragma once

#include <cmath>

#include "asl/matrix.hpp"
#include "asl/rng.hpp"

namespace asl {

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight init.
inline Matrix uniform_init(int rows, int cols, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (double& e : m.a) e = rng.uniform(-bound, bound);
  return m;
}

}  // namespace asl
