#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace asl {

// Deterministic RNG wrapper. Distributions are hand-rolled on top of the
// raw 64-bit stream so that sequences are identical across standard
// libraries (std::*_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Box-Muller; the spare value is discarded to keep the stream simple.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream, for splitting one seed into sub-generators.
  Rng child(uint64_t salt) {
    uint64_t s = next_u64() ^ (salt * 0x9E3779B97F4A7C15ull);
    return Rng(s);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace asl
