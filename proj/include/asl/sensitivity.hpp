#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "asl/errors.hpp"
#include "asl/init.hpp"
#include "asl/matrix.hpp"
#include "asl/rng.hpp"
#include "asl/tape.hpp"

namespace asl {

inline double gaussian_bump(double d, double mu, double sigma) {
  return std::exp(-(d - mu) * (d - mu) / (2.0 * sigma * sigma));
}

// Learnable per-class sensitivity curves over the relative position
// d in [-0.5, 0.5] inside an instance. Classification uses a single
// Gaussian; localization uses the sum of a start and an end Gaussian.
struct ClassSensitivity {
  static constexpr double kSigmaMin = 0.1;
  static constexpr double kSigmaMax = 5.0;

  int num_classes = 0;
  Parameter mu_cls, sigma_cls;
  Parameter mu_start, sigma_start;
  Parameter mu_end, sigma_end;

  explicit ClassSensitivity(int classes)
      : num_classes(classes),
        mu_cls("sensitivity.mu_cls", Matrix(classes, 1)),
        sigma_cls("sensitivity.sigma_cls", Matrix(classes, 1)),
        mu_start("sensitivity.mu_start", Matrix(classes, 1)),
        sigma_start("sensitivity.sigma_start", Matrix(classes, 1)),
        mu_end("sensitivity.mu_end", Matrix(classes, 1)),
        sigma_end("sensitivity.sigma_end", Matrix(classes, 1)) {
    mu_cls.value.fill(0.0);
    mu_start.value.fill(-0.5);
    mu_end.value.fill(0.5);
    sigma_cls.value.fill(1.0);
    sigma_start.value.fill(1.0);
    sigma_end.value.fill(1.0);
  }

  std::vector<Parameter*> params() {
    return {&mu_cls, &sigma_cls, &mu_start, &sigma_start, &mu_end, &sigma_end};
  }

  // Keep the widths in a sane range; applied after every optimizer step.
  void clamp_sigmas() {
    for (Parameter* p : {&sigma_cls, &sigma_start, &sigma_end})
      for (double& e : p->value.a) e = std::clamp(e, kSigmaMin, kSigmaMax);
  }

  double p_cls(int c, double d) const { return gaussian_bump(d, mu_cls.value(c, 0), sigma_cls.value(c, 0)); }
  double p_start(int c, double d) const { return gaussian_bump(d, mu_start.value(c, 0), sigma_start.value(c, 0)); }
  double p_end(int c, double d) const { return gaussian_bump(d, mu_end.value(c, 0), sigma_end.value(c, 0)); }
  double p_loc(int c, double d) const { return p_start(c, d) + p_end(c, d); }

  // Tape versions: column of p values over the given positions, with
  // gradients flowing into the class-c mu/sigma entries.
  Var p_cls_col(Tape& t, int c, std::vector<double> d) {
    return t.gauss_col(std::move(d), t.entry(t.leaf(mu_cls), c, 0), t.entry(t.leaf(sigma_cls), c, 0));
  }

  Var p_loc_col(Tape& t, int c, std::vector<double> d) {
    Var s = t.gauss_col(d, t.entry(t.leaf(mu_start), c, 0), t.entry(t.leaf(sigma_start), c, 0));
    Var e = t.gauss_col(std::move(d), t.entry(t.leaf(mu_end), c, 0), t.entry(t.leaf(sigma_end), c, 0));
    return t.add(s, e);
  }
};

// Sampled sensitivity curves for one class as CSV: 101 positions from -0.5
// to 0.5, six decimals.
inline std::string sensitivity_csv(const ClassSensitivity& s, int c) {
  if (c < 0 || c >= s.mu_cls.value.rows) throw DataError("sensitivity_csv: unknown class " + std::to_string(c));
  std::string out = "d,p_cls,p_sot,p_eot\n";
  char buf[96];
  for (int i = 0; i <= 100; ++i) {
    double d = -0.5 + 0.01 * i;
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f\n", d, s.p_cls(c, d), s.p_start(c, d), s.p_end(c, d));
    out += buf;
  }
  return out;
}

// Small network scoring how informative each frame of an instance span is:
// temporal conv (k=3) over the span followed by a per-frame linear map to a
// sigmoid score in (0, 1).
struct InstanceEvaluator {
  int dim = 0;
  Parameter conv_w, conv_b;
  Parameter fc_w, fc_b;

  InstanceEvaluator(const std::string& prefix, int feature_dim, Rng& rng)
      : dim(feature_dim),
        conv_w(prefix + ".conv_w", uniform_init(3 * feature_dim, feature_dim, 3 * feature_dim, rng)),
        conv_b(prefix + ".conv_b", Matrix(1, feature_dim)),
        fc_w(prefix + ".fc_w", uniform_init(feature_dim, 1, feature_dim, rng)),
        fc_b(prefix + ".fc_b", Matrix(1, 1)) {}

  std::vector<Parameter*> params() { return {&conv_w, &conv_b, &fc_w, &fc_b}; }

  // span: n x D features of one instance -> n x 1 scores.
  Var score_span(Tape& t, Var span) {
    Var h = t.conv1d_same(span, t.leaf(conv_w), t.leaf(conv_b), 3);
    Var s = t.add_row_broadcast(t.matmul(h, t.leaf(fc_w)), t.leaf(fc_b));
    return t.sigmoid_op(s);
  }
};

}  // namespace asl
