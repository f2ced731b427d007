#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "asl/tape.hpp"

namespace asl {

struct GradCheckEntry {
  std::string param;
  int index = -1;          // flat index within the parameter
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;  // worst entry per parameter
  GradCheckEntry worst;                   // overall worst entry
  bool ok = false;
};

inline double gradcheck_rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Central-difference check of already-populated Parameter::grad values.
// loss_fn must evaluate the same scalar objective from current parameter
// values (typically a with_grad=false tape replaying any detached state).
inline GradCheckReport finite_difference_check(const std::function<double()>& loss_fn,
                                               const std::vector<Parameter*>& params,
                                               double h = 1e-5, double tolerance = 1e-4) {
  GradCheckReport rep;
  rep.worst.rel_err = -1.0;
  for (Parameter* p : params) {
    GradCheckEntry worst;
    worst.param = p->name;
    worst.rel_err = -1.0;
    for (size_t k = 0; k < p->value.size(); ++k) {
      double saved = p->value.a[k];
      p->value.a[k] = saved + h;
      double up = loss_fn();
      p->value.a[k] = saved - h;
      double down = loss_fn();
      p->value.a[k] = saved;
      double numeric = (up - down) / (2.0 * h);
      double analytic = p->grad.a[k];
      double rel = gradcheck_rel_err(analytic, numeric);
      if (rel > worst.rel_err) {
        worst.index = static_cast<int>(k);
        worst.analytic = analytic;
        worst.numeric = numeric;
        worst.rel_err = rel;
      }
    }
    if (worst.index >= 0) rep.per_param.push_back(worst);
    if (worst.rel_err > rep.worst.rel_err) rep.worst = worst;
  }
  rep.ok = rep.worst.rel_err >= 0.0 && rep.worst.rel_err <= tolerance;
  return rep;
}

// Convenience for probing a sampled subset of entries in large parameters.
inline GradCheckReport finite_difference_check_sampled(const std::function<double()>& loss_fn,
                                                       const std::vector<Parameter*>& params,
                                                       const std::function<bool(const Parameter&, size_t)>& take,
                                                       double h = 1e-5, double tolerance = 1e-4) {
  GradCheckReport rep;
  rep.worst.rel_err = -1.0;
  for (Parameter* p : params) {
    GradCheckEntry worst;
    worst.param = p->name;
    worst.rel_err = -1.0;
    for (size_t k = 0; k < p->value.size(); ++k) {
      if (!take(*p, k)) continue;
      double saved = p->value.a[k];
      p->value.a[k] = saved + h;
      double up = loss_fn();
      p->value.a[k] = saved - h;
      double down = loss_fn();
      p->value.a[k] = saved;
      double numeric = (up - down) / (2.0 * h);
      double analytic = p->grad.a[k];
      double rel = gradcheck_rel_err(analytic, numeric);
      if (rel > worst.rel_err) {
        worst.index = static_cast<int>(k);
        worst.analytic = analytic;
        worst.numeric = numeric;
        worst.rel_err = rel;
      }
    }
    if (worst.index >= 0) rep.per_param.push_back(worst);
    if (worst.rel_err > rep.worst.rel_err) rep.worst = worst;
  }
  rep.ok = rep.worst.rel_err >= 0.0 && rep.worst.rel_err <= tolerance;
  return rep;
}

}  // namespace asl
