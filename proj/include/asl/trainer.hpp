#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "asl/config.hpp"
#include "asl/errors.hpp"
#include "asl/pipeline.hpp"
#include "asl/rng.hpp"

namespace asl {

// Global-norm gradient clipping; returns the pre-clip norm.
inline double clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.a) sq += g * g;
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double scale = max_norm / norm;
    for (Parameter* p : params)
      for (double& g : p->grad.a) g *= scale;
  }
  return norm;
}

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Parameter*>& params) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (Parameter* p : params) {
      State& s = state_[p];
      if (s.m.size() != p->value.size()) {
        s.m = Matrix::zeros_like(p->value);
        s.v = Matrix::zeros_like(p->value);
      }
      for (size_t k = 0; k < p->value.size(); ++k) {
        double g = p->grad.a[k];
        s.m.a[k] = beta1_ * s.m.a[k] + (1.0 - beta1_) * g;
        s.v.a[k] = beta2_ * s.v.a[k] + (1.0 - beta2_) * g * g;
        double mhat = s.m.a[k] / bc1;
        double vhat = s.v.a[k] / bc2;
        p->value.a[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  struct State {
    Matrix m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::unordered_map<Parameter*, State> state_;
};

class SgdOptimizer {
 public:
  explicit SgdOptimizer(double lr) : lr_(lr) {}
  void step(const std::vector<Parameter*>& params) {
    for (Parameter* p : params)
      for (size_t k = 0; k < p->value.size(); ++k) p->value.a[k] -= lr_ * p->grad.a[k];
  }

 private:
  double lr_;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double cls = 0.0;
  double loc = 0.0;
  double quality = 0.0;
  double contrastive = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm over batches
  double seconds = 0.0;    // wall time; reported but kept out of persisted logs
  // Per-class sensitivity state at the end of the epoch.
  std::vector<double> mu_cls, sigma_cls, mu_sot, sigma_sot, mu_eot, sigma_eot;
};

// Deterministic mini-batch training over in-memory videos. Gradients are
// averaged across the batch, clipped by global norm, stepped, and sigma
// widths re-clamped after every update.
class Trainer {
 public:
  Trainer(System& sys, const TrainConfig& cfg)
      : sys_(sys),
        cfg_(cfg),
        params_(sys.params()),
        adam_(cfg.lr),
        sgd_(cfg.lr),
        rng_(cfg.seed) {}

  std::function<void(const EpochStats&)> on_epoch;

  std::vector<EpochStats> train(const std::vector<VideoAnnotation>& annotations,
                                const std::vector<Matrix>& features) {
    if (annotations.size() != features.size()) throw DataError("train: annotation/feature count mismatch");
    if (annotations.empty()) throw DataError("train: empty dataset");
    std::vector<EpochStats> all;
    std::vector<size_t> order(annotations.size());
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < cfg_.epochs; ++e) {
      auto t0 = std::chrono::steady_clock::now();
      shuffle_epoch(order, e);
      EpochStats st = run_epoch(e, order, annotations, features);
      st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (on_epoch) on_epoch(st);
      all.push_back(st);
    }
    return all;
  }

 private:
  void shuffle_epoch(std::vector<size_t>& order, int epoch) {
    Rng er = rng_.child(1000 + static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(er.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
  }

  EpochStats run_epoch(int epoch, const std::vector<size_t>& order,
                       const std::vector<VideoAnnotation>& annotations, const std::vector<Matrix>& features) {
    EpochStats st;
    st.epoch = epoch;
    LossWeights w = cfg_.loss_weights();
    size_t n = order.size();
    int batches = 0;
    for (size_t b0 = 0; b0 < n; b0 += cfg_.batch_size) {
      size_t b1 = std::min(n, b0 + cfg_.batch_size);
      double inv_batch = 1.0 / static_cast<double>(b1 - b0);
      for (Parameter* p : params_) p->zero_grad();
      for (size_t k = b0; k < b1; ++k) {
        size_t vi = order[k];
        Tape t(true);
        DetachCache cache;
        VideoLossBreakdown bd;
        Var loss = video_loss(t, sys_, features[vi], annotations[vi], w, cfg_.contrastive, cache, &bd);
        if (!std::isfinite(bd.total))
          throw NumericError("non-finite loss on video " + annotations[vi].video_id + " (batch " +
                             std::to_string(batches) + ", epoch " + std::to_string(epoch) + ")");
        t.backward(t.mul_scalar(loss, inv_batch));
        st.loss += bd.total;
        st.cls += bd.cls;
        st.loc += bd.loc;
        st.quality += bd.quality;
        st.contrastive += bd.contrastive;
      }
      st.grad_norm += clip_gradients(params_, cfg_.clip_norm);
      if (cfg_.optimizer == "adam")
        adam_.step(params_);
      else
        sgd_.step(params_);
      sys_.sens.clamp_sigmas();
      ++batches;
    }
    double inv_n = 1.0 / static_cast<double>(n);
    st.loss *= inv_n;
    st.cls *= inv_n;
    st.loc *= inv_n;
    st.quality *= inv_n;
    st.contrastive *= inv_n;
    st.grad_norm /= std::max(1, batches);
    for (int c = 0; c < sys_.sens.num_classes; ++c) {
      st.mu_cls.push_back(sys_.sens.mu_cls.value(c, 0));
      st.sigma_cls.push_back(sys_.sens.sigma_cls.value(c, 0));
      st.mu_sot.push_back(sys_.sens.mu_start.value(c, 0));
      st.sigma_sot.push_back(sys_.sens.sigma_start.value(c, 0));
      st.mu_eot.push_back(sys_.sens.mu_end.value(c, 0));
      st.sigma_eot.push_back(sys_.sens.sigma_end.value(c, 0));
    }
    return st;
  }

  System& sys_;
  TrainConfig cfg_;
  std::vector<Parameter*> params_;
  AdamOptimizer adam_;
  SgdOptimizer sgd_;
  Rng rng_;
};

}  // namespace asl
