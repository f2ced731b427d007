#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "asl/data.hpp"
#include "asl/gradcheck.hpp"
#include "asl/pipeline.hpp"

namespace asl {

struct GradSuiteConfig {
  uint64_t seed = 1;
  int frames = 32;
  int dim = 8;
  int classes = 3;
  int videos = 2;
  int levels = 3;
  double h = 1e-5;
  double tol = 1e-4;
  LossWeights weights;
  ContrastiveConfig contrastive;
};

// Full-objective gradient check: sample a small dataset, take the mean video
// loss over it, backprop once, then compare every parameter entry against
// central finite differences with all stop-gradient state replayed verbatim.
inline GradCheckReport run_loss_gradcheck(const GradSuiteConfig& cfg) {
  GenerateConfig g;
  g.num_train = cfg.videos;
  g.num_test = 0;
  g.num_frames = cfg.frames;
  g.dim = cfg.dim;
  g.num_classes = cfg.classes;
  g.max_duration = std::min(cfg.frames, 40);
  g.max_instances = 3;
  g.seed = cfg.seed;
  GeneratedSplit split = SyntheticGenerator(g).train_split();

  ModelConfig mc;
  mc.dim = cfg.dim;
  mc.num_classes = cfg.classes;
  mc.levels = cfg.levels;
  Rng rng(cfg.seed);
  System sys(mc, rng);

  double inv = 1.0 / cfg.videos;
  std::vector<DetachCache> caches(cfg.videos);
  Tape t(true);
  Var total{};
  for (int i = 0; i < cfg.videos; ++i) {
    Var li = video_loss(t, sys, split.features[i], split.annotations[i], cfg.weights, cfg.contrastive, caches[i]);
    total = i == 0 ? li : t.add(total, li);
  }
  t.backward(t.mul_scalar(total, inv));

  auto loss_fn = [&]() {
    double s = 0.0;
    for (int i = 0; i < cfg.videos; ++i)
      s += video_loss_replay(sys, split.features[i], split.annotations[i], cfg.weights, cfg.contrastive, caches[i]);
    return s * inv;
  };
  return finite_difference_check(loss_fn, sys.params(), cfg.h, cfg.tol);
}

}  // namespace asl
