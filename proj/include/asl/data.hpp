#pragma once

#include <string>
#include <vector>

#include "asl/errors.hpp"
#include "asl/matrix.hpp"
#include "asl/rng.hpp"
#include "asl/types.hpp"

namespace asl {

struct GenerateConfig {
  int num_train = 200;
  int num_test = 50;
  int num_frames = 256;
  int dim = 32;
  int num_classes = 4;
  int min_instances = 1;
  int max_instances = 3;
  int min_duration = 4;
  int max_duration = 120;
  double noise = 0.25;
  uint64_t seed = 1;

  void validate() const {
    if (num_frames < 1 || dim < 1 || num_classes < 1) throw DataError("generate: bad dimensions");
    if (min_duration < 1 || max_duration < min_duration) throw DataError("generate: bad duration range");
    if (max_duration > num_frames) throw DataError("generate: max_duration exceeds num_frames");
    if (min_instances < 0 || max_instances < min_instances) throw DataError("generate: bad instance range");
    if (num_train < 0 || num_test < 0) throw DataError("generate: bad video counts");
  }
};

struct GeneratedSplit {
  std::vector<VideoAnnotation> annotations;
  std::vector<Matrix> features;
};

// Synthetic corpus: each class owns three N(0,1) prototype vectors (start /
// middle / end phase). An instance frame takes its phase prototype plus
// N(0, noise^2) jitter; background frames are pure unit noise. Overlapping
// instances are written in placement order, so the later one owns the
// overlap region's features while both stay annotated. Everything passes
// through float32, matching the on-disk feature precision.
class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(const GenerateConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng proto_rng = Rng(cfg_.seed).child(0);
    prototypes_.resize(cfg_.num_classes);
    for (int c = 0; c < cfg_.num_classes; ++c)
      for (int ph = 0; ph < 3; ++ph) {
        Matrix p(1, cfg_.dim);
        for (double& e : p.a) e = proto_rng.normal();
        prototypes_[c].push_back(std::move(p));
      }
  }

  // Frames split 20/60/20 into start/middle/end phases by fractional
  // position.
  static int phase_of(int k, int duration) {
    double frac = (k + 0.5) / duration;
    if (frac < 0.2) return 0;
    if (frac >= 0.8) return 2;
    return 1;
  }

  GeneratedSplit generate_split(const std::string& prefix, int count, uint64_t stream_base) const {
    GeneratedSplit split;
    for (int i = 0; i < count; ++i) {
      Rng rng = Rng(cfg_.seed).child(stream_base + static_cast<uint64_t>(i));
      VideoAnnotation v;
      char buf[16];
      std::snprintf(buf, sizeof buf, "%s_%04d", prefix.c_str(), i);
      v.video_id = buf;
      v.num_frames = cfg_.num_frames;

      int n_inst = rng.uniform_int(cfg_.min_instances, cfg_.max_instances);
      for (int n = 0; n < n_inst; ++n) {
        int dur = rng.uniform_int(cfg_.min_duration, cfg_.max_duration);
        int start = rng.uniform_int(0, cfg_.num_frames - dur);
        int label = rng.uniform_int(0, cfg_.num_classes - 1);
        v.instances.push_back({start, start + dur, label});
      }

      Matrix f(cfg_.num_frames, cfg_.dim);
      for (double& e : f.a) e = rng.normal();
      for (const Instance& inst : v.instances) {
        int start = inst.start;
        int dur = inst.duration();
        for (int k = 0; k < dur; ++k) {
          const Matrix& proto = prototypes_[inst.label][phase_of(k, dur)];
          for (int j = 0; j < cfg_.dim; ++j) f(start + k, j) = proto(0, j) + cfg_.noise * rng.normal();
        }
      }
      for (double& e : f.a) e = static_cast<double>(static_cast<float>(e));

      split.annotations.push_back(std::move(v));
      split.features.push_back(std::move(f));
    }
    return split;
  }

  GeneratedSplit train_split() const { return generate_split("train", cfg_.num_train, kTrainStream); }
  GeneratedSplit test_split() const { return generate_split("test", cfg_.num_test, kTestStream); }

  const GenerateConfig& config() const { return cfg_; }

  static constexpr uint64_t kTrainStream = 1'000'000;
  static constexpr uint64_t kTestStream = 2'000'000;

 private:
  GenerateConfig cfg_;
  std::vector<std::vector<Matrix>> prototypes_;
};

}  // namespace asl
