#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "asl/assignment.hpp"
#include "asl/model.hpp"
#include "asl/numerics.hpp"
#include "asl/types.hpp"

namespace asl {

struct DecodeConfig {
  double score_threshold = 0.001;
  int pre_nms_topk = 2000;
};

struct SoftNmsConfig {
  double sigma = 0.5;
  double min_score = 0.001;
  int keep_k = 200;
};

// Per-frame predictions to candidate segments: every (level, frame, class)
// whose sigmoid score clears the threshold becomes a candidate, clipped to
// the video extent, then the top pre_nms_topk by score survive.
inline std::vector<Detection> decode_detections(const std::vector<Matrix>& cls_logits,
                                                const std::vector<Matrix>& reg_offsets,
                                                const std::vector<LevelGeometry>& geom, int num_frames,
                                                const DecodeConfig& cfg) {
  std::vector<Detection> cands;
  for (const LevelGeometry& g : geom) {
    const Matrix& logits = cls_logits[g.level];
    const Matrix& reg = reg_offsets[g.level];
    for (int j = 0; j < g.length; ++j)
      for (int c = 0; c < logits.cols; ++c) {
        double score = sigmoid(logits(j, c));
        if (score < cfg.score_threshold) continue;
        Detection seg = decode_segment(g.stride, j, reg(j, 0), reg(j, 1), c);
        double s = std::max(0.0, seg.start);
        double e = std::min(static_cast<double>(num_frames), seg.end);
        if (e <= s) continue;
        cands.push_back({s, e, c, score});
      }
  }
  std::sort(cands.begin(), cands.end(), detection_order);
  if (static_cast<int>(cands.size()) > cfg.pre_nms_topk) cands.resize(cfg.pre_nms_topk);
  return cands;
}

// Gaussian soft suppression, run independently per class: repeatedly keep
// the highest-scoring candidate and decay the rest by exp(-tIoU^2 / sigma),
// dropping anything that falls under min_score. The merged result is sorted
// by score and capped at keep_k.
inline std::vector<Detection> soft_nms(std::vector<Detection> dets, const SoftNmsConfig& cfg) {
  std::vector<Detection> kept;
  int max_label = -1;
  for (const Detection& d : dets) max_label = std::max(max_label, d.label);
  for (int c = 0; c <= max_label; ++c) {
    std::vector<Detection> pool;
    for (const Detection& d : dets)
      if (d.label == c) pool.push_back(d);
    while (!pool.empty()) {
      size_t best = 0;
      for (size_t i = 1; i < pool.size(); ++i)
        if (detection_order(pool[i], pool[best])) best = i;
      Detection top = pool[best];
      pool.erase(pool.begin() + best);
      kept.push_back(top);
      std::vector<Detection> next;
      next.reserve(pool.size());
      for (Detection& d : pool) {
        double iou = temporal_iou(top.start, top.end, d.start, d.end);
        d.score *= std::exp(-iou * iou / cfg.sigma);
        if (d.score >= cfg.min_score) next.push_back(d);
      }
      pool = std::move(next);
    }
  }
  std::sort(kept.begin(), kept.end(), detection_order);
  if (static_cast<int>(kept.size()) > cfg.keep_k) kept.resize(cfg.keep_k);
  return kept;
}

// Full forward pass + decode + suppression for one video.
inline std::vector<Detection> run_inference(Model& model, const Matrix& features, const DecodeConfig& dec,
                                            const SoftNmsConfig& nms) {
  Tape t(false);
  ModelOutputs out = model.forward(t, t.constant(features));
  auto geom = pyramid_geometry(features.rows, model.cfg.levels);
  std::vector<Matrix> logits, reg;
  for (size_t l = 0; l < out.cls_logits.size(); ++l) {
    logits.push_back(t.val(out.cls_logits[l]));
    reg.push_back(t.val(out.reg_offsets[l]));
  }
  return soft_nms(decode_detections(logits, reg, geom, features.rows, dec), nms);
}

}  // namespace asl
