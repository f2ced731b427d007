#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "asl/errors.hpp"
#include "asl/types.hpp"

namespace asl {

namespace detail {

struct ScoredDet {
  double score;
  std::string video_id;
  double start, end;
};

inline bool scored_order(const ScoredDet& a, const ScoredDet& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  if (a.start != b.start) return a.start < b.start;
  return a.end < b.end;
}

}  // namespace detail

// Average precision for one class at one tIoU threshold. Detections are
// visited in score order; each greedily claims the unmatched ground-truth
// segment of its video with the highest overlap at or above the threshold.
// Precision is interpolated to its running maximum (all-point envelope).
inline double average_precision(const std::vector<VideoDetections>& detections,
                                const std::vector<VideoAnnotation>& annotations, int label, double threshold) {
  std::map<std::string, std::vector<Instance>> gt;
  std::map<std::string, std::vector<char>> used;
  int num_gt = 0;
  for (const VideoAnnotation& v : annotations) {
    for (const Instance& inst : v.instances)
      if (inst.label == label) {
        gt[v.video_id].push_back(inst);
        ++num_gt;
      }
    if (gt.count(v.video_id)) used[v.video_id].assign(gt[v.video_id].size(), 0);
  }
  if (num_gt == 0) return 0.0;

  std::vector<detail::ScoredDet> dets;
  for (const VideoDetections& v : detections)
    for (const Detection& d : v.detections)
      if (d.label == label) dets.push_back({d.score, v.video_id, d.start, d.end});
  std::sort(dets.begin(), dets.end(), detail::scored_order);

  std::vector<char> is_tp(dets.size(), 0);
  for (size_t i = 0; i < dets.size(); ++i) {
    auto it = gt.find(dets[i].video_id);
    if (it == gt.end()) continue;
    const std::vector<Instance>& cands = it->second;
    std::vector<char>& taken = used[dets[i].video_id];
    int best = -1;
    double best_iou = 0.0;
    for (size_t k = 0; k < cands.size(); ++k) {
      if (taken[k]) continue;
      double iou = temporal_iou(dets[i].start, dets[i].end, cands[k].start, cands[k].end);
      if (iou >= threshold && iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(k);
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      is_tp[i] = 1;
    }
  }

  // Precision at each rank, then the all-point envelope (max precision at
  // this rank or any later one), then area accumulated over recall steps in
  // rank order.
  int total = static_cast<int>(dets.size());
  std::vector<double> env(total);
  {
    std::vector<double> prec(total);
    int tp = 0;
    for (int i = 0; i < total; ++i) {
      if (is_tp[i]) ++tp;
      prec[i] = static_cast<double>(tp) / (i + 1);
    }
    double best = 0.0;
    for (int i = total - 1; i >= 0; --i) {
      best = std::max(best, prec[i]);
      env[i] = best;
    }
  }
  double ap = 0.0;
  for (int i = 0; i < total; ++i)
    if (is_tp[i]) ap += env[i] / num_gt;
  return ap;
}

struct EvalConfig {
  std::vector<double> thresholds;
  int per_video_cap = 200;  // strongest detections kept per video before scoring
};

struct EvalResult {
  // threshold -> (label -> AP) and threshold -> mAP
  std::map<double, std::map<int, double>> ap;
  std::map<double, double> map;
  double average_map = 0.0;
};

// Mean AP per threshold over every class that has at least one ground-truth
// instance, plus the average over thresholds.
inline EvalResult evaluate_detections(const std::vector<VideoDetections>& detections,
                                      const std::vector<VideoAnnotation>& annotations,
                                      const std::vector<double>& thresholds) {
  std::set<int> labels;
  for (const VideoAnnotation& v : annotations)
    for (const Instance& inst : v.instances) labels.insert(inst.label);
  if (labels.empty()) throw DataError("evaluate_detections: annotations contain no instances");

  EvalResult res;
  for (double th : thresholds) {
    double sum = 0.0;
    for (int label : labels) {
      double ap = average_precision(detections, annotations, label, th);
      res.ap[th][label] = ap;
      sum += ap;
    }
    res.map[th] = labels.empty() ? 0.0 : sum / static_cast<double>(labels.size());
    res.average_map += res.map[th];
  }
  if (!thresholds.empty()) res.average_map /= static_cast<double>(thresholds.size());
  return res;
}

// Same, but each video first keeps only its strongest per_video_cap
// detections (deterministic ranking).
inline EvalResult evaluate_detections(std::vector<VideoDetections> detections,
                                      const std::vector<VideoAnnotation>& annotations, const EvalConfig& cfg) {
  for (VideoDetections& v : detections) {
    std::sort(v.detections.begin(), v.detections.end(), detection_order);
    if (static_cast<int>(v.detections.size()) > cfg.per_video_cap) v.detections.resize(cfg.per_video_cap);
  }
  return evaluate_detections(detections, annotations, cfg.thresholds);
}

}  // namespace asl
