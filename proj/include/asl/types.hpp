#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "asl/matrix.hpp"

namespace asl {

// Half-open temporal span [start, end) in whole-frame units, with an
// integer category label.
struct Instance {
  int start = 0;
  int end = 0;
  int label = -1;

  int duration() const { return end - start; }
};

struct VideoAnnotation {
  std::string video_id;
  int num_frames = 0;
  std::vector<Instance> instances;
};

struct Detection {
  double start = 0.0;
  double end = 0.0;
  int label = -1;
  double score = 0.0;
};

// Deterministic ranking: score descending, ties broken by earlier start,
// earlier end, then lower label.
inline bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  if (a.end != b.end) return a.end < b.end;
  return a.label < b.label;
}

struct VideoDetections {
  std::string video_id;
  int num_frames = 0;
  std::vector<Detection> detections;
};

/// One video's features: T x D matrix, one row per frame.
struct FeatureSequence {
  std::string video_id;
  Matrix features;  // T x D
};

inline double temporal_iou(double s1, double e1, double s2, double e2) {
  if (!(e1 > s1) || !(e2 > s2)) throw std::invalid_argument("temporal_iou: degenerate segment");
  double inter = std::min(e1, e2) - std::max(s1, s2);
  if (inter <= 0.0) return 0.0;
  double uni = std::max(e1, e2) - std::min(s1, s2);
  return inter / uni;
}

}  // namespace asl
