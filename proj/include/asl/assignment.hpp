#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "asl/types.hpp"

namespace asl {

// One pyramid level: frames subsample the input by `stride`, and the level
// owns ground-truth durations in [min_duration, max_duration).
struct LevelGeometry {
  int level = 0;
  int stride = 1;
  int length = 0;
  double min_duration = 0.0;
  double max_duration = 0.0;
};

// Level l halves the previous length (ceil) and doubles the stride.
// Duration ranges: [0,8), [8,16), [16,32), ... with the last level open.
inline std::vector<LevelGeometry> pyramid_geometry(int num_frames, int num_levels) {
  if (num_frames < 1) throw std::invalid_argument("pyramid_geometry: num_frames < 1");
  if (num_levels < 1) throw std::invalid_argument("pyramid_geometry: num_levels < 1");
  std::vector<LevelGeometry> geom(num_levels);
  int len = num_frames;
  double bound = 8.0;
  for (int l = 0; l < num_levels; ++l) {
    geom[l].level = l;
    geom[l].stride = 1 << l;
    geom[l].length = len;
    geom[l].min_duration = l == 0 ? 0.0 : bound;
    if (l > 0) bound *= 2.0;
    geom[l].max_duration = l == num_levels - 1 ? std::numeric_limits<double>::infinity() : bound;
    len = (len + 1) / 2;
  }
  return geom;
}

// Input-frame position covered by level frame j: frame spans
// [j*stride, (j+1)*stride), center at the midpoint.
inline double level_frame_center(int stride, int j) { return j * static_cast<double>(stride) + stride * 0.5; }

struct FrameTarget {
  int label = -1;       // -1 = background
  int instance = -1;    // index into the video's instance list
  double d_start = 0.0; // offsets to boundaries, in stride units
  double d_end = 0.0;
  double rel_pos = 0.0; // position inside the instance, in [-0.5, 0.5]
};

struct AssignmentResult {
  std::vector<std::vector<FrameTarget>> levels;
  int num_positive = 0;
};

// Relative position of input frame i inside an instance spanning n frames:
// the first frame maps to -0.5, the last to +0.5; a single-frame instance
// sits at 0.
inline double instance_relative_position(double frame, int inst_start, int inst_end) {
  int n = std::max(1, inst_end - inst_start);
  if (n == 1) return 0.0;
  double k = frame - inst_start;
  return k / (n - 1) - 0.5;
}

// A level frame is positive for an instance when the frame center falls in
// [start, end) and the instance duration is in the level's range. Among
// candidates the shortest instance wins; ties go to the earlier start.
inline AssignmentResult assign_targets(const VideoAnnotation& video, const std::vector<LevelGeometry>& geom) {
  AssignmentResult res;
  res.levels.resize(geom.size());
  for (const LevelGeometry& g : geom) {
    auto& frames = res.levels[g.level];
    frames.resize(g.length);
    for (int j = 0; j < g.length; ++j) {
      double center = level_frame_center(g.stride, j);
      int best = -1;
      for (size_t k = 0; k < video.instances.size(); ++k) {
        const Instance& inst = video.instances[k];
        int dur = inst.duration();
        if (dur < g.min_duration || dur >= g.max_duration) continue;
        if (center < inst.start || center >= inst.end) continue;
        if (best < 0) {
          best = static_cast<int>(k);
          continue;
        }
        const Instance& cur = video.instances[best];
        if (dur < cur.duration() || (dur == cur.duration() && inst.start < cur.start)) best = static_cast<int>(k);
      }
      FrameTarget& t = frames[j];
      if (best >= 0) {
        const Instance& inst = video.instances[best];
        t.label = inst.label;
        t.instance = best;
        t.d_start = (center - inst.start) / g.stride;
        t.d_end = (inst.end - center) / g.stride;
        t.rel_pos = instance_relative_position(std::floor(center), inst.start, inst.end);
        ++res.num_positive;
      }
    }
  }
  return res;
}

// Inverse of the target construction: offsets in stride units back to an
// input-frame segment (real-valued; score left for the caller).
inline Detection decode_segment(int stride, int j, double d_start, double d_end, int label) {
  double center = level_frame_center(stride, j);
  return {center - d_start * stride, center + d_end * stride, label, 0.0};
}

}  // namespace asl
