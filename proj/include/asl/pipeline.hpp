#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "asl/assignment.hpp"
#include "asl/losses.hpp"
#include "asl/model.hpp"
#include "asl/numerics.hpp"
#include "asl/sensitivity.hpp"
#include "asl/types.hpp"

namespace asl {

// Stop-gradient values recorded during the primary forward pass and replayed
// verbatim by finite-difference evaluations, so perturbing parameters never
// moves anything the analytic gradient treats as constant. Record and replay
// must follow the same fetch order, which holds because the fetch sequence
// depends only on ground truth and config, never on parameter values.
struct DetachCache {
  bool replay = false;
  std::vector<Matrix> slots;
  size_t cursor = 0;

  Matrix fetch(Matrix fresh) {
    if (replay) {
      if (cursor >= slots.size()) throw std::logic_error("DetachCache: replay past end");
      return slots[cursor++];
    }
    slots.push_back(std::move(fresh));
    return slots.back();
  }

  void rewind() { cursor = 0; }
  void reset() {
    slots.clear();
    cursor = 0;
    replay = false;
  }
};

struct LossWeights {
  double lambda_contrastive = 0.3;
  bool class_sensitivity = true;
  bool instance_sensitivity = true;
};

struct ContrastiveConfig {
  double tau = 0.07;
  double delta = 0.2;  // sampling window half-width as a fraction of instance length
};

// Everything that trains jointly: the detector plus the sensitivity state.
struct System {
  Model model;
  ClassSensitivity sens;
  InstanceEvaluator eval_cls;
  InstanceEvaluator eval_loc;

  System(const ModelConfig& cfg, Rng& rng)
      : model(cfg, rng),
        sens(cfg.num_classes),
        eval_cls("evaluator_cls", cfg.dim, rng),
        eval_loc("evaluator_loc", cfg.dim, rng) {}

  std::vector<Parameter*> params() {
    std::vector<Parameter*> all = model.params();
    for (Parameter* p : sens.params()) all.push_back(p);
    for (Parameter* p : eval_cls.params()) all.push_back(p);
    for (Parameter* p : eval_loc.params()) all.push_back(p);
    return all;
  }

  void zero_grads() {
    for (Parameter* p : params()) p->zero_grad();
  }
};

struct VideoLossBreakdown {
  double cls = 0.0;
  double loc = 0.0;
  double quality = 0.0;
  double contrastive = 0.0;  // before the lambda weight
  double total = 0.0;
  int num_positive = 0;
};

enum class LossPart { kTotal, kCls, kLoc, kQuality, kContrastive };

namespace detail {

inline Var dot_cols(Tape& t, Var a, Var b) { return t.sum_all(t.mul(a, b)); }

inline int duration_level(const std::vector<LevelGeometry>& geom, double duration) {
  for (const LevelGeometry& g : geom)
    if (duration >= g.min_duration && duration < g.max_duration) return g.level;
  return static_cast<int>(geom.size()) - 1;
}

// Level frames whose centers fall inside [start, end).
inline std::vector<int> span_frames(const LevelGeometry& g, const Instance& inst) {
  std::vector<int> idx;
  for (int j = 0; j < g.length; ++j) {
    double c = level_frame_center(g.stride, j);
    if (c >= inst.start && c < inst.end) idx.push_back(j);
  }
  return idx;
}

inline Matrix from_int_vec(const std::vector<int>& v) {
  Matrix m(1, static_cast<int>(v.size()));
  for (size_t k = 0; k < v.size(); ++k) m.a[k] = v[k];
  return m;
}

inline std::vector<int> to_int_vec(const Matrix& m) {
  std::vector<int> v(m.size());
  for (size_t k = 0; k < m.size(); ++k) v[k] = static_cast<int>(std::llround(m.a[k]));
  return v;
}

}  // namespace detail

// Builds the complete training objective for one video on the given tape:
// sensitivity-weighted focal classification, sensitivity-weighted DIoU
// localization, evaluator quality regression, and the optional contrastive
// term. `cache` must be in record mode on the primary (gradient) pass and in
// replay mode for finite-difference re-evaluations.
inline Var video_loss(Tape& t, System& sys, const Matrix& features, const VideoAnnotation& video,
                      const LossWeights& w, const ContrastiveConfig& ctr, DetachCache& cache,
                      VideoLossBreakdown* breakdown = nullptr) {
  const ModelConfig& cfg = sys.model.cfg;
  if (features.cols != cfg.dim) throw std::invalid_argument("video_loss: feature dim mismatch");
  if (features.rows != video.num_frames) throw std::invalid_argument("video_loss: frame count mismatch");
  for (const Instance& inst : video.instances) {
    if (inst.label < 0 || inst.label >= cfg.num_classes)
      throw std::invalid_argument("video_loss: instance label out of range in " + video.video_id);
    if (inst.end <= inst.start)
      throw std::invalid_argument("video_loss: empty instance in " + video.video_id);
  }

  auto geom = pyramid_geometry(video.num_frames, cfg.levels);
  AssignmentResult assigned = assign_targets(video, geom);
  if (assigned.num_positive == 0)
    std::fprintf(stderr, "[loss] video %s has no positive frames; background terms only\n", video.video_id.c_str());
  double inv_pos = 1.0 / std::max(1, assigned.num_positive);

  ModelOutputs out = sys.model.forward(t, t.constant(features));

  // Classification: focal loss per frame summed over classes. Background
  // frames enter with unit weight; positive frames are weighted per instance
  // below.
  std::vector<Var> focal_cols(geom.size());
  Var cls_sum = t.scalar(0.0);
  for (const LevelGeometry& g : geom) {
    Matrix targets(g.length, cfg.num_classes);
    Matrix bg_mask(g.length, 1);
    for (int j = 0; j < g.length; ++j) {
      const FrameTarget& ft = assigned.levels[g.level][j];
      if (ft.label >= 0)
        targets(j, ft.label) = 1.0;
      else
        bg_mask(j, 0) = 1.0;
    }
    focal_cols[g.level] = t.row_sums(focal_matrix(t, out.cls_logits[g.level], targets));
    cls_sum = t.add(cls_sum, detail::dot_cols(t, focal_cols[g.level], t.constant(bg_mask)));
  }

  Var loc_sum = t.scalar(0.0);
  Var sq_sum = t.scalar(0.0);
  int sq_count = 0;
  std::vector<ContrastiveRow> rows;

  for (size_t ii = 0; ii < video.instances.size(); ++ii) {
    const Instance& inst = video.instances[ii];
    const LevelGeometry& g = geom[detail::duration_level(geom, inst.duration())];
    std::vector<int> span = detail::span_frames(g, inst);
    if (span.empty()) continue;
    int n_span = static_cast<int>(span.size());

    std::vector<double> span_d(n_span);
    for (int k = 0; k < n_span; ++k)
      span_d[k] = instance_relative_position(std::floor(level_frame_center(g.stride, span[k])), inst.start, inst.end);

    // Live evaluator scores over the span, regressed onto detached quality
    // targets taken from the current predictions.
    Var q_cls{}, q_loc{};
    if (w.instance_sensitivity) {
      Var span_feat = t.gather_rows(out.level_features[g.level], span);
      q_cls = sys.eval_cls.score_span(t, span_feat);
      q_loc = sys.eval_loc.score_span(t, span_feat);

      Matrix qc_target(n_span, 1), ql_target(n_span, 1);
      const Matrix& logits = t.val(out.cls_logits[g.level]);
      const Matrix& reg = t.val(out.reg_offsets[g.level]);
      for (int k = 0; k < n_span; ++k) {
        int j = span[k];
        qc_target(k, 0) = sigmoid(logits(j, inst.label));
        Detection dec = decode_segment(g.stride, j, reg(j, 0), reg(j, 1), inst.label);
        ql_target(k, 0) = temporal_iou(dec.start, dec.end, inst.start, inst.end);
      }
      sq_sum = t.add(sq_sum, squared_error_sum(t, q_cls, cache.fetch(std::move(qc_target))));
      sq_sum = t.add(sq_sum, squared_error_sum(t, q_loc, cache.fetch(std::move(ql_target))));
      sq_count += n_span;  // per-frame MSE, summed over the two branches
    }

    // Frames this instance actually won in the assignment (a shorter
    // overlapping instance can steal part of the span).
    std::vector<int> own_idx, own_pos;
    std::vector<double> own_d;
    for (int k = 0; k < n_span; ++k) {
      const FrameTarget& ft = assigned.levels[g.level][span[k]];
      if (ft.instance == static_cast<int>(ii)) {
        own_idx.push_back(span[k]);
        own_pos.push_back(k);
        own_d.push_back(span_d[k]);
      }
    }

    if (!own_idx.empty()) {
      int n_own = static_cast<int>(own_idx.size());

      auto weight_col = [&](bool loc_flavor) -> Var {
        Var h{};
        if (w.class_sensitivity) {
          h = loc_flavor ? sys.sens.p_loc_col(t, inst.label, own_d) : sys.sens.p_cls_col(t, inst.label, own_d);
        } else {
          Matrix ones(n_own, 1);
          ones.fill(1.0);
          h = t.constant(std::move(ones));
        }
        if (w.instance_sensitivity) {
          const Matrix& qv = t.val(loc_flavor ? q_loc : q_cls);
          Matrix sub(n_own, 1);
          for (int k = 0; k < n_own; ++k) sub(k, 0) = qv(own_pos[k], 0);
          h = t.add(h, t.constant(cache.fetch(std::move(sub))));
        }
        return h;
      };

      cls_sum = t.add(cls_sum, detail::dot_cols(t, weight_col(false), t.gather_rows(focal_cols[g.level], own_idx)));

      Var reg_own = t.gather_rows(out.reg_offsets[g.level], own_idx);
      Var d_start = t.slice_cols(reg_own, 0, 1);
      Var d_end = t.slice_cols(reg_own, 1, 2);
      Matrix centers(n_own, 1), s_gt(n_own, 1), e_gt(n_own, 1);
      for (int k = 0; k < n_own; ++k) {
        centers(k, 0) = level_frame_center(g.stride, own_idx[k]);
        s_gt(k, 0) = inst.start;
        e_gt(k, 0) = inst.end;
      }
      Var center_c = t.constant(std::move(centers));
      Var s_pred = t.sub(center_c, t.mul_scalar(d_start, g.stride));
      Var e_pred = t.add(center_c, t.mul_scalar(d_end, g.stride));
      Var diou = diou_cols(t, s_pred, e_pred, s_gt, e_gt);
      loc_sum = t.add(loc_sum, detail::dot_cols(t, weight_col(true), diou));
    }

    // Contrastive sampling over the full-resolution features: windows of
    // half-width floor(delta * N_f) around the most sensitive frames, pooled
    // as p-weighted means, plus an unweighted boundary-background row just
    // outside the instance. Frame choices and p weights are frozen so the
    // sensitivity curves get no gradient from this term.
    if (w.lambda_contrastive > 0.0) {
      int nf = inst.duration();
      std::vector<int> idx_cls, idx_loc, idx_bg;
      Matrix wts_cls, wts_loc;
      if (!cache.replay) {
        std::vector<double> p_c(nf), p_s(nf), p_e(nf);
        for (int k = 0; k < nf; ++k) {
          double d = instance_relative_position(inst.start + k, inst.start, inst.end);
          p_c[k] = sys.sens.p_cls(inst.label, d);
          p_s[k] = sys.sens.p_start(inst.label, d);
          p_e[k] = sys.sens.p_end(inst.label, d);
        }
        auto argmax = [](const std::vector<double>& vals) {
          int best = 0;
          for (size_t k = 1; k < vals.size(); ++k)
            if (vals[k] > vals[best]) best = static_cast<int>(k);
          return best;
        };
        int wrad = static_cast<int>(std::floor(ctr.delta * nf));
        int a_cls = argmax(p_c), a_sot = argmax(p_s), a_eot = argmax(p_e);
        std::vector<double> p_l(nf);
        for (int k = 0; k < nf; ++k) p_l[k] = p_s[k] + p_e[k];

        for (int k = std::max(0, a_cls - wrad); k <= std::min(nf - 1, a_cls + wrad); ++k)
          idx_cls.push_back(inst.start + k);
        std::vector<char> in_loc(nf, 0);
        for (int k = std::max(0, a_sot - wrad); k <= std::min(nf - 1, a_sot + wrad); ++k) in_loc[k] = 1;
        for (int k = std::max(0, a_eot - wrad); k <= std::min(nf - 1, a_eot + wrad); ++k) in_loc[k] = 1;
        for (int k = 0; k < nf; ++k)
          if (in_loc[k]) idx_loc.push_back(inst.start + k);
        for (int f = std::max(0, inst.start - wrad); f < inst.start; ++f) idx_bg.push_back(f);
        for (int f = inst.end; f < std::min(video.num_frames, inst.end + wrad); ++f) idx_bg.push_back(f);

        wts_cls = Matrix(static_cast<int>(idx_cls.size()), 1);
        for (size_t k = 0; k < idx_cls.size(); ++k) wts_cls.a[k] = p_c[idx_cls[k] - inst.start];
        wts_loc = Matrix(static_cast<int>(idx_loc.size()), 1);
        for (size_t k = 0; k < idx_loc.size(); ++k) wts_loc.a[k] = p_l[idx_loc[k] - inst.start];
      }
      std::vector<int> cls_frames = detail::to_int_vec(cache.fetch(detail::from_int_vec(idx_cls)));
      Matrix cls_w = cache.fetch(std::move(wts_cls));
      std::vector<int> loc_frames = detail::to_int_vec(cache.fetch(detail::from_int_vec(idx_loc)));
      Matrix loc_w = cache.fetch(std::move(wts_loc));
      std::vector<int> bg_frames = detail::to_int_vec(cache.fetch(detail::from_int_vec(idx_bg)));

      Var f_cls = t.mean_rows(t.scale_rows(t.gather_rows(out.level_features[0], cls_frames), t.constant(cls_w)));
      Var f_loc = t.mean_rows(t.scale_rows(t.gather_rows(out.level_features[0], loc_frames), t.constant(loc_w)));
      rows.push_back({f_cls, inst.label, true});
      rows.push_back({f_loc, inst.label, true});
      if (!bg_frames.empty())
        rows.push_back({t.mean_rows(t.gather_rows(out.level_features[0], bg_frames)), -1, false});
    }
  }

  Var cls = t.mul_scalar(cls_sum, inv_pos);
  Var loc = t.mul_scalar(loc_sum, inv_pos);
  Var total = t.add(cls, loc);
  Var quality{};
  if (w.instance_sensitivity && sq_count > 0) {
    quality = t.mul_scalar(sq_sum, 1.0 / sq_count);
    total = t.add(total, quality);
  }
  Var contrast{};
  if (w.lambda_contrastive > 0.0) {
    contrast = contrastive_loss(t, rows, ctr.tau);
    total = t.add(total, t.mul_scalar(contrast, w.lambda_contrastive));
  }

  if (breakdown) {
    breakdown->cls = t.val(cls)(0, 0);
    breakdown->loc = t.val(loc)(0, 0);
    breakdown->quality = quality.valid() ? t.val(quality)(0, 0) : 0.0;
    breakdown->contrastive = contrast.valid() ? t.val(contrast)(0, 0) : 0.0;
    breakdown->total = t.val(total)(0, 0);
    breakdown->num_positive = assigned.num_positive;
  }
  return total;
}

// Forward-only re-evaluation against a recorded cache; the workhorse for
// finite-difference checks.
inline double video_loss_replay(System& sys, const Matrix& features, const VideoAnnotation& video,
                                const LossWeights& w, const ContrastiveConfig& ctr, DetachCache& cache,
                                LossPart part = LossPart::kTotal) {
  bool saved_replay = cache.replay;
  cache.replay = true;
  cache.rewind();
  Tape t(false);
  VideoLossBreakdown b;
  video_loss(t, sys, features, video, w, ctr, cache, &b);
  cache.replay = saved_replay;
  switch (part) {
    case LossPart::kCls: return b.cls;
    case LossPart::kLoc: return b.loc;
    case LossPart::kQuality: return b.quality;
    case LossPart::kContrastive: return b.contrastive;
    default: return b.total;
  }
}

}  // namespace asl
