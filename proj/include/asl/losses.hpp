#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "asl/matrix.hpp"
#include "asl/tape.hpp"

namespace asl {

constexpr double kFocalAlpha = 0.25;
constexpr double kFocalGamma = 2.0;  // baked into the squaring below

// Elementwise min/max of two tape values via relu, so ties keep a defined
// subgradient.
inline Var emin(Tape& t, Var a, Var b) { return t.sub(a, t.relu(t.sub(a, b))); }
inline Var emax(Tape& t, Var a, Var b) { return t.add(a, t.relu(t.sub(b, a))); }

// Per-entry focal loss (gamma = 2) from raw logits against a {0,1} target
// mask, written with softplus so log-probabilities never underflow:
//   positive: alpha * (1-p)^2 * softplus(-s)
//   negative: (1-alpha) * p^2 * softplus(s)
inline Var focal_matrix(Tape& t, Var logits, const Matrix& targets, double alpha = kFocalAlpha) {
  check_same_shape(t.val(logits), targets, "focal_matrix");
  Var p = t.sigmoid_op(logits);
  Var one_minus_p = t.add_scalar(t.mul_scalar(p, -1.0), 1.0);
  Var pos = t.mul_scalar(t.mul(t.square(one_minus_p), t.softplus_op(t.mul_scalar(logits, -1.0))), alpha);
  Var neg = t.mul_scalar(t.mul(t.square(p), t.softplus_op(logits)), 1.0 - alpha);
  Matrix inv = targets;
  for (double& e : inv.a) e = 1.0 - e;
  return t.add(t.mul(pos, t.constant(targets)), t.mul(neg, t.constant(inv)));
}

// Distance-IoU loss per row for 1-D segments: 1 - tIoU + (center gap)^2 /
// (enclosing span)^2. Predictions are n x 1 start/end columns; ground truth
// is constant. Every segment must have positive length.
inline Var diou_cols(Tape& t, Var s_pred, Var e_pred, const Matrix& s_gt, const Matrix& e_gt) {
  const Matrix &sp = t.val(s_pred), &ep = t.val(e_pred);
  for (size_t k = 0; k < sp.size(); ++k)
    if (!(ep.a[k] > sp.a[k]) || !(e_gt.a[k] > s_gt.a[k]))
      throw std::invalid_argument("diou_cols: degenerate segment");
  Var sg = t.constant(s_gt);
  Var eg = t.constant(e_gt);
  Var inter = t.relu(t.sub(emin(t, e_pred, eg), emax(t, s_pred, sg)));
  Var uni = t.sub(t.add(t.sub(e_pred, s_pred), t.constant(e_gt)), t.add(t.constant(s_gt), inter));
  Var iou = t.div(inter, uni);
  Var ctr_pred = t.mul_scalar(t.add(s_pred, e_pred), 0.5);
  Matrix ctr_gt_m = s_gt;
  for (size_t k = 0; k < ctr_gt_m.size(); ++k) ctr_gt_m.a[k] = 0.5 * (s_gt.a[k] + e_gt.a[k]);
  Var gap = t.sub(ctr_pred, t.constant(ctr_gt_m));
  Var enclose = t.sub(emax(t, e_pred, eg), emin(t, s_pred, sg));
  Var penalty = t.div(t.square(gap), t.square(enclose));
  return t.add(t.add_scalar(t.mul_scalar(iou, -1.0), 1.0), penalty);
}

// Sum of squared errors against a constant target column.
inline Var squared_error_sum(Tape& t, Var pred, const Matrix& target) {
  check_same_shape(t.val(pred), target, "squared_error_sum");
  return t.sum_all(t.square(t.sub(pred, t.constant(target))));
}

// One pooled feature row entering the contrastive loss. Background rows
// have category -1 and only ever act as negatives.
struct ContrastiveRow {
  Var feat;  // 1 x D
  int category = -1;
  bool anchor = false;
};

// InfoNCE-style loss over pooled rows. Rows are L2-normalized, pairwise
// similarities are exp(cos/tau); an anchor's positives are the other rows of
// its category, its negatives all rows of different categories plus every
// background row. Anchors without positives are excluded; the rest average.
inline Var contrastive_loss(Tape& t, const std::vector<ContrastiveRow>& rows, double tau) {
  int n = static_cast<int>(rows.size());
  if (n < 2) return t.scalar(0.0);
  std::vector<Var> feats;
  feats.reserve(rows.size());
  for (const auto& r : rows) feats.push_back(r.feat);
  Var normed = t.normalize_rows(t.stack_rows(feats));
  Var sims = t.exp_op(t.mul_scalar(t.matmul(normed, t.transpose(normed)), 1.0 / tau));

  Matrix pos_mask(n, n), neg_mask(n, n), pos_fix(n, 1), active(n, 1);
  int contributing = 0;
  for (int i = 0; i < n; ++i) {
    if (!rows[i].anchor || rows[i].category < 0) {
      pos_fix(i, 0) = 1.0;  // keeps log() away from empty rows
      continue;
    }
    bool has_pos = false;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (rows[j].category == rows[i].category) {
        pos_mask(i, j) = 1.0;
        has_pos = true;
      } else {
        neg_mask(i, j) = 1.0;  // other categories and all background rows
      }
    }
    if (has_pos) {
      active(i, 0) = 1.0;
      ++contributing;
    } else {
      pos_fix(i, 0) = 1.0;
    }
  }
  if (contributing == 0) return t.scalar(0.0);

  Var pos_sums = t.add(t.row_sums(t.mul(sims, t.constant(pos_mask))), t.constant(pos_fix));
  Var neg_sums = t.row_sums(t.mul(sims, t.constant(neg_mask)));
  Var per_row = t.sub(t.log_op(t.add(pos_sums, neg_sums)), t.log_op(pos_sums));
  Var masked = t.mul(per_row, t.constant(active));
  return t.mul_scalar(t.sum_all(masked), 1.0 / contributing);
}

}  // namespace asl
