#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "asl/init.hpp"
#include "asl/matrix.hpp"
#include "asl/rng.hpp"
#include "asl/tape.hpp"

namespace asl {

// Encoder unit: temporal self-attention over frames in parallel with channel
// self-attention over feature dimensions, blended by theta, then a post-norm
// residual + feed-forward pair.
struct EncoderBlock {
  int dim = 0;
  double theta = 0.2;
  Parameter wq_t, wk_t, wv_t;  // temporal attention projections, D x D
  Parameter wq_c, wk_c, wv_c;  // channel attention projections, D x D
  Parameter ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // D -> 4D -> D

  EncoderBlock(const std::string& prefix, int d, double theta_, Rng& rng)
      : dim(d),
        theta(theta_),
        wq_t(prefix + ".wq_t", uniform_init(d, d, d, rng)),
        wk_t(prefix + ".wk_t", uniform_init(d, d, d, rng)),
        wv_t(prefix + ".wv_t", uniform_init(d, d, d, rng)),
        wq_c(prefix + ".wq_c", uniform_init(d, d, d, rng)),
        wk_c(prefix + ".wk_c", uniform_init(d, d, d, rng)),
        wv_c(prefix + ".wv_c", uniform_init(d, d, d, rng)),
        ln1_gain(prefix + ".ln1_gain", Matrix(1, d)),
        ln1_bias(prefix + ".ln1_bias", Matrix(1, d)),
        ln2_gain(prefix + ".ln2_gain", Matrix(1, d)),
        ln2_bias(prefix + ".ln2_bias", Matrix(1, d)),
        ffn_w1(prefix + ".ffn_w1", uniform_init(d, 4 * d, d, rng)),
        ffn_b1(prefix + ".ffn_b1", Matrix(1, 4 * d)),
        ffn_w2(prefix + ".ffn_w2", uniform_init(4 * d, d, 4 * d, rng)),
        ffn_b2(prefix + ".ffn_b2", Matrix(1, d)) {
    ln1_gain.value.fill(1.0);
    ln2_gain.value.fill(1.0);
  }

  std::vector<Parameter*> params() {
    return {&wq_t, &wk_t, &wv_t, &wq_c, &wk_c, &wv_c, &ln1_gain, &ln1_bias,
            &ln2_gain, &ln2_bias, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2};
  }

  // Temporal branch: frames attend to frames. f: T x D -> T x D.
  Var temporal_attention(Tape& t, Var f) {
    Var qt = t.matmul(f, t.leaf(wq_t));
    Var kt = t.matmul(f, t.leaf(wk_t));
    Var vt = t.matmul(f, t.leaf(wv_t));
    Var at = t.softmax_rows_op(t.mul_scalar(t.matmul(qt, t.transpose(kt)), 1.0 / std::sqrt(static_cast<double>(dim))));
    return t.matmul(at, vt);
  }

  // Channel branch: the same attention on the transposed D x T view,
  // scaled by sequence length, then transposed back. f: T x D -> T x D.
  Var channel_attention(Tape& t, Var f) {
    int T = t.val(f).rows;
    Var qc = t.transpose(t.matmul(f, t.leaf(wq_c)));
    Var kc = t.transpose(t.matmul(f, t.leaf(wk_c)));
    Var vc = t.transpose(t.matmul(f, t.leaf(wv_c)));
    Var ac = t.softmax_rows_op(t.mul_scalar(t.matmul(qc, t.transpose(kc)), 1.0 / std::sqrt(static_cast<double>(T))));
    return t.transpose(t.matmul(ac, vc));
  }

  // f: T x D -> T x D
  Var forward(Tape& t, Var f) {
    Var fused = t.add(t.mul_scalar(temporal_attention(t, f), 1.0 - theta),
                      t.mul_scalar(channel_attention(t, f), theta));
    Var a = t.layer_norm_rows(t.add(f, fused), t.leaf(ln1_gain), t.leaf(ln1_bias));
    Var h = t.gelu_op(t.add_row_broadcast(t.matmul(a, t.leaf(ffn_w1)), t.leaf(ffn_b1)));
    Var ffn = t.add_row_broadcast(t.matmul(h, t.leaf(ffn_w2)), t.leaf(ffn_b2));
    return t.layer_norm_rows(t.add(a, ffn), t.leaf(ln2_gain), t.leaf(ln2_bias));
  }
};

// Per-frame heads shared across pyramid levels: two temporal convs each.
// Classification emits raw logits; localization emits softplus'd distances
// to the segment start/end in stride units.
struct PredictionHeads {
  int dim = 0;
  int num_classes = 0;
  Parameter cls_w1, cls_b1, cls_w2, cls_b2;
  Parameter reg_w1, reg_b1, reg_w2, reg_b2;

  PredictionHeads(int d, int classes, Rng& rng)
      : dim(d),
        num_classes(classes),
        cls_w1("heads.cls_w1", uniform_init(3 * d, d, 3 * d, rng)),
        cls_b1("heads.cls_b1", Matrix(1, d)),
        cls_w2("heads.cls_w2", uniform_init(3 * d, classes, 3 * d, rng)),
        cls_b2("heads.cls_b2", Matrix(1, classes)),
        reg_w1("heads.reg_w1", uniform_init(3 * d, d, 3 * d, rng)),
        reg_b1("heads.reg_b1", Matrix(1, d)),
        reg_w2("heads.reg_w2", uniform_init(3 * d, 2, 3 * d, rng)),
        reg_b2("heads.reg_b2", Matrix(1, 2)) {}

  std::vector<Parameter*> params() {
    return {&cls_w1, &cls_b1, &cls_w2, &cls_b2, &reg_w1, &reg_b1, &reg_w2, &reg_b2};
  }

  Var classify(Tape& t, Var x) {
    Var h = t.gelu_op(t.conv1d_same(x, t.leaf(cls_w1), t.leaf(cls_b1), 3));
    return t.conv1d_same(h, t.leaf(cls_w2), t.leaf(cls_b2), 3);
  }

  Var localize(Tape& t, Var x) {
    Var h = t.gelu_op(t.conv1d_same(x, t.leaf(reg_w1), t.leaf(reg_b1), 3));
    return t.softplus_op(t.conv1d_same(h, t.leaf(reg_w2), t.leaf(reg_b2), 3));
  }
};

struct ModelConfig {
  int dim = 32;
  int num_classes = 4;
  int levels = 4;
  int base_blocks = 1;
  double theta = 0.2;
};

struct ModelOutputs {
  std::vector<Var> level_features;  // T_l x D per level
  std::vector<Var> cls_logits;      // T_l x N_c
  std::vector<Var> reg_offsets;     // T_l x 2, positive
};

// Feature pyramid detector: encoder blocks at full resolution, then
// stride-2 max pooling plus one encoder block per coarser level, with the
// shared heads applied at every level.
struct Model {
  ModelConfig cfg;
  std::vector<EncoderBlock> base;
  std::vector<EncoderBlock> level_blocks;  // levels 1..L-1
  PredictionHeads heads;

  Model(const ModelConfig& c, Rng& rng) : cfg(c), heads(c.dim, c.num_classes, rng) {
    base.reserve(c.base_blocks);
    for (int b = 0; b < c.base_blocks; ++b)
      base.emplace_back("encoder.base" + std::to_string(b), c.dim, c.theta, rng);
    level_blocks.reserve(c.levels - 1);
    for (int l = 1; l < c.levels; ++l)
      level_blocks.emplace_back("encoder.level" + std::to_string(l), c.dim, c.theta, rng);
  }

  std::vector<Parameter*> params() {
    std::vector<Parameter*> all;
    for (auto& b : base)
      for (Parameter* p : b.params()) all.push_back(p);
    for (auto& b : level_blocks)
      for (Parameter* p : b.params()) all.push_back(p);
    for (Parameter* p : heads.params()) all.push_back(p);
    return all;
  }

  ModelOutputs forward(Tape& t, Var features) {
    int T = t.val(features).rows;
    int min_frames = 1 << (cfg.levels - 1);
    if (T < min_frames)
      throw std::invalid_argument("model.forward: " + std::to_string(cfg.levels) + "-level pyramid needs at least " +
                                  std::to_string(min_frames) + " frames, got " + std::to_string(T));
    ModelOutputs out;
    Var x = features;
    for (auto& b : base) x = b.forward(t, x);
    out.level_features.push_back(x);
    for (auto& b : level_blocks) {
      x = b.forward(t, t.maxpool2_rows(x));
      out.level_features.push_back(x);
    }
    for (Var lf : out.level_features) {
      out.cls_logits.push_back(heads.classify(t, lf));
      out.reg_offsets.push_back(heads.localize(t, lf));
    }
    return out;
  }
};

}  // namespace asl
