#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "asl/matrix.hpp"
#include "asl/numerics.hpp"

namespace asl {

// A learnable quantity. Gradient always has the shape of the value and is
// accumulated across tape backward passes until zero_grad().
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::zeros_like(value)) {}

  void zero_grad() { grad.fill(0.0); }
  size_t size() const { return value.size(); }
};

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape over Matrix values. Ops append nodes in evaluation
// order; backward() replays closures in reverse. Constructing with
// with_grad=false skips gradient storage and closures entirely, which is
// the mode used for finite-difference loss evaluations and inference.
class Tape {
 public:
  struct Node {
    Matrix val;
    Matrix grad;
    std::function<void(Tape&)> back;
    Parameter* param = nullptr;
  };

  explicit Tape(bool with_grad = true) : with_grad_(with_grad) {}

  bool with_grad() const { return with_grad_; }
  const Matrix& val(Var v) const { return nodes_[v.i].val; }
  Matrix& grad(Var v) { return nodes_[v.i].grad; }
  size_t node_count() const { return nodes_.size(); }

  Var constant(Matrix m) { return push(std::move(m)); }
  Var scalar(double v) { return push(Matrix::scalar(v)); }

  // Same node on repeated calls, so shared weights accumulate naturally.
  Var leaf(Parameter& p) {
    auto it = leaf_cache_.find(&p);
    if (it != leaf_cache_.end()) return {it->second};
    Var v = push(p.value);
    nodes_[v.i].param = &p;
    leaf_cache_.emplace(&p, v.i);
    return v;
  }

  Var detach(Var x) { return constant(nodes_[x.i].val); }

  // ---- elementwise ----

  Var add(Var x, Var y) {
    const Matrix &a = v(x), &b = v(y);
    check_same_shape(a, b, "tape.add");
    Matrix out = a;
    for (size_t k = 0; k < out.size(); ++k) out.a[k] += b.a[k];
    Var r = push(std::move(out));
    record(r, [x, y, r](Tape& t) {
      accumulate(t.grad(x), t.grad(r), +1.0);
      accumulate(t.grad(y), t.grad(r), +1.0);
    });
    return r;
  }

  Var sub(Var x, Var y) {
    const Matrix &a = v(x), &b = v(y);
    check_same_shape(a, b, "tape.sub");
    Matrix out = a;
    for (size_t k = 0; k < out.size(); ++k) out.a[k] -= b.a[k];
    Var r = push(std::move(out));
    record(r, [x, y, r](Tape& t) {
      accumulate(t.grad(x), t.grad(r), +1.0);
      accumulate(t.grad(y), t.grad(r), -1.0);
    });
    return r;
  }

  Var mul(Var x, Var y) {
    const Matrix &a = v(x), &b = v(y);
    check_same_shape(a, b, "tape.mul");
    Matrix out = a;
    for (size_t k = 0; k < out.size(); ++k) out.a[k] *= b.a[k];
    Var r = push(std::move(out));
    record(r, [x, y, r](Tape& t) {
      const Matrix &g = t.grad(r), &xa = t.v(x), &ya = t.v(y);
      Matrix &gx = t.grad(x), &gy = t.grad(y);
      for (size_t k = 0; k < g.size(); ++k) {
        gx.a[k] += g.a[k] * ya.a[k];
        gy.a[k] += g.a[k] * xa.a[k];
      }
    });
    return r;
  }

  Var div(Var x, Var y) {
    const Matrix &a = v(x), &b = v(y);
    check_same_shape(a, b, "tape.div");
    Matrix out = a;
    for (size_t k = 0; k < out.size(); ++k) out.a[k] /= b.a[k];
    Var r = push(std::move(out));
    record(r, [x, y, r](Tape& t) {
      const Matrix &g = t.grad(r), &xa = t.v(x), &ya = t.v(y);
      Matrix &gx = t.grad(x), &gy = t.grad(y);
      for (size_t k = 0; k < g.size(); ++k) {
        gx.a[k] += g.a[k] / ya.a[k];
        gy.a[k] -= g.a[k] * xa.a[k] / (ya.a[k] * ya.a[k]);
      }
    });
    return r;
  }

  Var add_scalar(Var x, double c) {
    Matrix out = v(x);
    for (double& e : out.a) e += c;
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) { accumulate(t.grad(x), t.grad(r), 1.0); });
    return r;
  }

  Var mul_scalar(Var x, double c) {
    Matrix out = v(x);
    for (double& e : out.a) e *= c;
    Var r = push(std::move(out));
    record(r, [x, r, c](Tape& t) { accumulate(t.grad(x), t.grad(r), c); });
    return r;
  }

  Var sigmoid_op(Var x) {
    Matrix out = v(x);
    for (double& e : out.a) e = sigmoid(e);
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &y = t.v(r);
      Matrix& gx = t.grad(x);
      for (size_t k = 0; k < g.size(); ++k) gx.a[k] += g.a[k] * y.a[k] * (1.0 - y.a[k]);
    });
    return r;
  }

  Var softplus_op(Var x) {
    Matrix out = v(x);
    for (double& e : out.a) e = softplus(e);
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &xa = t.v(x);
      Matrix& gx = t.grad(x);
      for (size_t k = 0; k < g.size(); ++k) gx.a[k] += g.a[k] * sigmoid(xa.a[k]);
    });
    return r;
  }

  Var gelu_op(Var x) {
    Matrix out = v(x);
    for (double& e : out.a) e = gelu(e);
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &xa = t.v(x);
      Matrix& gx = t.grad(x);
      for (size_t k = 0; k < g.size(); ++k) gx.a[k] += g.a[k] * gelu_derivative(xa.a[k]);
    });
    return r;
  }

  Var relu(Var x) {
    Matrix out = v(x);
    for (double& e : out.a) e = e > 0.0 ? e : 0.0;
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &xa = t.v(x);
      Matrix& gx = t.grad(x);
      for (size_t k = 0; k < g.size(); ++k)
        if (xa.a[k] > 0.0) gx.a[k] += g.a[k];
    });
    return r;
  }

  Var exp_op(Var x) {
    Matrix out = v(x);
    for (double& e : out.a) e = std::exp(e);
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &y = t.v(r);
      Matrix& gx = t.grad(x);
      for (size_t k = 0; k < g.size(); ++k) gx.a[k] += g.a[k] * y.a[k];
    });
    return r;
  }

  Var log_op(Var x) {
    Matrix out = v(x);
    for (double& e : out.a) e = std::log(e);
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &xa = t.v(x);
      Matrix& gx = t.grad(x);
      for (size_t k = 0; k < g.size(); ++k) gx.a[k] += g.a[k] / xa.a[k];
    });
    return r;
  }

  Var square(Var x) { return mul(x, x); }

  Var sqrt_op(Var x) {
    Matrix out = v(x);
    for (double& e : out.a) e = std::sqrt(e);
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &y = t.v(r);
      Matrix& gx = t.grad(x);
      for (size_t k = 0; k < g.size(); ++k) gx.a[k] += g.a[k] * 0.5 / y.a[k];
    });
    return r;
  }

  // min(x, c) elementwise; subgradient follows x on ties.
  Var min_const(Var x, double c) {
    Matrix out = v(x);
    for (double& e : out.a) e = e <= c ? e : c;
    Var r = push(std::move(out));
    record(r, [x, r, c](Tape& t) {
      const Matrix &g = t.grad(r), &xa = t.v(x);
      Matrix& gx = t.grad(x);
      for (size_t k = 0; k < g.size(); ++k)
        if (xa.a[k] <= c) gx.a[k] += g.a[k];
    });
    return r;
  }

  Var max_const(Var x, double c) {
    Matrix out = v(x);
    for (double& e : out.a) e = e >= c ? e : c;
    Var r = push(std::move(out));
    record(r, [x, r, c](Tape& t) {
      const Matrix &g = t.grad(r), &xa = t.v(x);
      Matrix& gx = t.grad(x);
      for (size_t k = 0; k < g.size(); ++k)
        if (xa.a[k] >= c) gx.a[k] += g.a[k];
    });
    return r;
  }

  // ---- linear algebra ----

  Var matmul(Var x, Var y) {
    const Matrix &a = v(x), &b = v(y);
    if (a.cols != b.rows)
      throw std::invalid_argument("tape.matmul: inner dims " + shape_str(a) + " * " + shape_str(b));
    Matrix out(a.rows, b.cols);
    matmul_into(out, a, b);
    Var r = push(std::move(out));
    record(r, [x, y, r](Tape& t) {
      const Matrix &g = t.grad(r), &a2 = t.v(x), &b2 = t.v(y);
      // gx += g * b^T
      Matrix& gx = t.grad(x);
      for (int i = 0; i < a2.rows; ++i)
        for (int j = 0; j < b2.cols; ++j) {
          double gij = g(i, j);
          if (gij == 0.0) continue;
          for (int k = 0; k < a2.cols; ++k) gx(i, k) += gij * b2(k, j);
        }
      // gy += a^T * g
      Matrix& gy = t.grad(y);
      for (int i = 0; i < a2.rows; ++i)
        for (int k = 0; k < a2.cols; ++k) {
          double aik = a2(i, k);
          if (aik == 0.0) continue;
          for (int j = 0; j < b2.cols; ++j) gy(k, j) += aik * g(i, j);
        }
    });
    return r;
  }

  Var transpose(Var x) {
    const Matrix& a = v(x);
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
      for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix& g = t.grad(r);
      Matrix& gx = t.grad(x);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) gx(j, i) += g(i, j);
    });
    return r;
  }

  // x (n x m) + b (1 x m), broadcast over rows.
  Var add_row_broadcast(Var x, Var b) {
    const Matrix &a = v(x), &bb = v(b);
    if (bb.rows != 1 || bb.cols != a.cols) throw std::invalid_argument("tape.add_row_broadcast: bias shape");
    Matrix out = a;
    for (int i = 0; i < a.rows; ++i)
      for (int j = 0; j < a.cols; ++j) out(i, j) += bb(0, j);
    Var r = push(std::move(out));
    record(r, [x, b, r](Tape& t) {
      const Matrix& g = t.grad(r);
      accumulate(t.grad(x), g, 1.0);
      Matrix& gb = t.grad(b);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) gb(0, j) += g(i, j);
    });
    return r;
  }

  Var softmax_rows_op(Var x) {
    Matrix out = softmax_rows(v(x));
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &y = t.v(r);
      Matrix& gx = t.grad(x);
      for (int i = 0; i < y.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < y.cols; ++j) dot += g(i, j) * y(i, j);
        for (int j = 0; j < y.cols; ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
      }
    });
    return r;
  }

  // Row-wise layer norm over columns with affine gain/bias (1 x d each).
  Var layer_norm_rows(Var x, Var gain, Var bias) {
    const Matrix &a = v(x), &gn = v(gain), &bs = v(bias);
    if (a.cols < 2) throw std::invalid_argument("tape.layer_norm_rows: need >= 2 columns");
    if (gn.rows != 1 || gn.cols != a.cols || bs.rows != 1 || bs.cols != a.cols)
      throw std::invalid_argument("tape.layer_norm_rows: gain/bias shape");
    Matrix out(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
      double mean = 0.0;
      for (int j = 0; j < a.cols; ++j) mean += a(i, j);
      mean /= a.cols;
      double var = 0.0;
      for (int j = 0; j < a.cols; ++j) var += (a(i, j) - mean) * (a(i, j) - mean);
      var /= a.cols;
      double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      for (int j = 0; j < a.cols; ++j) out(i, j) = (a(i, j) - mean) * inv * gn(0, j) + bs(0, j);
    }
    Var r = push(std::move(out));
    record(r, [x, gain, bias, r](Tape& t) {
      const Matrix &g = t.grad(r), &a2 = t.v(x), &gn2 = t.v(gain);
      Matrix &gx = t.grad(x), &ggain = t.grad(gain), &gbias = t.grad(bias);
      int d = a2.cols;
      for (int i = 0; i < a2.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += a2(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (a2(i, j) - mean) * (a2(i, j) - mean);
        var /= d;
        double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        double gg_mean = 0.0, ggx_mean = 0.0;
        for (int j = 0; j < d; ++j) {
          double xhat = (a2(i, j) - mean) * inv;
          double gg = g(i, j) * gn2(0, j);
          gg_mean += gg;
          ggx_mean += gg * xhat;
          ggain(0, j) += g(i, j) * xhat;
          gbias(0, j) += g(i, j);
        }
        gg_mean /= d;
        ggx_mean /= d;
        for (int j = 0; j < d; ++j) {
          double xhat = (a2(i, j) - mean) * inv;
          double gg = g(i, j) * gn2(0, j);
          gx(i, j) += (gg - gg_mean - xhat * ggx_mean) * inv;
        }
      }
    });
    return r;
  }

  // Same-padded temporal conv over rows: x (T x Din), w ((k*Din) x Dout),
  // b (1 x Dout). Weight row (dt*Din + i) holds the tap for offset dt-(k-1)/2.
  Var conv1d_same(Var x, Var w, Var b, int k) {
    const Matrix &a = v(x), &ww = v(w), &bb = v(b);
    if (ww.rows != k * a.cols) throw std::invalid_argument("tape.conv1d_same: weight rows != k*Din");
    if (bb.rows != 1 || bb.cols != ww.cols) throw std::invalid_argument("tape.conv1d_same: bias shape");
    int T = a.rows, din = a.cols, dout = ww.cols, half = (k - 1) / 2;
    Matrix out(T, dout);
    for (int t = 0; t < T; ++t) {
      for (int o = 0; o < dout; ++o) out(t, o) = bb(0, o);
      for (int dt = 0; dt < k; ++dt) {
        int src = t + dt - half;
        if (src < 0 || src >= T) continue;
        for (int i = 0; i < din; ++i) {
          double xv = a(src, i);
          if (xv == 0.0) continue;
          const int wr = dt * din + i;
          for (int o = 0; o < dout; ++o) out(t, o) += xv * ww(wr, o);
        }
      }
    }
    Var r = push(std::move(out));
    record(r, [x, w, b, r, k](Tape& t) {
      const Matrix &g = t.grad(r), &a2 = t.v(x), &w2 = t.v(w);
      Matrix &gx = t.grad(x), &gw = t.grad(w), &gb = t.grad(b);
      int T = a2.rows, din = a2.cols, dout = w2.cols, half = (k - 1) / 2;
      for (int tt = 0; tt < T; ++tt) {
        for (int o = 0; o < dout; ++o) gb(0, o) += g(tt, o);
        for (int dt = 0; dt < k; ++dt) {
          int src = tt + dt - half;
          if (src < 0 || src >= T) continue;
          for (int i = 0; i < din; ++i) {
            const int wr = dt * din + i;
            double acc = 0.0;
            for (int o = 0; o < dout; ++o) {
              acc += g(tt, o) * w2(wr, o);
              gw(wr, o) += a2(src, i) * g(tt, o);
            }
            gx(src, i) += acc;
          }
        }
      }
    });
    return r;
  }

  // Window-2 stride-2 max over rows; odd tail passes through. Ties pick the
  // earlier row.
  Var maxpool2_rows(Var x) {
    const Matrix& a = v(x);
    int T = a.rows, P = (T + 1) / 2;
    Matrix out(P, a.cols);
    for (int p = 0; p < P; ++p)
      for (int j = 0; j < a.cols; ++j) {
        double m = a(2 * p, j);
        if (2 * p + 1 < T && a(2 * p + 1, j) > m) m = a(2 * p + 1, j);
        out(p, j) = m;
      }
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &a2 = t.v(x);
      Matrix& gx = t.grad(x);
      int T = a2.rows, P = g.rows;
      for (int p = 0; p < P; ++p)
        for (int j = 0; j < a2.cols; ++j) {
          int pick = 2 * p;
          if (2 * p + 1 < T && a2(2 * p + 1, j) > a2(2 * p, j)) pick = 2 * p + 1;
          gx(pick, j) += g(p, j);
        }
    });
    return r;
  }

  // ---- shape / gather ----

  Var slice_rows(Var x, int r0, int r1) {
    const Matrix& a = v(x);
    if (r0 < 0 || r1 > a.rows || r0 >= r1) throw std::invalid_argument("tape.slice_rows: bad range");
    Matrix out(r1 - r0, a.cols);
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < a.cols; ++j) out(i - r0, j) = a(i, j);
    Var r = push(std::move(out));
    record(r, [x, r, r0](Tape& t) {
      const Matrix& g = t.grad(r);
      Matrix& gx = t.grad(x);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) gx(i + r0, j) += g(i, j);
    });
    return r;
  }

  Var slice_cols(Var x, int c0, int c1) {
    const Matrix& a = v(x);
    if (c0 < 0 || c1 > a.cols || c0 >= c1) throw std::invalid_argument("tape.slice_cols: bad range");
    Matrix out(a.rows, c1 - c0);
    for (int i = 0; i < a.rows; ++i)
      for (int j = c0; j < c1; ++j) out(i, j - c0) = a(i, j);
    Var r = push(std::move(out));
    record(r, [x, r, c0](Tape& t) {
      const Matrix& g = t.grad(r);
      Matrix& gx = t.grad(x);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) gx(i, j + c0) += g(i, j);
    });
    return r;
  }

  Var gather_rows(Var x, std::vector<int> idx) {
    const Matrix& a = v(x);
    Matrix out(static_cast<int>(idx.size()), a.cols);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < a.cols; ++j) out(static_cast<int>(i), j) = a(idx[i], j);
    Var r = push(std::move(out));
    record(r, [x, r, idx = std::move(idx)](Tape& t) {
      const Matrix& g = t.grad(r);
      Matrix& gx = t.grad(x);
      for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < g.cols; ++j) gx(idx[i], j) += g(static_cast<int>(i), j);
    });
    return r;
  }

  Var entry(Var x, int i, int j) {
    Matrix out = Matrix::scalar(v(x)(i, j));
    Var r = push(std::move(out));
    record(r, [x, r, i, j](Tape& t) { t.grad(x)(i, j) += t.grad(r)(0, 0); });
    return r;
  }

  Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw std::invalid_argument("tape.stack_rows: empty");
    int m = v(rows[0]).cols;
    Matrix out(static_cast<int>(rows.size()), m);
    for (size_t i = 0; i < rows.size(); ++i) {
      const Matrix& ri = v(rows[i]);
      if (ri.rows != 1 || ri.cols != m) throw std::invalid_argument("tape.stack_rows: row shape");
      for (int j = 0; j < m; ++j) out(static_cast<int>(i), j) = ri(0, j);
    }
    Var r = push(std::move(out));
    record(r, [rows, r](Tape& t) {
      const Matrix& g = t.grad(r);
      for (size_t i = 0; i < rows.size(); ++i) {
        Matrix& gi = t.grad(rows[i]);
        for (int j = 0; j < g.cols; ++j) gi(0, j) += g(static_cast<int>(i), j);
      }
    });
    return r;
  }

  // ---- reductions ----

  Var sum_all(Var x) {
    const Matrix& a = v(x);
    double s = 0.0;
    for (double e : a.a) s += e;
    Var r = push(Matrix::scalar(s));
    record(r, [x, r](Tape& t) {
      double g = t.grad(r)(0, 0);
      Matrix& gx = t.grad(x);
      for (double& e : gx.a) e += g;
    });
    return r;
  }

  Var mean_all(Var x) { return mul_scalar(sum_all(x), 1.0 / static_cast<double>(v(x).size())); }

  Var row_sums(Var x) {
    const Matrix& a = v(x);
    Matrix out(a.rows, 1);
    for (int i = 0; i < a.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < a.cols; ++j) s += a(i, j);
      out(i, 0) = s;
    }
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix& g = t.grad(r);
      Matrix& gx = t.grad(x);
      for (int i = 0; i < gx.rows; ++i)
        for (int j = 0; j < gx.cols; ++j) gx(i, j) += g(i, 0);
    });
    return r;
  }

  Var mean_rows(Var x) {
    const Matrix& a = v(x);
    Matrix out(1, a.cols);
    for (int j = 0; j < a.cols; ++j) {
      double s = 0.0;
      for (int i = 0; i < a.rows; ++i) s += a(i, j);
      out(0, j) = s / a.rows;
    }
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix& g = t.grad(r);
      Matrix& gx = t.grad(x);
      double inv = 1.0 / gx.rows;
      for (int i = 0; i < gx.rows; ++i)
        for (int j = 0; j < gx.cols; ++j) gx(i, j) += g(0, j) * inv;
    });
    return r;
  }

  // out[i,j] = x[i,j] * s[i,0]
  Var scale_rows(Var x, Var s) {
    const Matrix &a = v(x), &sv = v(s);
    if (sv.rows != a.rows || sv.cols != 1) throw std::invalid_argument("tape.scale_rows: scale shape");
    Matrix out = a;
    for (int i = 0; i < a.rows; ++i)
      for (int j = 0; j < a.cols; ++j) out(i, j) *= sv(i, 0);
    Var r = push(std::move(out));
    record(r, [x, s, r](Tape& t) {
      const Matrix &g = t.grad(r), &a2 = t.v(x), &s2 = t.v(s);
      Matrix &gx = t.grad(x), &gs = t.grad(s);
      for (int i = 0; i < a2.rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < a2.cols; ++j) {
          gx(i, j) += g(i, j) * s2(i, 0);
          acc += g(i, j) * a2(i, j);
        }
        gs(i, 0) += acc;
      }
    });
    return r;
  }

  // Rows scaled to unit L2 norm (floor 1e-12 guards exact zeros).
  Var normalize_rows(Var x) {
    const Matrix& a = v(x);
    Matrix out = a;
    for (int i = 0; i < a.rows; ++i) {
      double n2 = 0.0;
      for (int j = 0; j < a.cols; ++j) n2 += a(i, j) * a(i, j);
      double n = std::max(std::sqrt(n2), 1e-12);
      for (int j = 0; j < a.cols; ++j) out(i, j) /= n;
    }
    Var r = push(std::move(out));
    record(r, [x, r](Tape& t) {
      const Matrix &g = t.grad(r), &a2 = t.v(x), &y = t.v(r);
      Matrix& gx = t.grad(x);
      for (int i = 0; i < a2.rows; ++i) {
        double n2 = 0.0;
        for (int j = 0; j < a2.cols; ++j) n2 += a2(i, j) * a2(i, j);
        double n = std::max(std::sqrt(n2), 1e-12);
        double dot = 0.0;
        for (int j = 0; j < a2.cols; ++j) dot += g(i, j) * y(i, j);
        for (int j = 0; j < a2.cols; ++j) gx(i, j) += (g(i, j) - dot * y(i, j)) / n;
      }
    });
    return r;
  }

  // Gaussian bump over fixed sample positions d: exp(-(d-mu)^2 / (2 sigma^2)),
  // with mu and sigma live 1x1 variables.
  Var gauss_col(std::vector<double> d, Var mu, Var sigma) {
    double m = v(mu)(0, 0), s = v(sigma)(0, 0);
    Matrix out(static_cast<int>(d.size()), 1);
    for (size_t i = 0; i < d.size(); ++i) out(static_cast<int>(i), 0) = std::exp(-(d[i] - m) * (d[i] - m) / (2.0 * s * s));
    Var r = push(std::move(out));
    record(r, [d = std::move(d), mu, sigma, r](Tape& t) {
      const Matrix &g = t.grad(r), &y = t.v(r);
      double m = t.v(mu)(0, 0), s = t.v(sigma)(0, 0);
      double gmu = 0.0, gsigma = 0.0;
      for (size_t i = 0; i < d.size(); ++i) {
        double gi = g(static_cast<int>(i), 0) * y(static_cast<int>(i), 0);
        double dm = d[i] - m;
        gmu += gi * dm / (s * s);
        gsigma += gi * dm * dm / (s * s * s);
      }
      t.grad(mu)(0, 0) += gmu;
      t.grad(sigma)(0, 0) += gsigma;
    });
    return r;
  }

  // Seeds d(loss)=1 and replays all closures in reverse creation order,
  // then flushes leaf gradients into their Parameters.
  void backward(Var loss) {
    if (!with_grad_) throw std::logic_error("tape.backward: tape built with with_grad=false");
    const Matrix& lv = val(loss);
    if (lv.rows != 1 || lv.cols != 1) throw std::invalid_argument("tape.backward: loss must be 1x1");
    nodes_[loss.i].grad(0, 0) = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this);
    for (auto& n : nodes_)
      if (n.param) {
        for (size_t k = 0; k < n.grad.size(); ++k) n.param->grad.a[k] += n.grad.a[k];
      }
  }

 private:
  const Matrix& v(Var x) const { return nodes_[x.i].val; }

  Var push(Matrix m) {
    Node n;
    n.val = std::move(m);
    if (with_grad_) n.grad = Matrix::zeros_like(n.val);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  template <class F>
  void record(Var r, F&& f) {
    if (with_grad_) nodes_[r.i].back = std::forward<F>(f);
  }

  static void accumulate(Matrix& dst, const Matrix& src, double scale) {
    for (size_t k = 0; k < dst.size(); ++k) dst.a[k] += scale * src.a[k];
  }

  static void matmul_into(Matrix& out, const Matrix& a, const Matrix& b) {
    // i-k-j loop order keeps the inner loop contiguous in both operands.
    for (int i = 0; i < a.rows; ++i) {
      double* orow = &out.a[static_cast<size_t>(i) * out.cols];
      for (int k = 0; k < a.cols; ++k) {
        double aik = a(i, k);
        if (aik == 0.0) continue;
        const double* brow = &b.a[static_cast<size_t>(k) * b.cols];
        for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
      }
    }
  }

  bool with_grad_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> leaf_cache_;
};

}  // namespace asl
