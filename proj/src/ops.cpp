#include "lvt/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace lvt {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

namespace {

int64_t rows_of(const Tensor& t) {
  // collapse all but the last axis
  LVT_CHECK(t.ndim() >= 1, ShapeError, "expected at least 1-d tensor");
  return t.numel() / t.dim(t.ndim() - 1);
}

}  // namespace

// ---- elementwise ------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a->value, b->value, "add");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a->value.at(i) + b->value.at(i);
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    a->accumulate(self.grad);
    b->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a->value.at(i) - b->value.at(i);
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    a->accumulate(self.grad);
    Tensor neg(self.grad.shape());
    for (int64_t i = 0; i < neg.numel(); ++i) neg.at(i) = -self.grad.at(i);
    b->accumulate(neg);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor out(a->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a->value.at(i) * b->value.at(i);
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    Tensor da(a->value.shape()), db(b->value.shape());
    for (int64_t i = 0; i < da.numel(); ++i) {
      da.at(i) = self.grad.at(i) * b->value.at(i);
      db.at(i) = self.grad.at(i) * a->value.at(i);
    }
    a->accumulate(da);
    b->accumulate(db);
  });
}

Var scale(const Var& a, Real c) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = a->value.at(i) * c;
  return make_op(std::move(out), {a}, [a, c](Node& self) {
    Tensor da(a->value.shape());
    for (int64_t i = 0; i < da.numel(); ++i) da.at(i) = self.grad.at(i) * c;
    a->accumulate(da);
  });
}

Var add_bias(const Var& x, const Var& b) {
  LVT_CHECK(b->value.ndim() == 1, ShapeError, "add_bias: bias must be 1-d");
  const int d = b->value.dim(0);
  LVT_CHECK(x->value.ndim() >= 1 && x->value.dim(x->value.ndim() - 1) == d, ShapeError,
            "add_bias: last extent of " + shape_str(x->value.shape()) + " vs bias " +
                shape_str(b->value.shape()));
  const int64_t rows = rows_of(x->value);
  Tensor out(x->value.shape());
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < d; ++j) out.at(r * d + j) = x->value.at(r * d + j) + b->value.at(j);
  return make_op(std::move(out), {x, b}, [x, b, rows, d](Node& self) {
    x->accumulate(self.grad);
    Tensor db(b->value.shape());
    for (int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < d; ++j) db.at(j) += self.grad.at(r * d + j);
    b->accumulate(db);
  });
}

Var relu(const Var& x) {
  check_finite(x->value, "relu");
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = x->value.at(i) > 0 ? x->value.at(i) : 0.0;
  return make_op(std::move(out), {x}, [x](Node& self) {
    Tensor dx(x->value.shape());
    for (int64_t i = 0; i < dx.numel(); ++i)
      dx.at(i) = x->value.at(i) > 0 ? self.grad.at(i) : 0.0;
    x->accumulate(dx);
  });
}

Var sum_all(const Var& x) {
  Real s = 0;
  for (int64_t i = 0; i < x->value.numel(); ++i) s += x->value.at(i);
  return make_op(Tensor::scalar(s), {x}, [x](Node& self) {
    Tensor dx(x->value.shape(), self.grad.item());
    x->accumulate(dx);
  });
}

Var mean_all(const Var& x) {
  const int64_t n = x->value.numel();
  LVT_CHECK(n > 0, ShapeError, "mean_all of empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<Real>(n));
}

Var reshape(const Var& x, Shape s) {
  Tensor out = x->value.reshaped(std::move(s));
  return make_op(std::move(out), {x}, [x](Node& self) {
    x->accumulate(self.grad.reshaped(x->value.shape()));
  });
}

Var stop_gradient(const Var& x) { return make_constant(x->value); }

Var dot_const(const Var& x, const Tensor& weights) {
  check_same_shape(x->value, weights, "dot_const");
  Real s = 0;
  for (int64_t i = 0; i < x->value.numel(); ++i) s += x->value.at(i) * weights.at(i);
  return make_op(Tensor::scalar(s), {x}, [x, weights](Node& self) {
    Tensor dx(x->value.shape());
    const Real g = self.grad.item();
    for (int64_t i = 0; i < dx.numel(); ++i) dx.at(i) = g * weights.at(i);
    x->accumulate(dx);
  });
}

// ---- matmul -----------------------------------------------------------------

Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
  LVT_CHECK(a->value.ndim() == 2 && b->value.ndim() == 2, ShapeError,
            "matmul expects 2-d tensors, got " + shape_str(a->value.shape()) + " and " +
                shape_str(b->value.shape()));
  const int am = a->value.dim(0), ak = a->value.dim(1);
  const int bk = b->value.dim(0), bn = b->value.dim(1);
  const int M = ta ? ak : am, K = ta ? am : ak;
  const int K2 = tb ? bn : bk, N = tb ? bk : bn;
  LVT_CHECK(K == K2, ShapeError,
            "matmul: inner extents differ, " + shape_str(a->value.shape()) + (ta ? "^T" : "") +
                " x " + shape_str(b->value.shape()) + (tb ? "^T" : ""));
  Tensor out(Shape{M, N});
  {
    MapConst A(a->value.data(), am, ak), B(b->value.data(), bk, bn);
    MapMat C(out.data(), M, N);
    if (!ta && !tb)
      C.noalias() = A * B;
    else if (ta && !tb)
      C.noalias() = A.transpose() * B;
    else if (!ta && tb)
      C.noalias() = A * B.transpose();
    else
      C.noalias() = A.transpose() * B.transpose();
  }
  return make_op(std::move(out), {a, b}, [a, b, ta, tb, am, ak, bk, bn, M, N](Node& self) {
    MapConst dC(self.grad.data(), M, N);
    MapConst A(a->value.data(), am, ak), B(b->value.data(), bk, bn);
    Tensor da(Shape{am, ak}), db(Shape{bk, bn});
    MapMat dA(da.data(), am, ak), dB(db.data(), bk, bn);
    // dA = dC B^T (per effective orientation), mapped back through ta/tb.
    if (!ta && !tb) {
      dA.noalias() = dC * B.transpose();
      dB.noalias() = A.transpose() * dC;
    } else if (ta && !tb) {
      dA.noalias() = B * dC.transpose();
      dB.noalias() = A * dC;
    } else if (!ta && tb) {
      dA.noalias() = dC * B;
      dB.noalias() = dC.transpose() * A;
    } else {
      dA.noalias() = B.transpose() * dC.transpose();
      dB.noalias() = dC.transpose() * A.transpose();
    }
    a->accumulate(da);
    b->accumulate(db);
  });
}

Var slice_cols(const Var& x, int c0, int c1) {
  LVT_CHECK(x->value.ndim() == 2, ShapeError, "slice_cols expects 2-d");
  const int n = x->value.dim(0), d = x->value.dim(1);
  LVT_CHECK(0 <= c0 && c0 < c1 && c1 <= d, ShapeError, "slice_cols range out of bounds");
  const int w = c1 - c0;
  Tensor out(Shape{n, w});
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < w; ++j) out.at(static_cast<int64_t>(r) * w + j) = x->value.at(static_cast<int64_t>(r) * d + c0 + j);
  return make_op(std::move(out), {x}, [x, c0, n, d, w](Node& self) {
    Tensor dx(x->value.shape());
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < w; ++j)
        dx.at(static_cast<int64_t>(r) * d + c0 + j) = self.grad.at(static_cast<int64_t>(r) * w + j);
    x->accumulate(dx);
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  LVT_CHECK(!xs.empty(), ShapeError, "concat_cols of nothing");
  const int n = xs[0]->value.dim(0);
  int total = 0;
  for (const auto& x : xs) {
    LVT_CHECK(x->value.ndim() == 2 && x->value.dim(0) == n, ShapeError,
              "concat_cols: row mismatch");
    total += x->value.dim(1);
  }
  Tensor out(Shape{n, total});
  int off = 0;
  for (const auto& x : xs) {
    const int d = x->value.dim(1);
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < d; ++j)
        out.at(static_cast<int64_t>(r) * total + off + j) = x->value.at(static_cast<int64_t>(r) * d + j);
    off += d;
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return make_op(std::move(out), parents, [xs, n, total](Node& self) {
    int off = 0;
    for (const auto& x : xs) {
      const int d = x->value.dim(1);
      Tensor dx(x->value.shape());
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < d; ++j)
          dx.at(static_cast<int64_t>(r) * d + j) = self.grad.at(static_cast<int64_t>(r) * total + off + j);
      x->accumulate(dx);
      off += d;
    }
  });
}

Var tile_rows(const Var& x, int m) {
  LVT_CHECK(x->value.ndim() == 2 && x->value.dim(0) == 1, ShapeError, "tile_rows expects [1,n]");
  const int n = x->value.dim(1);
  Tensor out(Shape{m, n});
  for (int r = 0; r < m; ++r)
    for (int j = 0; j < n; ++j) out.at(static_cast<int64_t>(r) * n + j) = x->value.at(j);
  return make_op(std::move(out), {x}, [x, m, n](Node& self) {
    Tensor dx(x->value.shape());
    for (int r = 0; r < m; ++r)
      for (int j = 0; j < n; ++j) dx.at(j) += self.grad.at(static_cast<int64_t>(r) * n + j);
    x->accumulate(dx);
  });
}

Var embedding_lookup(const Var& table, const std::vector<int>& indices) {
  LVT_CHECK(table->value.ndim() == 2, ShapeError, "embedding_lookup: table must be [V,d]");
  const int V = table->value.dim(0), d = table->value.dim(1);
  const int n = static_cast<int>(indices.size());
  Tensor out(Shape{n, d});
  for (int r = 0; r < n; ++r) {
    const int idx = indices[static_cast<size_t>(r)];
    LVT_CHECK(0 <= idx && idx < V, ShapeError,
              "embedding_lookup: index " + std::to_string(idx) + " out of [0," + std::to_string(V) + ")");
    for (int j = 0; j < d; ++j)
      out.at(static_cast<int64_t>(r) * d + j) = table->value.at(static_cast<int64_t>(idx) * d + j);
  }
  return make_op(std::move(out), {table}, [table, indices, d](Node& self) {
    Tensor dt(table->value.shape());
    const int n = static_cast<int>(indices.size());
    for (int r = 0; r < n; ++r) {
      const int idx = indices[static_cast<size_t>(r)];
      for (int j = 0; j < d; ++j)
        dt.at(static_cast<int64_t>(idx) * d + j) += self.grad.at(static_cast<int64_t>(r) * d + j);
    }
    table->accumulate(dt);
  });
}

// ---- softmax family ----------------------------------------------------------

Var softmax(const Var& x, int axis) {
  check_finite(x->value, "softmax");
  const auto& sh = x->value.shape();
  LVT_CHECK(0 <= axis && axis < static_cast<int>(sh.size()), ShapeError, "softmax: bad axis");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < sh.size(); ++i) inner *= sh[i];
  const int64_t n = sh[static_cast<size_t>(axis)];
  Tensor out(sh);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * n * inner + in;
      Real mx = x->value.at(base);
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x->value.at(base + j * inner));
      Real s = 0;
      for (int64_t j = 0; j < n; ++j) {
        const Real e = std::exp(x->value.at(base + j * inner) - mx);
        out.at(base + j * inner) = e;
        s += e;
      }
      for (int64_t j = 0; j < n; ++j) out.at(base + j * inner) /= s;
    }
  }
  Tensor probs = out;  // shared buffer for backward
  return make_op(std::move(out), {x}, [x, probs, outer, inner, n](Node& self) {
    Tensor dx(x->value.shape());
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * n * inner + in;
        Real dot = 0;
        for (int64_t j = 0; j < n; ++j) dot += self.grad.at(base + j * inner) * probs.at(base + j * inner);
        for (int64_t j = 0; j < n; ++j)
          dx.at(base + j * inner) = probs.at(base + j * inner) * (self.grad.at(base + j * inner) - dot);
      }
    }
    x->accumulate(dx);
  });
}

Var masked_softmax(const Var& logits, const std::vector<uint8_t>& visible) {
  LVT_CHECK(logits->value.ndim() == 2, ShapeError, "masked_softmax expects [n,k]");
  const int n = logits->value.dim(0), k = logits->value.dim(1);
  LVT_CHECK(static_cast<int64_t>(visible.size()) == static_cast<int64_t>(n) * k, ShapeError,
            "masked_softmax: mask size mismatch");
  check_finite(logits->value, "masked_softmax");
  Tensor out(Shape{n, k});
  for (int r = 0; r < n; ++r) {
    const int64_t base = static_cast<int64_t>(r) * k;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (int j = 0; j < k; ++j)
      if (visible[static_cast<size_t>(base + j)]) mx = std::max(mx, logits->value.at(base + j));
    if (!std::isfinite(mx)) continue;  // empty context row stays all-zero
    Real s = 0;
    for (int j = 0; j < k; ++j) {
      if (!visible[static_cast<size_t>(base + j)]) continue;
      const Real e = std::exp(logits->value.at(base + j) - mx);
      out.at(base + j) = e;
      s += e;
    }
    for (int j = 0; j < k; ++j) out.at(base + j) /= s;
  }
  Tensor probs = out;
  return make_op(std::move(out), {logits}, [logits, probs, visible, n, k](Node& self) {
    Tensor dx(logits->value.shape());
    for (int r = 0; r < n; ++r) {
      const int64_t base = static_cast<int64_t>(r) * k;
      Real dot = 0;
      for (int j = 0; j < k; ++j) dot += self.grad.at(base + j) * probs.at(base + j);
      for (int j = 0; j < k; ++j) {
        if (!visible[static_cast<size_t>(base + j)]) continue;
        dx.at(base + j) = probs.at(base + j) * (self.grad.at(base + j) - dot);
      }
    }
    logits->accumulate(dx);
  });
}

Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets) {
  LVT_CHECK(logits->value.ndim() == 2, ShapeError, "cross_entropy expects [n,K]");
  const int n = logits->value.dim(0), K = logits->value.dim(1);
  LVT_CHECK(static_cast<int>(targets.size()) == n, ShapeError, "cross_entropy: target count mismatch");
  check_finite(logits->value, "cross_entropy");
  Tensor out(Shape{n});
  Tensor probs(Shape{n, K});
  for (int r = 0; r < n; ++r) {
    const int tgt = targets[static_cast<size_t>(r)];
    LVT_CHECK(0 <= tgt && tgt < K, ShapeError, "cross_entropy: target out of range");
    const int64_t base = static_cast<int64_t>(r) * K;
    Real mx = logits->value.at(base);
    for (int j = 1; j < K; ++j) mx = std::max(mx, logits->value.at(base + j));
    Real s = 0;
    for (int j = 0; j < K; ++j) s += std::exp(logits->value.at(base + j) - mx);
    const Real lse = mx + std::log(s);
    out.at(r) = lse - logits->value.at(base + tgt);
    for (int j = 0; j < K; ++j) probs.at(base + j) = std::exp(logits->value.at(base + j) - lse);
  }
  return make_op(std::move(out), {logits}, [logits, probs, targets, n, K](Node& self) {
    Tensor dx(logits->value.shape());
    for (int r = 0; r < n; ++r) {
      const int64_t base = static_cast<int64_t>(r) * K;
      const Real g = self.grad.at(r);
      for (int j = 0; j < K; ++j) dx.at(base + j) = g * probs.at(base + j);
      dx.at(base + targets[static_cast<size_t>(r)]) -= g;
    }
    logits->accumulate(dx);
  });
}

Var cross_entropy(const Var& logits_row, int target) {
  LVT_CHECK(logits_row->value.ndim() == 1, ShapeError, "cross_entropy: logits must be 1-d");
  const int K = logits_row->value.dim(0);
  Var rows = reshape(logits_row, Shape{1, K});
  Var nll = cross_entropy_rows(rows, {target});
  return reshape(nll, Shape{});
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
  LVT_CHECK(x->value.ndim() == 2, ShapeError, "layer_norm expects [n,d]");
  const int n = x->value.dim(0), d = x->value.dim(1);
  LVT_CHECK(gain->value.ndim() == 1 && gain->value.dim(0) == d, ShapeError, "layer_norm: gain shape");
  LVT_CHECK(bias->value.ndim() == 1 && bias->value.dim(0) == d, ShapeError, "layer_norm: bias shape");
  constexpr Real eps = 1e-5;
  Tensor out(Shape{n, d});
  Tensor xhat(Shape{n, d});
  Tensor inv_std(Shape{n});
  for (int r = 0; r < n; ++r) {
    const int64_t base = static_cast<int64_t>(r) * d;
    Real mu = 0;
    for (int j = 0; j < d; ++j) mu += x->value.at(base + j);
    mu /= d;
    Real var = 0;
    for (int j = 0; j < d; ++j) {
      const Real c = x->value.at(base + j) - mu;
      var += c * c;
    }
    var /= d;
    const Real is = 1.0 / std::sqrt(var + eps);
    inv_std.at(r) = is;
    for (int j = 0; j < d; ++j) {
      const Real h = (x->value.at(base + j) - mu) * is;
      xhat.at(base + j) = h;
      out.at(base + j) = h * gain->value.at(j) + bias->value.at(j);
    }
  }
  return make_op(std::move(out), {x, gain, bias},
                 [x, gain, bias, xhat, inv_std, n, d](Node& self) {
                   Tensor dx(x->value.shape()), dg(gain->value.shape()), db(bias->value.shape());
                   for (int r = 0; r < n; ++r) {
                     const int64_t base = static_cast<int64_t>(r) * d;
                     Real m1 = 0, m2 = 0;
                     for (int j = 0; j < d; ++j) {
                       const Real dh = self.grad.at(base + j) * gain->value.at(j);
                       m1 += dh;
                       m2 += dh * xhat.at(base + j);
                       dg.at(j) += self.grad.at(base + j) * xhat.at(base + j);
                       db.at(j) += self.grad.at(base + j);
                     }
                     m1 /= d;
                     m2 /= d;
                     for (int j = 0; j < d; ++j) {
                       const Real dh = self.grad.at(base + j) * gain->value.at(j);
                       dx.at(base + j) = (dh - m1 - xhat.at(base + j) * m2) * inv_std.at(r);
                     }
                   }
                   x->accumulate(dx);
                   gain->accumulate(dg);
                   bias->accumulate(db);
                 });
}

// ---- convolution -------------------------------------------------------------

namespace {

struct ConvGeom {
  int N, H, W, Ci;
  int kh, kw, Co;
  int stride;
  int oh, ow;
  int pad_h, pad_w;  // leading padding
};

ConvGeom conv_geometry(const Shape& xs, const Shape& ks, int stride, Padding padding) {
  LVT_CHECK(xs.size() == 4, ShapeError, "conv2d: input must be [N,H,W,Cin], got " + shape_str(xs));
  LVT_CHECK(ks.size() == 4, ShapeError, "conv2d: kernel must be [kh,kw,Cin,Cout], got " + shape_str(ks));
  ConvGeom g;
  g.N = xs[0];
  g.H = xs[1];
  g.W = xs[2];
  g.Ci = xs[3];
  g.kh = ks[0];
  g.kw = ks[1];
  g.Co = ks[3];
  g.stride = stride;
  LVT_CHECK(ks[2] == g.Ci, ShapeError,
            "conv2d: channel mismatch, input " + shape_str(xs) + " vs kernel " + shape_str(ks));
  LVT_CHECK(stride >= 1, ShapeError, "conv2d: stride must be >= 1");
  if (padding == Padding::Valid) {
    LVT_CHECK(g.kh <= g.H && g.kw <= g.W, ShapeError,
              "conv2d: kernel " + shape_str(ks) + " larger than input " + shape_str(xs));
    g.oh = (g.H - g.kh) / stride + 1;
    g.ow = (g.W - g.kw) / stride + 1;
    g.pad_h = g.pad_w = 0;
  } else {  // Same geometry (CausalMask shares it)
    g.oh = (g.H + stride - 1) / stride;
    g.ow = (g.W + stride - 1) / stride;
    const int tot_h = std::max((g.oh - 1) * stride + g.kh - g.H, 0);
    const int tot_w = std::max((g.ow - 1) * stride + g.kw - g.W, 0);
    g.pad_h = tot_h / 2;
    g.pad_w = tot_w / 2;
  }
  return g;
}

// gather input patches into [N*oh*ow, kh*kw*Ci]
Tensor im2col(const Tensor& x, const ConvGeom& g) {
  const int cols = g.kh * g.kw * g.Ci;
  Tensor col(Shape{g.N * g.oh * g.ow, cols});
  Real* cd = col.data();
  const Real* xd = x.data();
  int64_t row = 0;
  for (int n = 0; n < g.N; ++n) {
    for (int i = 0; i < g.oh; ++i) {
      for (int j = 0; j < g.ow; ++j, ++row) {
        Real* dst = cd + row * cols;
        for (int u = 0; u < g.kh; ++u) {
          const int y = i * g.stride - g.pad_h + u;
          for (int v = 0; v < g.kw; ++v) {
            const int xx = j * g.stride - g.pad_w + v;
            Real* d = dst + (u * g.kw + v) * g.Ci;
            if (y < 0 || y >= g.H || xx < 0 || xx >= g.W) {
              std::fill(d, d + g.Ci, 0.0);
            } else {
              const Real* s = xd + ((static_cast<int64_t>(n) * g.H + y) * g.W + xx) * g.Ci;
              std::copy(s, s + g.Ci, d);
            }
          }
        }
      }
    }
  }
  return col;
}

// scatter [N*oh*ow, kh*kw*Ci] patch gradients back onto the input grid
Tensor col2im(const Tensor& col, const ConvGeom& g) {
  Tensor x(Shape{g.N, g.H, g.W, g.Ci});
  Real* xd = x.data();
  const Real* cd = col.data();
  const int cols = g.kh * g.kw * g.Ci;
  int64_t row = 0;
  for (int n = 0; n < g.N; ++n) {
    for (int i = 0; i < g.oh; ++i) {
      for (int j = 0; j < g.ow; ++j, ++row) {
        const Real* src = cd + row * cols;
        for (int u = 0; u < g.kh; ++u) {
          const int y = i * g.stride - g.pad_h + u;
          if (y < 0 || y >= g.H) continue;
          for (int v = 0; v < g.kw; ++v) {
            const int xx = j * g.stride - g.pad_w + v;
            if (xx < 0 || xx >= g.W) continue;
            Real* d = xd + ((static_cast<int64_t>(n) * g.H + y) * g.W + xx) * g.Ci;
            const Real* s = src + (u * g.kw + v) * g.Ci;
            for (int c = 0; c < g.Ci; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
  return x;
}

Tensor conv_forward_raw(const Tensor& x, const Tensor& k, const ConvGeom& g) {
  Tensor col = im2col(x, g);
  Tensor out(Shape{g.N, g.oh, g.ow, g.Co});
  const int cols = g.kh * g.kw * g.Ci;
  MapConst C(col.data(), g.N * static_cast<int64_t>(g.oh) * g.ow, cols);
  MapConst K(k.data(), cols, g.Co);
  MapMat O(out.data(), g.N * static_cast<int64_t>(g.oh) * g.ow, g.Co);
  O.noalias() = C * K;
  return out;
}

Tensor conv_grad_kernel_raw(const Tensor& x, const Tensor& dout, const ConvGeom& g) {
  Tensor col = im2col(x, g);
  const int cols = g.kh * g.kw * g.Ci;
  Tensor dk(Shape{g.kh, g.kw, g.Ci, g.Co});
  MapConst C(col.data(), g.N * static_cast<int64_t>(g.oh) * g.ow, cols);
  MapConst D(dout.data(), g.N * static_cast<int64_t>(g.oh) * g.ow, g.Co);
  MapMat K(dk.data(), cols, g.Co);
  K.noalias() = C.transpose() * D;
  return dk;
}

Tensor conv_grad_input_raw(const Tensor& dout, const Tensor& k, const ConvGeom& g) {
  const int cols = g.kh * g.kw * g.Ci;
  Tensor dcol(Shape{g.N * g.oh * g.ow, cols});
  MapConst D(dout.data(), g.N * static_cast<int64_t>(g.oh) * g.ow, g.Co);
  MapConst K(k.data(), cols, g.Co);
  MapMat C(dcol.data(), g.N * static_cast<int64_t>(g.oh) * g.ow, cols);
  C.noalias() = D * K.transpose();
  return col2im(dcol, g);
}

// taps at or after the raster-order center contribute nothing
Tensor causal_tap_mask(const Shape& ks) {
  Tensor m(ks, 1.0);
  const int kh = ks[0], kw = ks[1], ci = ks[2], co = ks[3];
  const int cu = kh / 2, cv = kw / 2;
  for (int u = 0; u < kh; ++u)
    for (int v = 0; v < kw; ++v)
      if (u > cu || (u == cu && v >= cv))
        for (int64_t c = 0; c < static_cast<int64_t>(ci) * co; ++c)
          m.at(((static_cast<int64_t>(u) * kw + v) * ci * co) + c) = 0.0;
  return m;
}

}  // namespace

Var conv2d(const Var& x, const Var& kernel, int stride, Padding padding) {
  if (padding == Padding::CausalMask) {
    Var masked = mul(kernel, make_constant(causal_tap_mask(kernel->value.shape())));
    return conv2d(x, masked, stride, Padding::Same);
  }
  const ConvGeom g = conv_geometry(x->value.shape(), kernel->value.shape(), stride, padding);
  Tensor out = conv_forward_raw(x->value, kernel->value, g);
  return make_op(std::move(out), {x, kernel}, [x, kernel, g](Node& self) {
    x->accumulate(conv_grad_input_raw(self.grad, kernel->value, g));
    kernel->accumulate(conv_grad_kernel_raw(x->value, self.grad, g));
  });
}

Var conv2d_transpose(const Var& y, const Var& kernel, int stride, int out_h, int out_w) {
  const Shape& ys = y->value.shape();
  const Shape& ks = kernel->value.shape();
  LVT_CHECK(ys.size() == 4, ShapeError, "conv2d_transpose: input must be [N,h,w,C], got " + shape_str(ys));
  LVT_CHECK(ks.size() == 4, ShapeError,
            "conv2d_transpose: kernel must be [kh,kw,Cout,Cin], got " + shape_str(ks));
  if (out_h < 0) out_h = ys[1] * stride;
  if (out_w < 0) out_w = ys[2] * stride;
  // geometry of the conv this op is the adjoint of
  const ConvGeom g = conv_geometry(Shape{ys[0], out_h, out_w, ks[2]}, ks, stride, Padding::Same);
  LVT_CHECK(g.oh == ys[1] && g.ow == ys[2], ShapeError,
            "conv2d_transpose: input " + shape_str(ys) + " inconsistent with target " +
                std::to_string(out_h) + "x" + std::to_string(out_w) + " at stride " + std::to_string(stride));
  LVT_CHECK(g.Co == ys[3], ShapeError,
            "conv2d_transpose: channel mismatch, input " + shape_str(ys) + " vs kernel " + shape_str(ks));
  Tensor out = conv_grad_input_raw(y->value, kernel->value, g);
  return make_op(std::move(out), {y, kernel}, [y, kernel, g](Node& self) {
    y->accumulate(conv_forward_raw(self.grad, kernel->value, g));
    kernel->accumulate(conv_grad_kernel_raw(self.grad, y->value, g));
  });
}

Var relative_bias_matrix(const Var& bias_t, const Var& bias_h, const Var& bias_w,
                         const std::vector<GridPos>& qpos, const std::vector<GridPos>& kpos) {
  auto radius = [](const Var& b) {
    LVT_CHECK(b->value.ndim() == 1 && b->value.dim(0) % 2 == 1, ShapeError,
              "relative bias table must have odd length");
    return (b->value.dim(0) - 1) / 2;
  };
  const int rt = radius(bias_t), rh = radius(bias_h), rw = radius(bias_w);
  const int nq = static_cast<int>(qpos.size()), nk = static_cast<int>(kpos.size());
  auto clip = [](int delta, int r) { return std::clamp(delta, -r, r) + r; };
  std::vector<int> it(static_cast<size_t>(nq) * nk), ih(static_cast<size_t>(nq) * nk), iw(static_cast<size_t>(nq) * nk);
  Tensor out(Shape{nq, nk});
  for (int q = 0; q < nq; ++q) {
    for (int k = 0; k < nk; ++k) {
      const size_t e = static_cast<size_t>(q) * nk + k;
      it[e] = clip(kpos[static_cast<size_t>(k)].t - qpos[static_cast<size_t>(q)].t, rt);
      ih[e] = clip(kpos[static_cast<size_t>(k)].y - qpos[static_cast<size_t>(q)].y, rh);
      iw[e] = clip(kpos[static_cast<size_t>(k)].x - qpos[static_cast<size_t>(q)].x, rw);
      out.at(static_cast<int64_t>(e)) =
          bias_t->value.at(it[e]) + bias_h->value.at(ih[e]) + bias_w->value.at(iw[e]);
    }
  }
  return make_op(std::move(out), {bias_t, bias_h, bias_w},
                 [bias_t, bias_h, bias_w, it, ih, iw, nq, nk](Node& self) {
                   Tensor dt(bias_t->value.shape()), dh(bias_h->value.shape()), dw(bias_w->value.shape());
                   for (int64_t e = 0; e < static_cast<int64_t>(nq) * nk; ++e) {
                     const Real gr = self.grad.at(e);
                     dt.at(it[static_cast<size_t>(e)]) += gr;
                     dh.at(ih[static_cast<size_t>(e)]) += gr;
                     dw.at(iw[static_cast<size_t>(e)]) += gr;
                   }
                   bias_t->accumulate(dt);
                   bias_h->accumulate(dh);
                   bias_w->accumulate(dw);
                 });
}

// ---- non-graph helpers --------------------------------------------------------

Tensor tensor_clamp01(const Tensor& x) {
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.at(i) = std::clamp(x.at(i), 0.0, 1.0);
  return out;
}

Tensor softmax_tensor(const Tensor& logits) {
  LVT_CHECK(logits.ndim() >= 1, ShapeError, "softmax_tensor: empty shape");
  const int64_t k = logits.dim(logits.ndim() - 1);
  const int64_t rows = logits.numel() / k;
  Tensor out(logits.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = r * k;
    Real mx = logits.at(base);
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(base + j));
    Real s = 0;
    for (int64_t j = 0; j < k; ++j) {
      const Real e = std::exp(logits.at(base + j) - mx);
      out.at(base + j) = e;
      s += e;
    }
    for (int64_t j = 0; j < k; ++j) out.at(base + j) /= s;
  }
  return out;
}

}  // namespace lvt
