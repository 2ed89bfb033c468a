#pragma once

#include <cstdint>
#include <vector>

#include "lvt/graph.hpp"

namespace lvt {

enum class Padding { Valid, Same, CausalMask };

// ---- elementwise / linear algebra -----------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real c);
Var add_bias(const Var& x, const Var& b);  // x [..., d] + b [d]
Var relu(const Var& x);
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var reshape(const Var& x, Shape s);
Var stop_gradient(const Var& x);

// weights is a plain tensor (not differentiated): returns sum(x * weights).
Var dot_const(const Var& x, const Tensor& weights);

// 2-D matrix product with optional transposes; shapes checked.
Var matmul(const Var& a, const Var& b, bool ta = false, bool tb = false);

Var slice_cols(const Var& x, int c0, int c1);          // x [n,d] -> [n,c1-c0]
Var concat_cols(const std::vector<Var>& xs);           // [n,d_i] -> [n, sum d_i]
Var tile_rows(const Var& x, int m);                    // x [1,n] -> [m,n]

// table [V,d], indices into rows -> [n,d]; backward scatter-adds.
Var embedding_lookup(const Var& table, const std::vector<int>& indices);

// ---- normalization / probability -------------------------------------------

Var softmax(const Var& x, int axis);
// logits [n,k]; visible is a row-major n*k byte mask. Rows with no visible
// entry produce all zeros (a query with empty context contributes nothing).
Var masked_softmax(const Var& logits, const std::vector<uint8_t>& visible);
// per-row negative log-likelihood of targets under softmax(logits): [n]
Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets);
Var cross_entropy(const Var& logits_row, int target);  // scalar, logits [K]
Var layer_norm(const Var& x, const Var& gain, const Var& bias);  // x [n,d]

// ---- convolution ------------------------------------------------------------

// x [N,H,W,Cin], kernel [kh,kw,Cin,Cout]. CausalMask uses Same geometry with
// kernel taps at or after the raster-order center forced to zero.
Var conv2d(const Var& x, const Var& kernel, int stride, Padding padding);

// Adjoint of conv2d(..., stride, Same) mapping [N,h,w,Cout] back to
// [N,out_h,out_w,Cin]; out extents default to h*stride x w*stride.
Var conv2d_transpose(const Var& y, const Var& kernel, int stride,
                     int out_h = -1, int out_w = -1);

// relative-position bias matrix for one head: out[q,k] =
// bt[clip(tk-tq)] + bh[clip(yk-yq)] + bw[clip(xk-xq)], indices shifted by R.
struct GridPos {
  int t, y, x;
};
Var relative_bias_matrix(const Var& bias_t, const Var& bias_h, const Var& bias_w,
                         const std::vector<GridPos>& qpos, const std::vector<GridPos>& kpos);

// ---- non-graph helpers ------------------------------------------------------

Tensor tensor_clamp01(const Tensor& x);
Tensor softmax_tensor(const Tensor& logits);  // last-axis, plain values

}  // namespace lvt
