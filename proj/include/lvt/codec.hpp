#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lvt/latent.hpp"
#include "lvt/ops.hpp"
#include "lvt/param_store.hpp"

namespace lvt {

struct CodecConfig {
  int K = 64;           // codebook size
  int D = 64;           // embedding width before slicing
  int n_c = 2;          // codebooks (channel slices)
  int H = 32, W = 32;   // frame extents
  int downsample = 4;   // product of encoder strides; power of two
  int residual_blocks = 2;
  int hidden = 32;      // width of the strided conv stack
  Real ema_decay = 0.99;
  Real ema_epsilon = 1e-5;
  Real commitment = 1.0;

  int latent_h() const { return H / downsample; }
  int latent_w() const { return W / downsample; }
  int slice_width() const { return D / n_c; }
  int strided_layers() const {
    int n = 0;
    for (int d = downsample; d > 1; d /= 2) ++n;
    return n;
  }
  void validate() const;
};

// n_c tables of K rows x D/n_c columns, maintained by EMA instead of gradients.
class Codebook {
 public:
  Codebook() = default;
  Codebook(int n_c, int K, int width, Rng& rng);

  int tables() const { return static_cast<int>(rows_.size()); }
  int entries() const { return K_; }
  int width() const { return width_; }

  const Tensor& rows(int j) const { return rows_[static_cast<size_t>(j)]; }
  Tensor& rows(int j) { return rows_[static_cast<size_t>(j)]; }
  const Tensor& ema_count(int j) const { return count_[static_cast<size_t>(j)]; }
  Tensor& ema_count(int j) { return count_[static_cast<size_t>(j)]; }
  const Tensor& ema_sum(int j) const { return sum_[static_cast<size_t>(j)]; }
  Tensor& ema_sum(int j) { return sum_[static_cast<size_t>(j)]; }

  // nearest row by L2, ties to the lowest index
  int nearest(int j, const Real* vec) const;

  // One EMA step from batch assignment statistics:
  //   N_i <- g N_i + (1-g) count_i,  m_i <- g m_i + (1-g) sum_i,
  //   row_i <- m_i / max(laplace(N)_i, eps)
  void apply_ema(const std::vector<Tensor>& counts, const std::vector<Tensor>& sums,
                 Real decay, Real epsilon);

 private:
  int K_ = 0, width_ = 0;
  std::vector<Tensor> rows_, count_, sum_;
};

// accumulates quantization statistics over a batch for the EMA step
struct EmaAccumulator {
  std::vector<Tensor> counts;  // n_c of [K]
  std::vector<Tensor> sums;    // n_c of [K, width]
  EmaAccumulator(int n_c, int K, int width);
  void add(const Tensor& ze_rows, const std::vector<int32_t>& indices, int n_c, int width);
};

// input + conv1x1(relu(conv3x3(relu(input)))); parameters live under `base`
Var residual_block(const ParamGetter& P, const Var& x, const std::string& base);

struct CodecLossParts {
  Var loss;            // scalar: ||x - D(z_q)||^2 + commitment * ||z_e - sg[e]||^2
  Var reconstruction;  // [1,H,W,3], unclamped
  Var z_e;             // [1,h,w,D]
  std::vector<int32_t> indices;  // h*w*n_c assignments
};

// VQ-VAE frame autoencoder per the two-strided-conv architecture.
class FrameCodec {
 public:
  FrameCodec(CodecConfig cfg, uint64_t seed);

  const CodecConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }

  // graph builders; P supplies parameter nodes (trainable or frozen)
  Var encode_graph(const ParamGetter& P, const Tensor& frame) const;  // -> [1,h,w,D]
  Var decode_graph(const ParamGetter& P, const Var& z_q) const;       // -> [1,H,W,3]
  CodecLossParts loss_graph(const ParamGetter& P, const Tensor& frame) const;

  // value-only paths against the current parameters
  Tensor encode_frame(const Tensor& frame) const;  // pre-quantization activations
  std::vector<int32_t> quantize(const Tensor& ze) const;
  Tensor dequantize(const std::vector<int32_t>& indices) const;  // -> [1,h,w,D]
  Tensor decode_frame(const Tensor& z_q) const;                  // unclamped [1,H,W,3]

  LatentGrid encode_video(const Tensor& video) const;        // [T,H,W,3] -> grid
  Tensor decode_video(const LatentGrid& grid) const;         // clamped to [0,1]

  ParamGetter frozen() const;  // parameters as constants

 private:
  void init_params(uint64_t seed);
  CodecConfig cfg_;
  ParamStore params_;
  Codebook codebook_;
};

}  // namespace lvt
