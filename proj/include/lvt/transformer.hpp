#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lvt/latent.hpp"
#include "lvt/param_store.hpp"
#include "lvt/subscale.hpp"

namespace lvt {

enum class AttentionVariant { QueryKeyRelative, KeyRelative, RelativeOnly };

AttentionVariant attention_variant_from_string(const std::string& s);
std::string to_string(AttentionVariant v);

struct TransformerConfig {
  int d_model = 128;
  int heads = 4;  // M
  int encoder_layers = 2;
  int decoder_layers = 4;
  int ff_width = 256;
  AttentionVariant variant = AttentionVariant::QueryKeyRelative;
  int K = 64;   // codebook size; embeddings carry K+1 rows (padding token K)
  int n_c = 2;
  int r_t = 8, r_h = 8, r_w = 8;  // relative offset clipping radii
  GridExtents extents;            // latent grid the model operates on
  SubscaleFactor factor;

  int head_width() const { return d_model / heads; }
  int pad_token() const { return K; }
  void validate() const;
};

// One multi-head attention application. xq [nq,d], xk [nk,d]; `visible` is a
// row-major nq x nk mask; empty rows yield a zero contribution. The variant
// chooses the attention-weight form; value/output projections are shared.
Var attention_block(const ParamGetter& P, const std::string& prefix, AttentionVariant variant,
                    int heads, const Var& xq, const Var& xk, const std::vector<GridPos>& qpos,
                    const std::vector<GridPos>& kpos, const std::vector<uint8_t>& visible);

// Encoder-decoder transformer over latent grids. The decoder runs two
// streams with shared weights: a context stream carrying fully-embedded
// slice positions (mask includes self) and a prediction stream whose inputs
// hold only the channels sampled so far (strict mask).
class LatentTransformer {
 public:
  LatentTransformer(TransformerConfig cfg, uint64_t seed);

  const TransformerConfig& config() const { return cfg_; }
  const SubscalePlan& plan() const { return plan_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int64_t param_count() const { return params_.total_params(); }
  ParamGetter frozen() const;

  // representation of already generated slices; positions outside the visible
  // set enter as the padding token -> output [T*h*w, d_model]
  Var encode_context_graph(const ParamGetter& P, const LatentGrid& grid, int slice_id,
                           int t0) const;

  // per-layer normalized context-stream activations, reused by every channel pass
  struct KeyStream {
    std::vector<Var> normed;  // LN1(K_l) for each decoder layer
  };
  KeyStream key_stream_graph(const ParamGetter& P, const LatentGrid& grid, int slice_id,
                             const Var& enc_out, int t0) const;

  // logits over K for channel `channel` at every slice position: [slice_size, K]
  Var channel_logits_graph(const ParamGetter& P, const LatentGrid& grid, int slice_id,
                           int channel, const Var& enc_out, const KeyStream& keys, int t0) const;

  // next-symbol logits with full recomputation (the correctness baseline)
  Tensor next_logits(const LatentGrid& grid, int rank, int channel, int t0) const;

  // teacher-forced negative log-likelihood summed over the predicted symbols
  // of one slice; second element is the symbol count
  std::pair<Var, int> slice_nll_graph(const ParamGetter& P, const LatentGrid& grid, int slice_id,
                                      int t0) const;

  // mean nll in nats per predicted symbol across all slices and grids
  Real nll_loss_value(const std::vector<LatentGrid>& grids, int t0) const;

 private:
  void init_params(uint64_t seed);
  void create_attention_params(const std::string& prefix, bool query_key, Rng& rng);
  Var input_embedding(const ParamGetter& P, const std::vector<GridPos>& positions,
                      const std::vector<std::vector<int>>& channel_codes, int prefix_channels,
                      int chan_id) const;
  Var ff_block(const ParamGetter& P, const std::string& prefix, const Var& x) const;
  void check_grid(const LatentGrid& grid) const;

  TransformerConfig cfg_;
  SubscalePlan plan_;
  ParamStore params_;
};

}  // namespace lvt
