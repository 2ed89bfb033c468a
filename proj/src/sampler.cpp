#include "lvt/sampler.hpp"

#include <cmath>

namespace lvt {

void SamplerConfig::validate(int total_frames) const {
  LVT_CHECK(temperature > 0.0, ConfigError, "sampler: temperature must be positive");
  LVT_CHECK(1 <= t0 && t0 < total_frames, ConfigError,
            "sampler: need 1 <= t0 < T, got t0=" + std::to_string(t0) + ", T=" +
                std::to_string(total_frames));
}

int sample_symbol(const Tensor& logits, Real temperature, Rng& rng) {
  LVT_CHECK(temperature > 0.0, ConfigError, "sample_symbol: temperature must be positive");
  const int K = static_cast<int>(logits.numel());
  LVT_CHECK(K > 0, ShapeError, "sample_symbol: empty logits");
  Real mx = -std::numeric_limits<Real>::infinity();
  for (int i = 0; i < K; ++i) {
    LVT_CHECK(!std::isnan(logits.at(i)), NumericError, "sample_symbol: NaN logit");
    mx = std::max(mx, logits.at(i));
  }
  LVT_CHECK(std::isfinite(mx), NumericError, "sample_symbol: all logits are -inf");
  std::vector<Real> p(static_cast<size_t>(K));
  Real z = 0;
  for (int i = 0; i < K; ++i) {
    p[static_cast<size_t>(i)] = std::exp((logits.at(i) - mx) / temperature);
    z += p[static_cast<size_t>(i)];
  }
  const Real u = rng.uniform() * z;
  Real acc = 0;
  for (int i = 0; i < K; ++i) {
    acc += p[static_cast<size_t>(i)];
    if (u < acc) return i;
  }
  return K - 1;
}

LatentGrid generate_latents(LatentGrid grid, const LatentTransformer& model,
                            const SamplerConfig& cfg, InferenceMode mode,
                            std::vector<SampleEvent>* events) {
  const SubscalePlan& plan = model.plan();
  const TransformerConfig& mc = model.config();
  cfg.validate(mc.extents.T);
  Rng rng(cfg.seed);
  ParamGetter P = model.frozen();

  for (int slice_id = 0; slice_id < plan.slice_count(); ++slice_id) {
    const auto& spos = plan.slice_positions(slice_id);
    Var enc;
    if (mode == InferenceMode::Cached) enc = model.encode_context_graph(P, grid, slice_id, cfg.t0);
    for (int r = 0; r < static_cast<int>(spos.size()); ++r) {
      const GridPos p = spos[static_cast<size_t>(r)];
      if (p.t < cfg.t0) continue;  // priming positions are given, never sampled
      const int rank = slice_id * plan.slice_size() + r;
      LatentTransformer::KeyStream ks;
      if (mode == InferenceMode::Cached)
        ks = model.key_stream_graph(P, grid, slice_id, enc, cfg.t0);
      for (int k = 0; k < mc.n_c; ++k) {
        Tensor logits;
        if (mode == InferenceMode::Cached) {
          Var rows = model.channel_logits_graph(P, grid, slice_id, k, enc, ks, cfg.t0);
          logits = Tensor(Shape{mc.K});
          for (int j = 0; j < mc.K; ++j)
            logits.at(j) = rows->value.at(static_cast<int64_t>(r) * mc.K + j);
        } else {
          logits = model.next_logits(grid, rank, k, cfg.t0);
        }
        const int symbol = sample_symbol(logits, cfg.temperature, rng);
        grid.at(p.t, p.y, p.x, k) = symbol;  // replace the padding with the output
        if (events) events->push_back({rank, k});
      }
    }
  }
  return grid;
}

GenerateResult generate(const Tensor& priming, const FrameCodec& codec,
                        const LatentTransformer& model, const SamplerConfig& cfg,
                        InferenceMode mode) {
  const TransformerConfig& mc = model.config();
  const CodecConfig& cc = codec.config();
  cfg.validate(mc.extents.T);
  LVT_CHECK(priming.ndim() == 4 && priming.dim(0) == cfg.t0, ShapeError,
            "generate: priming video must hold exactly t0 frames");
  LVT_CHECK(cc.latent_h() == mc.extents.h && cc.latent_w() == mc.extents.w &&
                cc.n_c == mc.n_c && cc.K == mc.K,
            ConfigError, "generate: codec and transformer latent geometries disagree");

  LatentGrid primed = codec.encode_video(priming);
  LatentGrid grid(mc.extents.T, mc.extents.h, mc.extents.w, mc.n_c, mc.K,
                  /*fill=*/mc.pad_token());
  std::copy(primed.codes.begin(), primed.codes.end(), grid.codes.begin());

  GenerateResult out;
  out.grid = generate_latents(std::move(grid), model, cfg, mode, &out.events);
  out.video = codec.decode_video(out.grid);
  return out;
}

}  // namespace lvt
