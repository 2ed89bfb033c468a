#pragma once

#include <vector>

#include "lvt/codec.hpp"
#include "lvt/rng.hpp"
#include "lvt/transformer.hpp"

namespace lvt {

struct SamplerConfig {
  Real temperature = 1.0;
  uint64_t seed = 0;
  int t0 = 1;  // priming frame count
  void validate(int total_frames) const;
};

struct SampleEvent {
  int rank;
  int channel;
};

// categorical draw from softmax(logits / temperature)
int sample_symbol(const Tensor& logits, Real temperature, Rng& rng);

enum class InferenceMode {
  Naive,   // full re-evaluation per symbol, the correctness baseline
  Cached,  // encoder reused per slice, context stream per position; bitwise
           // identical to Naive by construction (and by test)
};

struct GenerateResult {
  Tensor video;      // [T,H,W,3], first t0 frames are decode(encode(priming))
  LatentGrid grid;   // the full sampled latent grid
  std::vector<SampleEvent> events;  // sampling order, for plan-compliance checks
};

// Autoregressive generation: encode the priming frames, walk the plan slice by
// slice / pixel by pixel / channel by channel, then decode to pixels.
GenerateResult generate(const Tensor& priming, const FrameCodec& codec,
                        const LatentTransformer& model, const SamplerConfig& cfg,
                        InferenceMode mode = InferenceMode::Cached);

// latent-space walk only (no pixel decode); priming rows come pre-filled
LatentGrid generate_latents(LatentGrid grid, const LatentTransformer& model,
                            const SamplerConfig& cfg, InferenceMode mode,
                            std::vector<SampleEvent>* events = nullptr);

}  // namespace lvt
