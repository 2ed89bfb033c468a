#pragma once

#include <vector>

#include "lvt/codec.hpp"
#include "lvt/transformer.hpp"
#include "lvt/param_store.hpp"

namespace lvt {

struct CodecStepResult {
  Real loss = 0;      // mean Eq-style loss over the batch
  Real mse = 0;       // mean per-pixel reconstruction error
  bool stepped = false;
};

// One optimizer step over a batch of frames: forward/backward per frame (in
// parallel), gradients summed in frame order, one Adam step, one EMA update.
CodecStepResult codec_train_step(FrameCodec& codec, const std::vector<Tensor>& frames,
                                 const AdamConfig& adam);

// Mean reconstruction MSE of decode(quantize(encode(frame))) over frames.
Real codec_eval_mse(const FrameCodec& codec, const std::vector<Tensor>& frames);

struct LvtStepResult {
  Real nll_mean = 0;  // nats per predicted symbol in this batch
  bool stepped = false;
};

// One optimizer step of teacher-forced training on (grid, slice) pairs.
LvtStepResult lvt_train_step(LatentTransformer& model, const std::vector<const LatentGrid*>& grids,
                             const std::vector<int>& slice_ids, int t0, const AdamConfig& adam);

}  // namespace lvt
