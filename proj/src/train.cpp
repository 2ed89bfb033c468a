#include "lvt/train.hpp"

#include "lvt/ops.hpp"
#include "lvt/threading.hpp"

namespace lvt {

CodecStepResult codec_train_step(FrameCodec& codec, const std::vector<Tensor>& frames,
                                 const AdamConfig& adam) {
  const int B = static_cast<int>(frames.size());
  LVT_CHECK(B > 0, ConfigError, "codec_train_step: empty batch");
  const CodecConfig& cfg = codec.config();

  struct PerFrame {
    GradMap grads;
    Real loss = 0;
    Real mse = 0;
    std::vector<int32_t> indices;
    Tensor ze;
  };
  std::vector<PerFrame> results(static_cast<size_t>(B));

  parallel_for(B, [&](int i) {
    Tape tape(codec.params());
    ParamGetter P = [&tape](const std::string& name) { return tape.param(name); };
    CodecLossParts parts = codec.loss_graph(P, frames[static_cast<size_t>(i)]);
    backward(parts.loss);
    auto& r = results[static_cast<size_t>(i)];
    r.grads = tape.collect_grads();
    r.loss = parts.loss->value.item();
    r.indices = std::move(parts.indices);
    r.ze = parts.z_e->value;
    Real se = 0;
    const Tensor& rec = parts.reconstruction->value;
    const Tensor& frame = frames[static_cast<size_t>(i)];
    for (int64_t e = 0; e < rec.numel(); ++e) {
      const Real d = frame.at(e) - rec.at(e);
      se += d * d;
    }
    r.mse = se / static_cast<Real>(rec.numel());
  });

  // fixed-order reduction keeps steps bitwise reproducible for any LVT_THREADS
  GradMap total = std::move(results[0].grads);
  for (int i = 1; i < B; ++i) {
    for (auto& [name, g] : total) {
      const Tensor& other = results[static_cast<size_t>(i)].grads.at(name);
      for (int64_t e = 0; e < g.numel(); ++e) g.at(e) += other.at(e);
    }
  }

  CodecStepResult out;
  for (const auto& r : results) {
    out.loss += r.loss / B;
    out.mse += r.mse / B;
  }
  out.stepped = adam_step(codec.params(), total, adam);
  if (out.stepped) {
    EmaAccumulator acc(cfg.n_c, cfg.K, cfg.slice_width());
    for (const auto& r : results) acc.add(r.ze, r.indices, cfg.n_c, cfg.slice_width());
    codec.codebook().apply_ema(acc.counts, acc.sums, cfg.ema_decay, cfg.ema_epsilon);
  }
  return out;
}

LvtStepResult lvt_train_step(LatentTransformer& model, const std::vector<const LatentGrid*>& grids,
                             const std::vector<int>& slice_ids, int t0, const AdamConfig& adam) {
  const int B = static_cast<int>(grids.size());
  LVT_CHECK(B > 0 && slice_ids.size() == grids.size(), ConfigError,
            "lvt_train_step: batch and slice lists must match");
  struct PerItem {
    GradMap grads;
    Real nll_sum = 0;
    int symbols = 0;
  };
  std::vector<PerItem> results(static_cast<size_t>(B));
  parallel_for(B, [&](int i) {
    Tape tape(model.params());
    ParamGetter P = [&tape](const std::string& name) { return tape.param(name); };
    auto [loss, count] = model.slice_nll_graph(P, *grids[static_cast<size_t>(i)],
                                               slice_ids[static_cast<size_t>(i)], t0);
    LVT_CHECK(count > 0, ConfigError, "lvt_train_step: slice has no predicted symbols");
    Var mean = scale(loss, 1.0 / count);
    backward(mean);
    auto& r = results[static_cast<size_t>(i)];
    r.grads = tape.collect_grads();
    r.nll_sum = loss->value.item();
    r.symbols = count;
  });
  GradMap total = std::move(results[0].grads);
  for (int i = 1; i < B; ++i)
    for (auto& [name, g] : total) {
      const Tensor& other = results[static_cast<size_t>(i)].grads.at(name);
      for (int64_t e = 0; e < g.numel(); ++e) g.at(e) += other.at(e);
    }
  LvtStepResult out;
  Real sum = 0;
  int symbols = 0;
  for (const auto& r : results) {
    sum += r.nll_sum;
    symbols += r.symbols;
  }
  out.nll_mean = sum / symbols;
  out.stepped = adam_step(model.params(), total, adam);
  return out;
}

Real codec_eval_mse(const FrameCodec& codec, const std::vector<Tensor>& frames) {
  LVT_CHECK(!frames.empty(), ConfigError, "codec_eval_mse: no frames");
  std::vector<Real> per(frames.size());
  parallel_for(static_cast<int>(frames.size()), [&](int i) {
    const Tensor& frame = frames[static_cast<size_t>(i)];
    Tensor ze = codec.encode_frame(frame);
    Tensor rec = tensor_clamp01(codec.decode_frame(codec.dequantize(codec.quantize(ze))));
    Real se = 0;
    for (int64_t e = 0; e < rec.numel(); ++e) {
      const Real d = frame.at(e) - rec.at(e);
      se += d * d;
    }
    per[static_cast<size_t>(i)] = se / static_cast<Real>(rec.numel());
  });
  Real total = 0;
  for (Real v : per) total += v;
  return total / static_cast<Real>(per.size());
}

}  // namespace lvt
