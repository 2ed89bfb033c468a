#include "lvt/codec.hpp"

#include <cmath>

namespace lvt {

void CodecConfig::validate() const {
  LVT_CHECK(K >= 1 && D >= 1 && n_c >= 1, ConfigError, "codec: K, D, n_c must be positive");
  LVT_CHECK(D % n_c == 0, ConfigError,
            "codec: D=" + std::to_string(D) + " not divisible by n_c=" + std::to_string(n_c));
  int d = downsample;
  while (d > 1 && d % 2 == 0) d /= 2;
  LVT_CHECK(d == 1 && downsample >= 2, ConfigError, "codec: downsample must be a power of two >= 2");
  LVT_CHECK(H % downsample == 0 && W % downsample == 0, ConfigError,
            "codec: downsample=" + std::to_string(downsample) + " must divide H=" +
                std::to_string(H) + " and W=" + std::to_string(W));
  LVT_CHECK(residual_blocks >= 0, ConfigError, "codec: residual_blocks must be >= 0");
  LVT_CHECK(hidden >= 1, ConfigError, "codec: hidden width must be positive");
  LVT_CHECK(ema_decay >= 0.0 && ema_decay < 1.0, ConfigError, "codec: ema_decay in [0,1)");
  LVT_CHECK(ema_epsilon > 0.0, ConfigError, "codec: ema_epsilon must be positive");
}

// ---- Codebook ------------------------------------------------------------

Codebook::Codebook(int n_c, int K, int width, Rng& rng) : K_(K), width_(width) {
  for (int j = 0; j < n_c; ++j) {
    rows_.push_back(normal_init(Shape{K, width}, 0.02, rng));
    count_.emplace_back(Shape{K});
    // EMA sums start at the initial rows so early updates stay near them
    Tensor s = rows_.back().clone();
    sum_.push_back(std::move(s));
  }
}

int Codebook::nearest(int j, const Real* vec) const {
  const Tensor& table = rows_[static_cast<size_t>(j)];
  int best = 0;
  Real best_d = std::numeric_limits<Real>::infinity();
  for (int i = 0; i < K_; ++i) {
    const Real* row = table.data() + static_cast<int64_t>(i) * width_;
    Real d = 0;
    for (int c = 0; c < width_; ++c) {
      const Real diff = vec[c] - row[c];
      d += diff * diff;
    }
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = i;
    }
  }
  return best;
}

void Codebook::apply_ema(const std::vector<Tensor>& counts, const std::vector<Tensor>& sums,
                         Real decay, Real epsilon) {
  for (int j = 0; j < tables(); ++j) {
    Tensor& N = count_[static_cast<size_t>(j)];
    Tensor& m = sum_[static_cast<size_t>(j)];
    Tensor& rows = rows_[static_cast<size_t>(j)];
    const Tensor& c = counts[static_cast<size_t>(j)];
    const Tensor& s = sums[static_cast<size_t>(j)];
    for (int i = 0; i < K_; ++i) N.at(i) = decay * N.at(i) + (1.0 - decay) * c.at(i);
    for (int64_t e = 0; e < m.numel(); ++e) m.at(e) = decay * m.at(e) + (1.0 - decay) * s.at(e);
    Real total = 0;
    for (int i = 0; i < K_; ++i) total += N.at(i);
    if (total <= 0) continue;  // nothing assigned yet, keep rows
    for (int i = 0; i < K_; ++i) {
      const Real smoothed = (N.at(i) + epsilon) / (total + K_ * epsilon) * total;
      const Real denom = std::max(smoothed, epsilon);
      for (int cidx = 0; cidx < width_; ++cidx)
        rows.at(static_cast<int64_t>(i) * width_ + cidx) =
            m.at(static_cast<int64_t>(i) * width_ + cidx) / denom;
    }
  }
}

EmaAccumulator::EmaAccumulator(int n_c, int K, int width) {
  for (int j = 0; j < n_c; ++j) {
    counts.emplace_back(Shape{K});
    sums.emplace_back(Shape{K, width});
  }
}

void EmaAccumulator::add(const Tensor& ze_rows, const std::vector<int32_t>& indices, int n_c,
                         int width) {
  const int64_t pixels = ze_rows.numel() / (static_cast<int64_t>(n_c) * width);
  for (int64_t p = 0; p < pixels; ++p) {
    for (int j = 0; j < n_c; ++j) {
      const int32_t idx = indices[static_cast<size_t>(p * n_c + j)];
      counts[static_cast<size_t>(j)].at(idx) += 1.0;
      const Real* src = ze_rows.data() + (p * n_c + j) * width;
      Real* dst = sums[static_cast<size_t>(j)].data() + static_cast<int64_t>(idx) * width;
      for (int c = 0; c < width; ++c) dst[c] += src[c];
    }
  }
}

// ---- FrameCodec -----------------------------------------------------------

FrameCodec::FrameCodec(CodecConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  init_params(seed);
}

void FrameCodec::init_params(uint64_t seed) {
  Rng rng(seed);
  const int S = cfg_.strided_layers();
  int ch = 3;
  for (int l = 0; l < S; ++l) {
    params_.create("enc.conv" + std::to_string(l) + ".k",
                   he_uniform(Shape{4, 4, ch, cfg_.hidden}, 4 * 4 * ch, rng));
    params_.create("enc.conv" + std::to_string(l) + ".b", Tensor(Shape{cfg_.hidden}));
    ch = cfg_.hidden;
  }
  params_.create("enc.proj.k", he_uniform(Shape{3, 3, ch, cfg_.D}, 3 * 3 * ch, rng));
  params_.create("enc.proj.b", Tensor(Shape{cfg_.D}));
  for (int r = 0; r < cfg_.residual_blocks; ++r) {
    for (const char* stack : {"enc", "dec"}) {
      const std::string base = std::string(stack) + ".res" + std::to_string(r);
      params_.create(base + ".c3.k", he_uniform(Shape{3, 3, cfg_.D, cfg_.D}, 9 * cfg_.D, rng));
      params_.create(base + ".c3.b", Tensor(Shape{cfg_.D}));
      params_.create(base + ".c1.k", he_uniform(Shape{1, 1, cfg_.D, cfg_.D}, cfg_.D, rng));
      params_.create(base + ".c1.b", Tensor(Shape{cfg_.D}));
    }
  }
  ch = cfg_.D;
  for (int l = 0; l < S; ++l) {
    const int out = (l + 1 == S) ? 3 : cfg_.hidden;
    // transposed conv kernels use conv layout [kh,kw,Cout,Cin]
    params_.create("dec.tconv" + std::to_string(l) + ".k",
                   he_uniform(Shape{4, 4, out, ch}, 4 * 4 * ch, rng));
    params_.create("dec.tconv" + std::to_string(l) + ".b", Tensor(Shape{out}));
    ch = out;
  }
  codebook_ = Codebook(cfg_.n_c, cfg_.K, cfg_.slice_width(), rng);
}

namespace {
Var residual_block(const ParamGetter& P, const Var& x, const std::string& base) {
  Var h = relu(x);
  h = add_bias(conv2d(h, P(base + ".c3.k"), 1, Padding::Same), P(base + ".c3.b"));
  h = relu(h);
  h = add_bias(conv2d(h, P(base + ".c1.k"), 1, Padding::Same), P(base + ".c1.b"));
  return add(x, h);
}
}  // namespace

Var FrameCodec::encode_graph(const ParamGetter& P, const Tensor& frame) const {
  LVT_CHECK((frame.shape() == Shape{cfg_.H, cfg_.W, 3} ||
             frame.shape() == Shape{1, cfg_.H, cfg_.W, 3}),
            ShapeError,
            "encode_frame: expected " + std::to_string(cfg_.H) + "x" + std::to_string(cfg_.W) +
                "x3 frame, got " + shape_str(frame.shape()));
  for (int64_t i = 0; i < frame.numel(); ++i)
    LVT_CHECK(frame.at(i) >= 0.0 && frame.at(i) <= 1.0, DataError,
              "encode_frame: pixel values must lie in [0,1]");
  Var h = make_constant(frame.reshaped(Shape{1, cfg_.H, cfg_.W, 3}));
  for (int l = 0; l < cfg_.strided_layers(); ++l) {
    const std::string base = "enc.conv" + std::to_string(l);
    h = add_bias(conv2d(h, P(base + ".k"), 2, Padding::Same), P(base + ".b"));
    h = relu(h);
  }
  h = add_bias(conv2d(h, P("enc.proj.k"), 1, Padding::Same), P("enc.proj.b"));
  for (int r = 0; r < cfg_.residual_blocks; ++r)
    h = residual_block(P, h, "enc.res" + std::to_string(r));
  return h;
}

Var FrameCodec::decode_graph(const ParamGetter& P, const Var& z_q) const {
  LVT_CHECK((z_q->value.shape() == Shape{1, cfg_.latent_h(), cfg_.latent_w(), cfg_.D}), ShapeError,
            "decode_frame: expected [1," + std::to_string(cfg_.latent_h()) + "," +
                std::to_string(cfg_.latent_w()) + "," + std::to_string(cfg_.D) + "], got " +
                shape_str(z_q->value.shape()));
  Var h = z_q;
  for (int r = 0; r < cfg_.residual_blocks; ++r)
    h = residual_block(P, h, "dec.res" + std::to_string(r));
  const int S = cfg_.strided_layers();
  int cur_h = cfg_.latent_h(), cur_w = cfg_.latent_w();
  for (int l = 0; l < S; ++l) {
    h = relu(h);
    const std::string base = "dec.tconv" + std::to_string(l);
    cur_h *= 2;
    cur_w *= 2;
    h = add_bias(conv2d_transpose(h, P(base + ".k"), 2, cur_h, cur_w), P(base + ".b"));
  }
  return h;
}

std::vector<int32_t> FrameCodec::quantize(const Tensor& ze) const {
  const int hw = cfg_.latent_h() * cfg_.latent_w();
  LVT_CHECK(ze.numel() == static_cast<int64_t>(hw) * cfg_.D, ShapeError,
            "quantize: activations shape " + shape_str(ze.shape()));
  const int width = cfg_.slice_width();
  std::vector<int32_t> indices(static_cast<size_t>(hw) * cfg_.n_c);
  for (int p = 0; p < hw; ++p)
    for (int j = 0; j < cfg_.n_c; ++j)
      indices[static_cast<size_t>(p) * cfg_.n_c + j] =
          codebook_.nearest(j, ze.data() + (static_cast<int64_t>(p) * cfg_.n_c + j) * width);
  return indices;
}

Tensor FrameCodec::dequantize(const std::vector<int32_t>& indices) const {
  const int hw = cfg_.latent_h() * cfg_.latent_w();
  LVT_CHECK(static_cast<int>(indices.size()) == hw * cfg_.n_c, ShapeError,
            "dequantize: expected " + std::to_string(hw * cfg_.n_c) + " indices");
  const int width = cfg_.slice_width();
  Tensor out(Shape{1, cfg_.latent_h(), cfg_.latent_w(), cfg_.D});
  for (int p = 0; p < hw; ++p) {
    for (int j = 0; j < cfg_.n_c; ++j) {
      const int32_t idx = indices[static_cast<size_t>(p) * cfg_.n_c + j];
      LVT_CHECK(0 <= idx && idx < cfg_.K, DataError,
                "dequantize: index " + std::to_string(idx) + " out of [0," + std::to_string(cfg_.K) + ")");
      const Real* row = codebook_.rows(j).data() + static_cast<int64_t>(idx) * width;
      Real* dst = out.data() + (static_cast<int64_t>(p) * cfg_.n_c + j) * width;
      std::copy(row, row + width, dst);
    }
  }
  return out;
}

CodecLossParts FrameCodec::loss_graph(const ParamGetter& P, const Tensor& frame) const {
  CodecLossParts parts;
  parts.z_e = encode_graph(P, frame);
  parts.indices = quantize(parts.z_e->value);
  Tensor lookup = dequantize(parts.indices);

  // straight-through: z_q = z_e + sg[lookup - z_e]
  Var offset = make_constant([&] {
    Tensor t(lookup.shape());
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = lookup.at(i) - parts.z_e->value.at(i);
    return t;
  }());
  Var z_q = add(parts.z_e, offset);
  parts.reconstruction = decode_graph(P, z_q);

  Var target = make_constant(frame.reshaped(Shape{1, cfg_.H, cfg_.W, 3}));
  Var rec_diff = sub(target, parts.reconstruction);
  Var rec_loss = sum_all(mul(rec_diff, rec_diff));

  Var commit_diff = sub(parts.z_e, make_constant(lookup));  // sg[e]
  Var commit = sum_all(mul(commit_diff, commit_diff));

  parts.loss = add(rec_loss, scale(commit, cfg_.commitment));
  LVT_CHECK(std::isfinite(parts.loss->value.item()), NumericError,
            "codec_loss: non-finite loss, step aborted");
  return parts;
}

ParamGetter FrameCodec::frozen() const {
  const ParamStore* store = &params_;
  return [store](const std::string& name) { return make_constant(store->value(name)); };
}

Tensor FrameCodec::encode_frame(const Tensor& frame) const {
  return encode_graph(frozen(), frame)->value;
}

Tensor FrameCodec::decode_frame(const Tensor& z_q) const {
  return decode_graph(frozen(), make_constant(z_q))->value;
}

LatentGrid FrameCodec::encode_video(const Tensor& video) const {
  LVT_CHECK(video.ndim() == 4 && video.dim(1) == cfg_.H && video.dim(2) == cfg_.W &&
                video.dim(3) == 3,
            ShapeError, "encode_video: expected [T," + std::to_string(cfg_.H) + "," +
                            std::to_string(cfg_.W) + ",3], got " + shape_str(video.shape()));
  const int T = video.dim(0);
  LatentGrid grid(T, cfg_.latent_h(), cfg_.latent_w(), cfg_.n_c, cfg_.K);
  const int64_t frame_elems = static_cast<int64_t>(cfg_.H) * cfg_.W * 3;
  for (int t = 0; t < T; ++t) {
    Tensor frame(Shape{cfg_.H, cfg_.W, 3});
    std::copy(video.data() + t * frame_elems, video.data() + (t + 1) * frame_elems, frame.data());
    try {
      Tensor ze = encode_frame(frame);
      std::vector<int32_t> idx = quantize(ze);
      std::copy(idx.begin(), idx.end(), grid.codes.begin() + grid.flat(t, 0, 0, 0));
    } catch (const Error& e) {
      throw DataError("encode_video: frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return grid;
}

Tensor FrameCodec::decode_video(const LatentGrid& grid) const {
  LVT_CHECK(grid.h == cfg_.latent_h() && grid.w == cfg_.latent_w() && grid.n_c == cfg_.n_c,
            ShapeError, "decode_video: latent extents mismatch");
  Tensor video(Shape{grid.T, cfg_.H, cfg_.W, 3});
  const int64_t frame_elems = static_cast<int64_t>(cfg_.H) * cfg_.W * 3;
  const int hw = cfg_.latent_h() * cfg_.latent_w();
  for (int t = 0; t < grid.T; ++t) {
    std::vector<int32_t> idx(grid.codes.begin() + grid.flat(t, 0, 0, 0),
                             grid.codes.begin() + grid.flat(t, 0, 0, 0) + hw * cfg_.n_c);
    try {
      Tensor frame = tensor_clamp01(decode_frame(dequantize(idx)));
      std::copy(frame.data(), frame.data() + frame_elems, video.data() + t * frame_elems);
    } catch (const Error& e) {
      throw DataError("decode_video: frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return video;
}

}  // namespace lvt
