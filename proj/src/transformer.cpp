#include "lvt/transformer.hpp"

#include <cmath>

#include "lvt/ops.hpp"

namespace lvt {

AttentionVariant attention_variant_from_string(const std::string& s) {
  if (s == "query_key_relative") return AttentionVariant::QueryKeyRelative;
  if (s == "key_relative") return AttentionVariant::KeyRelative;
  if (s == "relative_only") return AttentionVariant::RelativeOnly;
  throw ConfigError("unknown attention variant '" + s +
                    "' (expected query_key_relative|key_relative|relative_only)");
}

std::string to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::QueryKeyRelative: return "query_key_relative";
    case AttentionVariant::KeyRelative: return "key_relative";
    case AttentionVariant::RelativeOnly: return "relative_only";
  }
  return "?";
}

void TransformerConfig::validate() const {
  LVT_CHECK(d_model >= 1 && heads >= 1, ConfigError, "transformer: d_model and heads must be positive");
  LVT_CHECK(d_model % heads == 0, ConfigError,
            "transformer: d_model=" + std::to_string(d_model) + " not divisible by heads=" +
                std::to_string(heads));
  LVT_CHECK(encoder_layers >= 1 && decoder_layers >= 1, ConfigError,
            "transformer: need at least one encoder and one decoder layer");
  LVT_CHECK(ff_width >= 1, ConfigError, "transformer: ff_width must be positive");
  LVT_CHECK(K >= 2, ConfigError, "transformer: K must be at least 2");
  LVT_CHECK(n_c >= 1, ConfigError, "transformer: n_c must be positive");
  LVT_CHECK(r_t >= 1 && r_h >= 1 && r_w >= 1, ConfigError, "transformer: radii must be positive");
}

// ---- attention -------------------------------------------------------------

Var attention_block(const ParamGetter& P, const std::string& prefix, AttentionVariant variant,
                    int heads, const Var& xq, const Var& xk, const std::vector<GridPos>& qpos,
                    const std::vector<GridPos>& kpos, const std::vector<uint8_t>& visible) {
  const int nq = xq->value.dim(0), nk = xk->value.dim(0);
  const int d = xq->value.dim(1);
  LVT_CHECK(xk->value.dim(1) == d, ShapeError, "attention: query/key width mismatch");
  LVT_CHECK(static_cast<int>(qpos.size()) == nq && static_cast<int>(kpos.size()) == nk, ShapeError,
            "attention: position list sizes do not match inputs");
  LVT_CHECK(d % heads == 0, ShapeError, "attention: width not divisible by head count");
  const int dh = d / heads;

  Var wv = P(prefix + "wv");
  Var wq, wk, u;
  if (variant == AttentionVariant::QueryKeyRelative) {
    wq = P(prefix + "wq");
    wk = P(prefix + "wk");
  } else if (variant == AttentionVariant::KeyRelative) {
    wk = P(prefix + "wk");
    u = reshape(P(prefix + "u"), Shape{1, d});
  }

  std::vector<Var> ctx;
  ctx.reserve(static_cast<size_t>(heads));
  for (int m = 0; m < heads; ++m) {
    const int c0 = m * dh, c1 = (m + 1) * dh;
    Var v_m = matmul(xk, slice_cols(wv, c0, c1));
    Var bias = relative_bias_matrix(P(prefix + "bt" + std::to_string(m)),
                                    P(prefix + "bh" + std::to_string(m)),
                                    P(prefix + "bw" + std::to_string(m)), qpos, kpos);
    Var scores;
    if (variant == AttentionVariant::QueryKeyRelative) {
      Var q_m = matmul(xq, slice_cols(wq, c0, c1));
      Var k_m = matmul(xk, slice_cols(wk, c0, c1));
      scores = add(matmul(q_m, k_m, false, true), bias);
    } else if (variant == AttentionVariant::KeyRelative) {
      Var k_m = matmul(xk, slice_cols(wk, c0, c1));
      Var row = matmul(slice_cols(u, c0, c1), k_m, false, true);  // [1,nk]
      scores = add(tile_rows(row, nq), bias);
    } else {
      scores = bias;
    }
    Var weights = masked_softmax(scores, visible);
    ctx.push_back(matmul(weights, v_m));
  }
  return matmul(concat_cols(ctx), P(prefix + "wo"));
}

// ---- construction ----------------------------------------------------------

LatentTransformer::LatentTransformer(TransformerConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  plan_ = build_plan(cfg_.extents, cfg_.factor);
  init_params(seed);
}

void LatentTransformer::create_attention_params(const std::string& prefix, bool query_key,
                                                Rng& rng) {
  const int d = cfg_.d_model;
  const AttentionVariant v = query_key ? AttentionVariant::QueryKeyRelative : cfg_.variant;
  params_.create(prefix + "wv", he_uniform(Shape{d, d}, d, rng));
  params_.create(prefix + "wo", he_uniform(Shape{d, d}, d, rng));
  if (v == AttentionVariant::QueryKeyRelative) {
    params_.create(prefix + "wq", he_uniform(Shape{d, d}, d, rng));
    params_.create(prefix + "wk", he_uniform(Shape{d, d}, d, rng));
  } else if (v == AttentionVariant::KeyRelative) {
    params_.create(prefix + "wk", he_uniform(Shape{d, d}, d, rng));
    params_.create(prefix + "u", normal_init(Shape{d}, 0.02, rng));
  }
  for (int m = 0; m < cfg_.heads; ++m) {
    params_.create(prefix + "bt" + std::to_string(m),
                   normal_init(Shape{2 * cfg_.r_t + 1}, 0.02, rng));
    params_.create(prefix + "bh" + std::to_string(m),
                   normal_init(Shape{2 * cfg_.r_h + 1}, 0.02, rng));
    params_.create(prefix + "bw" + std::to_string(m),
                   normal_init(Shape{2 * cfg_.r_w + 1}, 0.02, rng));
  }
}

void LatentTransformer::init_params(uint64_t seed) {
  Rng rng(seed);
  const int d = cfg_.d_model;
  auto layer_norm_params = [&](const std::string& prefix) {
    params_.create(prefix + ".g", Tensor(Shape{d}, 1.0));
    params_.create(prefix + ".b", Tensor(Shape{d}));
  };

  for (int j = 0; j < cfg_.n_c; ++j)
    params_.create("emb.chan" + std::to_string(j), normal_init(Shape{cfg_.K + 1, d}, 0.02, rng));
  params_.create("emb.pos_t", normal_init(Shape{cfg_.extents.T, d}, 0.02, rng));
  params_.create("emb.pos_y", normal_init(Shape{cfg_.extents.h, d}, 0.02, rng));
  params_.create("emb.pos_x", normal_init(Shape{cfg_.extents.w, d}, 0.02, rng));
  params_.create("emb.slice", normal_init(Shape{cfg_.factor.slices(), d}, 0.02, rng));
  params_.create("emb.chan_id", normal_init(Shape{cfg_.n_c, d}, 0.02, rng));

  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l) + ".";
    layer_norm_params(p + "ln1");
    layer_norm_params(p + "ln2");
    create_attention_params(p + "self.", /*query_key=*/false, rng);
    params_.create(p + "ff1.w", he_uniform(Shape{d, cfg_.ff_width}, d, rng));
    params_.create(p + "ff1.b", Tensor(Shape{cfg_.ff_width}));
    params_.create(p + "ff2.w", he_uniform(Shape{cfg_.ff_width, d}, cfg_.ff_width, rng));
    params_.create(p + "ff2.b", Tensor(Shape{d}));
  }
  layer_norm_params("enc.final_ln");

  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l) + ".";
    layer_norm_params(p + "ln1");
    layer_norm_params(p + "ln2");
    layer_norm_params(p + "ln3");
    create_attention_params(p + "self.", /*query_key=*/false, rng);
    create_attention_params(p + "cross.", /*query_key=*/true, rng);
    params_.create(p + "ff1.w", he_uniform(Shape{d, cfg_.ff_width}, d, rng));
    params_.create(p + "ff1.b", Tensor(Shape{cfg_.ff_width}));
    params_.create(p + "ff2.w", he_uniform(Shape{cfg_.ff_width, d}, cfg_.ff_width, rng));
    params_.create(p + "ff2.b", Tensor(Shape{d}));
  }
  layer_norm_params("dec.final_ln");

  // zero-initialized heads keep the untrained model exactly uniform
  for (int k = 0; k < cfg_.n_c; ++k) {
    params_.create("head" + std::to_string(k) + ".w", Tensor(Shape{d, cfg_.K}));
    params_.create("head" + std::to_string(k) + ".b", Tensor(Shape{cfg_.K}));
  }
}

ParamGetter LatentTransformer::frozen() const {
  const ParamStore* store = &params_;
  return [store](const std::string& name) { return make_constant(store->value(name)); };
}

// ---- shared pieces ----------------------------------------------------------

Var LatentTransformer::ff_block(const ParamGetter& P, const std::string& prefix,
                                const Var& x) const {
  Var h = relu(add_bias(matmul(x, P(prefix + "ff1.w")), P(prefix + "ff1.b")));
  return add_bias(matmul(h, P(prefix + "ff2.w")), P(prefix + "ff2.b"));
}

Var LatentTransformer::input_embedding(const ParamGetter& P, const std::vector<GridPos>& positions,
                                       const std::vector<std::vector<int>>& channel_codes,
                                       int prefix_channels, int chan_id) const {
  const int n = static_cast<int>(positions.size());
  std::vector<int> ti(static_cast<size_t>(n)), yi(static_cast<size_t>(n)), xi(static_cast<size_t>(n)),
      si(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    const GridPos& p = positions[static_cast<size_t>(r)];
    ti[static_cast<size_t>(r)] = p.t;
    yi[static_cast<size_t>(r)] = p.y;
    xi[static_cast<size_t>(r)] = p.x;
    si[static_cast<size_t>(r)] = plan_.slice_of(p.t, p.y, p.x);
  }
  Var x = embedding_lookup(P("emb.pos_t"), ti);
  x = add(x, embedding_lookup(P("emb.pos_y"), yi));
  x = add(x, embedding_lookup(P("emb.pos_x"), xi));
  x = add(x, embedding_lookup(P("emb.slice"), si));
  for (int j = 0; j < prefix_channels; ++j)
    x = add(x, embedding_lookup(P("emb.chan" + std::to_string(j)), channel_codes[static_cast<size_t>(j)]));
  if (chan_id >= 0)
    x = add(x, tile_rows(embedding_lookup(P("emb.chan_id"), {chan_id}), n));
  return x;
}

void LatentTransformer::check_grid(const LatentGrid& grid) const {
  LVT_CHECK(grid.T == cfg_.extents.T && grid.h == cfg_.extents.h && grid.w == cfg_.extents.w,
            ShapeError, "latent grid extents do not match the model configuration");
  LVT_CHECK(grid.n_c == cfg_.n_c, ShapeError, "latent grid channel count mismatch");
  for (int32_t c : grid.codes)
    LVT_CHECK(0 <= c && c <= cfg_.K, DataError,
              "latent grid: code out of range (padding token " + std::to_string(cfg_.K) + " allowed)");
}

// ---- encoder ------------------------------------------------------------------

Var LatentTransformer::encode_context_graph(const ParamGetter& P, const LatentGrid& grid,
                                            int slice_id, int t0) const {
  check_grid(grid);
  const CausalMaskSpec vis = visible_context(plan_, slice_id, t0);
  const GridExtents e = cfg_.extents;
  const int n = e.positions();

  std::vector<GridPos> positions;
  positions.reserve(static_cast<size_t>(n));
  std::vector<std::vector<int>> codes(static_cast<size_t>(cfg_.n_c),
                                      std::vector<int>(static_cast<size_t>(n)));
  for (int t = 0; t < e.T; ++t)
    for (int y = 0; y < e.h; ++y)
      for (int x = 0; x < e.w; ++x) {
        const int f = plan_.flat(t, y, x);
        positions.push_back({t, y, x});
        for (int j = 0; j < cfg_.n_c; ++j)
          codes[static_cast<size_t>(j)][static_cast<size_t>(f)] =
              vis.sees(0, f) ? grid.at(t, y, x, j) : cfg_.pad_token();
      }

  Var x = input_embedding(P, positions, codes, cfg_.n_c, -1);
  const std::vector<uint8_t> full(static_cast<size_t>(n) * n, 1);
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l) + ".";
    Var normed = layer_norm(x, P(p + "ln1.g"), P(p + "ln1.b"));
    x = add(x, attention_block(P, p + "self.", cfg_.variant, cfg_.heads, normed, normed, positions,
                               positions, full));
    Var n2 = layer_norm(x, P(p + "ln2.g"), P(p + "ln2.b"));
    x = add(x, ff_block(P, p, n2));
  }
  return layer_norm(x, P("enc.final_ln.g"), P("enc.final_ln.b"));
}

// ---- decoder ------------------------------------------------------------------

LatentTransformer::KeyStream LatentTransformer::key_stream_graph(const ParamGetter& P,
                                                                 const LatentGrid& grid,
                                                                 int slice_id, const Var& enc_out,
                                                                 int t0) const {
  const auto& spos = plan_.slice_positions(slice_id);
  const int n = static_cast<int>(spos.size());
  std::vector<std::vector<int>> codes(static_cast<size_t>(cfg_.n_c),
                                      std::vector<int>(static_cast<size_t>(n)));
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < cfg_.n_c; ++j)
      codes[static_cast<size_t>(j)][static_cast<size_t>(r)] =
          grid.at(spos[static_cast<size_t>(r)].t, spos[static_cast<size_t>(r)].y,
                  spos[static_cast<size_t>(r)].x, j);

  Var x = input_embedding(P, spos, codes, cfg_.n_c, -1);
  const std::vector<uint8_t> kmask = decoder_key_mask(plan_, slice_id, t0).visible;
  const std::vector<uint8_t> cross(static_cast<size_t>(n) * cfg_.extents.positions(), 1);

  KeyStream ks;
  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l) + ".";
    Var normed = layer_norm(x, P(p + "ln1.g"), P(p + "ln1.b"));
    ks.normed.push_back(normed);
    x = add(x, attention_block(P, p + "self.", cfg_.variant, cfg_.heads, normed, normed, spos,
                               spos, kmask));
    Var n2 = layer_norm(x, P(p + "ln2.g"), P(p + "ln2.b"));
    x = add(x, attention_block(P, p + "cross.", AttentionVariant::QueryKeyRelative, cfg_.heads, n2,
                               enc_out, spos, plan_.raster_order(), cross));
    Var n3 = layer_norm(x, P(p + "ln3.g"), P(p + "ln3.b"));
    x = add(x, ff_block(P, p, n3));
  }
  return ks;
}

Var LatentTransformer::channel_logits_graph(const ParamGetter& P, const LatentGrid& grid,
                                            int slice_id, int channel, const Var& enc_out,
                                            const KeyStream& keys, int t0) const {
  LVT_CHECK(0 <= channel && channel < cfg_.n_c, ConfigError,
            "channel index " + std::to_string(channel) + " out of range");
  const auto& spos = plan_.slice_positions(slice_id);
  const int n = static_cast<int>(spos.size());
  std::vector<std::vector<int>> codes(static_cast<size_t>(channel),
                                      std::vector<int>(static_cast<size_t>(n)));
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < channel; ++j)
      codes[static_cast<size_t>(j)][static_cast<size_t>(r)] =
          grid.at(spos[static_cast<size_t>(r)].t, spos[static_cast<size_t>(r)].y,
                  spos[static_cast<size_t>(r)].x, j);

  Var x = input_embedding(P, spos, codes, channel, channel);
  const std::vector<uint8_t> qmask = decoder_mask(plan_, slice_id, t0).visible;
  const std::vector<uint8_t> cross(static_cast<size_t>(n) * cfg_.extents.positions(), 1);

  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l) + ".";
    Var normed = layer_norm(x, P(p + "ln1.g"), P(p + "ln1.b"));
    x = add(x, attention_block(P, p + "self.", cfg_.variant, cfg_.heads, normed,
                               keys.normed[static_cast<size_t>(l)], spos, spos, qmask));
    Var n2 = layer_norm(x, P(p + "ln2.g"), P(p + "ln2.b"));
    x = add(x, attention_block(P, p + "cross.", AttentionVariant::QueryKeyRelative, cfg_.heads, n2,
                               enc_out, spos, plan_.raster_order(), cross));
    Var n3 = layer_norm(x, P(p + "ln3.g"), P(p + "ln3.b"));
    x = add(x, ff_block(P, p, n3));
  }
  Var f = layer_norm(x, P("dec.final_ln.g"), P("dec.final_ln.b"));
  const std::string head = "head" + std::to_string(channel);
  return add_bias(matmul(f, P(head + ".w")), P(head + ".b"));
}

Tensor LatentTransformer::next_logits(const LatentGrid& grid, int rank, int channel,
                                      int t0) const {
  LVT_CHECK(0 <= rank && rank < cfg_.extents.positions(), ConfigError,
            "next_logits: rank " + std::to_string(rank) + " outside the plan");
  const int slice_id = rank / plan_.slice_size();
  const int within = rank % plan_.slice_size();
  LVT_CHECK(within < static_cast<int>(plan_.slice_positions(slice_id).size()), ConfigError,
            "next_logits: prefix longer than slice");
  ParamGetter P = frozen();
  Var enc = encode_context_graph(P, grid, slice_id, t0);
  KeyStream ks = key_stream_graph(P, grid, slice_id, enc, t0);
  Var logits = channel_logits_graph(P, grid, slice_id, channel, enc, ks, t0);
  Tensor row(Shape{cfg_.K});
  for (int j = 0; j < cfg_.K; ++j)
    row.at(j) = logits->value.at(static_cast<int64_t>(within) * cfg_.K + j);
  return row;
}

std::pair<Var, int> LatentTransformer::slice_nll_graph(const ParamGetter& P, const LatentGrid& grid,
                                                       int slice_id, int t0) const {
  Var enc = encode_context_graph(P, grid, slice_id, t0);
  KeyStream ks = key_stream_graph(P, grid, slice_id, enc, t0);
  const auto& spos = plan_.slice_positions(slice_id);
  const int n = static_cast<int>(spos.size());

  Var total;
  int count = 0;
  for (int k = 0; k < cfg_.n_c; ++k) {
    Var logits = channel_logits_graph(P, grid, slice_id, k, enc, ks, t0);
    std::vector<int> targets(static_cast<size_t>(n));
    Tensor weights(Shape{n});
    for (int r = 0; r < n; ++r) {
      const GridPos& p = spos[static_cast<size_t>(r)];
      const bool predicted = p.t >= t0;
      const int32_t code = grid.at(p.t, p.y, p.x, k);
      LVT_CHECK(!predicted || code < cfg_.K, DataError,
                "nll: predicted position holds the padding token");
      targets[static_cast<size_t>(r)] = predicted ? code : 0;
      weights.at(r) = predicted ? 1.0 : 0.0;
      if (predicted) ++count;
    }
    Var s = dot_const(cross_entropy_rows(logits, targets), weights);
    total = total ? add(total, s) : s;
  }
  return {total, count};
}

Real LatentTransformer::nll_loss_value(const std::vector<LatentGrid>& grids, int t0) const {
  LVT_CHECK(!grids.empty(), ConfigError, "nll_loss: no grids");
  ParamGetter P = frozen();
  Real sum = 0;
  int64_t count = 0;
  for (const auto& grid : grids) {
    for (int s = 0; s < plan_.slice_count(); ++s) {
      bool any = false;
      for (const auto& p : plan_.slice_positions(s))
        if (p.t >= t0) {
          any = true;
          break;
        }
      if (!any) continue;
      auto [loss, n] = slice_nll_graph(P, grid, s, t0);
      sum += loss->value.item();
      count += n;
    }
  }
  LVT_CHECK(count > 0, ConfigError, "nll_loss: nothing to predict (t0 covers the grid)");
  return sum / static_cast<Real>(count);
}

}  // namespace lvt
