#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lvt/ops.hpp"
#include "lvt/param_store.hpp"
#include "test_util.hpp"

using namespace lvt;
using namespace lvt::testing;

namespace {

// independent nested-loop convolution, same-padding aware
Tensor conv_oracle(const Tensor& x, const Tensor& k, int stride, Padding pad) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const int kh = k.dim(0), kw = k.dim(1), Co = k.dim(3);
  int oh, ow, ph = 0, pw = 0;
  if (pad == Padding::Valid) {
    oh = (H - kh) / stride + 1;
    ow = (W - kw) / stride + 1;
  } else {
    oh = (H + stride - 1) / stride;
    ow = (W + stride - 1) / stride;
    ph = std::max((oh - 1) * stride + kh - H, 0) / 2;
    pw = std::max((ow - 1) * stride + kw - W, 0) / 2;
  }
  Tensor out(Shape{N, oh, ow, Co});
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j)
        for (int co = 0; co < Co; ++co) {
          double acc = 0;
          for (int u = 0; u < kh; ++u)
            for (int v = 0; v < kw; ++v)
              for (int ci = 0; ci < Ci; ++ci) {
                const int y = i * stride - ph + u, xx = j * stride - pw + v;
                if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                const bool masked =
                    pad == Padding::CausalMask && (u > kh / 2 || (u == kh / 2 && v >= kw / 2));
                if (masked) continue;
                acc += x.at(((int64_t(n) * H + y) * W + xx) * Ci + ci) *
                       k.at(((int64_t(u) * kw + v) * Ci + ci) * Co + co);
              }
          out.at(((int64_t(n) * oh + i) * ow + j) * Co + co) = acc;
        }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a.at(i) * b.at(i);
  return s;
}

}  // namespace

TEST_CASE("conv2d constant field") {
  Tensor x(Shape{1, 4, 4, 1}, 1.0);
  Tensor k(Shape{2, 2, 1, 1}, 1.0);
  Var out = conv2d(make_constant(x), make_constant(k), 2, Padding::Valid);
  CHECK(out->value.shape() == Shape{1, 2, 2, 1});
  for (int64_t i = 0; i < 4; ++i) CHECK(out->value.at(i) == doctest::Approx(4.0));
}

TEST_CASE("conv2d encoder shape contract 64x64 -> 16x16") {
  Rng rng(5);
  Tensor x = random_tensor(Shape{1, 64, 64, 3}, rng, 0.0, 1.0);
  Tensor k1 = random_tensor(Shape{4, 4, 3, 8}, rng);
  Tensor k2 = random_tensor(Shape{4, 4, 8, 8}, rng);
  Tensor k3 = random_tensor(Shape{3, 3, 8, 8}, rng);
  Var h1 = conv2d(make_constant(x), make_constant(k1), 2, Padding::Same);
  Var h2 = conv2d(h1, make_constant(k2), 2, Padding::Same);
  Var h3 = conv2d(h2, make_constant(k3), 1, Padding::Same);
  CHECK(h3->value.shape() == Shape{1, 16, 16, 8});
}

TEST_CASE("conv2d matches nested-loop oracle") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor(Shape{1, 5, 5, 2}, rng);
    Tensor k = random_tensor(Shape{3, 3, 2, 3}, rng);
    for (Padding pad : {Padding::Valid, Padding::Same, Padding::CausalMask}) {
      for (int stride : {1, 2}) {
        Var out = conv2d(make_constant(x), make_constant(k), stride, pad);
        Tensor ref = conv_oracle(x, k, stride, pad);
        REQUIRE(out->value.shape() == ref.shape());
        for (int64_t i = 0; i < ref.numel(); ++i)
          CHECK(std::abs(out->value.at(i) - ref.at(i)) < 1e-12);
      }
    }
  }
}

TEST_CASE("conv2d rejects channel mismatch naming both shapes") {
  Tensor x(Shape{1, 4, 4, 2});
  Tensor k(Shape{2, 2, 3, 1});
  try {
    conv2d(make_constant(x), make_constant(k), 1, Padding::Valid);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,4,4,2]") != std::string::npos);
    CHECK(msg.find("[2,2,3,1]") != std::string::npos);
  }
}

TEST_CASE("causal-mask conv ignores current and later taps") {
  // center tap masked: an isolated impulse cannot influence its own output pixel
  Rng rng(11);
  Tensor k = random_tensor(Shape{3, 3, 1, 1}, rng);
  Tensor x(Shape{1, 5, 5, 1});
  x.at(int64_t(2) * 5 + 2) = 1.0;  // impulse at (2,2)
  Var out = conv2d(make_constant(x), make_constant(k), 1, Padding::CausalMask);
  // raster positions at or before (2,2) see nothing of the impulse
  for (int y = 0; y < 5; ++y)
    for (int xx = 0; xx < 5; ++xx)
      if (y < 2 || (y == 2 && xx <= 2)) CHECK(out->value.at(int64_t(y) * 5 + xx) == 0.0);
}

TEST_CASE("conv2d_transpose shape and identity") {
  Rng rng(3);
  Tensor y = random_tensor(Shape{1, 2, 2, 1}, rng);
  Tensor k = random_tensor(Shape{4, 4, 1, 1}, rng);
  Var out = conv2d_transpose(make_constant(y), make_constant(k), 2);
  CHECK(out->value.shape() == Shape{1, 4, 4, 1});

  Tensor id(Shape{3, 3, 1, 1});
  id.at(4) = 1.0;  // centered 1
  Tensor v = random_tensor(Shape{1, 4, 4, 1}, rng);
  Var same = conv2d_transpose(make_constant(v), make_constant(id), 1, 4, 4);
  for (int64_t i = 0; i < v.numel(); ++i) CHECK(same->value.at(i) == doctest::Approx(v.at(i)));
}

TEST_CASE("conv adjoint identity <conv(x),y> == <x, convT(y)>") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const int stride = (seed % 2) ? 2 : 1;
    Tensor x = random_tensor(Shape{1, 4, 4, 2}, rng);
    Tensor k = random_tensor(Shape{3, 3, 2, 3}, rng);
    Var cx = conv2d(make_constant(x), make_constant(k), stride, Padding::Same);
    Tensor y = random_tensor(cx->value.shape(), rng);
    Var ty = conv2d_transpose(make_constant(y), make_constant(k), stride, 4, 4);
    CHECK(std::abs(dot(cx->value, y) - dot(x, ty->value)) < 1e-10);
  }
}

TEST_CASE("core op values") {
  Var r = relu(make_constant(Tensor(Shape{3}, {-1.0, 0.0, 2.0})));
  CHECK(r->value.at(0) == 0.0);
  CHECK(r->value.at(1) == 0.0);
  CHECK(r->value.at(2) == 2.0);

  Var s = softmax(make_constant(Tensor(Shape{4}, {0.0, 0.0, 0.0, 0.0})), 0);
  for (int i = 0; i < 4; ++i) CHECK(s->value.at(i) == doctest::Approx(0.25));

  Tensor logits(Shape{512}, 0.7);  // all equal
  Var ce = cross_entropy(make_constant(logits), 123);
  CHECK(ce->value.item() == doctest::Approx(std::log(512.0)).epsilon(1e-9));
  CHECK(ce->value.item() == doctest::Approx(6.2383).epsilon(1e-4));
}

TEST_CASE("softmax rows sum to one on random input") {
  Rng rng(9);
  Tensor x = random_tensor(Shape{6, 7}, rng, -3.0, 3.0);
  Var p = softmax(make_leaf(x, false), 1);
  for (int r = 0; r < 6; ++r) {
    double s = 0;
    for (int j = 0; j < 7; ++j) s += p->value.at(int64_t(r) * 7 + j);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("backward quadratic and stop-gradient") {
  Var w = make_leaf(Tensor(Shape{2}, {1.0, 2.0}), true);
  Var loss = sum_all(mul(w, w));
  backward(loss);
  CHECK(w->grad.at(0) == doctest::Approx(2.0));
  CHECK(w->grad.at(1) == doctest::Approx(4.0));

  Var w2 = make_leaf(Tensor(Shape{1}, {3.0}), true);
  Var loss2 = sum_all(mul(stop_gradient(w2), w2));
  backward(loss2);
  CHECK(w2->grad.at(0) == doctest::Approx(3.0));
}

TEST_CASE("finite differences across the operator set") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    Tensor proj;  // fresh per use

    // elementwise chain: relu(a*b + a - b) summed
    {
      std::vector<Tensor> in{random_tensor_offset(Shape{3, 4}, rng),
                             random_tensor_offset(Shape{3, 4}, rng)};
      auto rep = fd_check(in, [](std::vector<Var>& v) {
        return sum_all(relu(add(mul(v[0], v[1]), sub(v[0], v[1]))));
      });
      CHECK(rep.max_err < 1e-4);
    }
    // matmul, all transpose flags
    {
      const bool ta = seed % 2, tb = (seed / 2) % 2;
      Tensor a = random_tensor(ta ? Shape{3, 2} : Shape{2, 3}, rng);
      Tensor b = random_tensor(tb ? Shape{4, 3} : Shape{3, 4}, rng);
      proj = random_tensor(Shape{2, 4}, rng);
      auto rep = fd_check({a, b}, [&](std::vector<Var>& v) {
        return dot_const(matmul(v[0], v[1], ta, tb), proj);
      });
      CHECK(rep.max_err < 1e-4);
    }
    // conv2d all paddings + strides
    {
      Tensor x = random_tensor(Shape{2, 4, 4, 2}, rng);
      Tensor k = random_tensor(Shape{3, 3, 2, 2}, rng);
      const Padding pad = seed % 3 == 0   ? Padding::Valid
                          : seed % 3 == 1 ? Padding::Same
                                          : Padding::CausalMask;
      const int stride = (seed % 2) + 1;
      Var probe = conv2d(make_constant(x), make_constant(k), stride, pad);
      proj = random_tensor(probe->value.shape(), rng);
      auto rep = fd_check({x, k}, [&](std::vector<Var>& v) {
        return dot_const(conv2d(v[0], v[1], stride, pad), proj);
      });
      CHECK(rep.max_err < 1e-4);
    }
    // conv2d_transpose
    {
      Tensor y = random_tensor(Shape{1, 2, 2, 2}, rng);
      Tensor k = random_tensor(Shape{4, 4, 3, 2}, rng);
      proj = random_tensor(Shape{1, 4, 4, 3}, rng);
      auto rep = fd_check({y, k}, [&](std::vector<Var>& v) {
        return dot_const(conv2d_transpose(v[0], v[1], 2), proj);
      });
      CHECK(rep.max_err < 1e-4);
    }
    // softmax / cross-entropy / layer_norm
    {
      Tensor x = random_tensor(Shape{3, 5}, rng);
      proj = random_tensor(Shape{3, 5}, rng);
      auto rep = fd_check({x}, [&](std::vector<Var>& v) {
        return dot_const(softmax(v[0], 1), proj);
      });
      CHECK(rep.max_err < 1e-4);

      Tensor logits = random_tensor(Shape{4, 6}, rng);
      std::vector<int> targets{0, 3, 5, 2};
      Tensor ones(Shape{4}, 1.0);
      rep = fd_check({logits}, [&](std::vector<Var>& v) {
        return dot_const(cross_entropy_rows(v[0], targets), ones);
      });
      CHECK(rep.max_err < 1e-4);

      Tensor xn = random_tensor(Shape{3, 6}, rng);
      Tensor g = random_tensor(Shape{6}, rng, 0.5, 1.5);
      Tensor b = random_tensor(Shape{6}, rng);
      proj = random_tensor(Shape{3, 6}, rng);
      rep = fd_check({xn, g, b}, [&](std::vector<Var>& v) {
        return dot_const(layer_norm(v[0], v[1], v[2]), proj);
      });
      CHECK(rep.max_err < 1e-4);
    }
    // masked softmax with an empty row
    {
      Tensor logits = random_tensor(Shape{3, 4}, rng);
      std::vector<uint8_t> vis(12, 0);
      for (int j = 0; j < 4; ++j) vis[4 + j] = 1;  // row 1 fully visible
      vis[8] = vis[10] = 1;                        // row 2 partial; row 0 empty
      proj = random_tensor(Shape{3, 4}, rng);
      auto rep = fd_check({logits}, [&](std::vector<Var>& v) {
        return dot_const(masked_softmax(v[0], vis), proj);
      });
      CHECK(rep.max_err < 1e-4);
    }
    // embedding + bias-table + slicing ops
    {
      Tensor table = random_tensor(Shape{5, 3}, rng);
      std::vector<int> idx{4, 0, 2, 2};
      proj = random_tensor(Shape{4, 3}, rng);
      auto rep = fd_check({table}, [&](std::vector<Var>& v) {
        return dot_const(embedding_lookup(v[0], idx), proj);
      });
      CHECK(rep.max_err < 1e-4);

      Tensor bt = random_tensor(Shape{5}, rng), bh = random_tensor(Shape{5}, rng),
             bw = random_tensor(Shape{5}, rng);
      std::vector<GridPos> qp{{0, 0, 0}, {1, 2, 3}}, kp{{0, 1, 0}, {4, 0, 2}, {1, 1, 1}};
      proj = random_tensor(Shape{2, 3}, rng);
      rep = fd_check({bt, bh, bw}, [&](std::vector<Var>& v) {
        return dot_const(relative_bias_matrix(v[0], v[1], v[2], qp, kp), proj);
      });
      CHECK(rep.max_err < 1e-4);

      Tensor x = random_tensor(Shape{3, 6}, rng);
      proj = random_tensor(Shape{3, 7}, rng);
      rep = fd_check({x}, [&](std::vector<Var>& v) {
        Var left = slice_cols(v[0], 0, 2);
        Var right = slice_cols(v[0], 1, 6);
        return dot_const(concat_cols({left, right}), proj);
      });
      CHECK(rep.max_err < 1e-4);

      Tensor row = random_tensor(Shape{1, 4}, rng);
      proj = random_tensor(Shape{3, 4}, rng);
      rep = fd_check({row}, [&](std::vector<Var>& v) {
        return dot_const(tile_rows(v[0], 3), proj);
      });
      CHECK(rep.max_err < 1e-4);

      Tensor xb = random_tensor(Shape{4, 3}, rng);
      Tensor bias = random_tensor(Shape{3}, rng);
      proj = random_tensor(Shape{4, 3}, rng);
      rep = fd_check({xb, bias}, [&](std::vector<Var>& v) {
        return dot_const(add_bias(v[0], v[1]), proj);
      });
      CHECK(rep.max_err < 1e-4);
    }
  }
}

TEST_CASE("adam first step moves by lr against gradient sign") {
  ParamStore store;
  store.create("w", Tensor(Shape{1}, {0.0}));
  GradMap g;
  g["w"] = Tensor(Shape{1}, {1.0});
  AdamConfig cfg;
  cfg.lr = 0.1;
  CHECK(adam_step(store, g, cfg));
  CHECK(std::abs(store.value("w").at(0) - (-0.1)) < 1e-7);
  CHECK(store.step() == 1);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  ParamStore store;
  store.create("w", Tensor(Shape{2}, {0.5, -0.25}));
  GradMap g;
  g["w"] = Tensor(Shape{2});
  AdamConfig cfg;
  CHECK(adam_step(store, g, cfg));
  CHECK(store.value("w").at(0) == 0.5);
  CHECK(store.value("w").at(1) == -0.25);
}

TEST_CASE("adam non-finite gradient skips the step") {
  ParamStore store;
  store.create("w", Tensor(Shape{1}, {0.0}));
  GradMap g;
  g["w"] = Tensor(Shape{1}, {std::nan("")});
  AdamConfig cfg;
  CHECK_FALSE(adam_step(store, g, cfg));
  CHECK(store.step() == 0);
  CHECK(store.value("w").at(0) == 0.0);
}

TEST_CASE("adam converges on (w-3)^2") {
  ParamStore store;
  store.create("w", Tensor(Shape{1}, {0.0}));
  AdamConfig cfg;
  cfg.lr = 0.1;
  for (int step = 0; step < 200; ++step) {
    Tape tape(store);
    Var w = tape.param("w");
    Var diff = sub(w, make_constant(Tensor(Shape{1}, {3.0})));
    Var loss = sum_all(mul(diff, diff));
    backward(loss);
    adam_step(store, tape.collect_grads(), cfg);
  }
  CHECK(std::abs(store.value("w").at(0) - 3.0) < 0.05);
}

TEST_CASE("parameters off the graph get zero gradients and a warning") {
  ParamStore store;
  store.create("used", Tensor(Shape{1}, {1.0}));
  store.create("unused", Tensor(Shape{2}, {1.0, 1.0}));
  Tape tape(store);
  Var loss = sum_all(mul(tape.param("used"), tape.param("used")));
  backward(loss);
  std::vector<std::string> missing;
  GradMap g = tape.collect_grads(&missing);
  REQUIRE(missing.size() == 1);
  CHECK(missing[0] == "unused");
  CHECK(g["unused"].at(0) == 0.0);
  CHECK(g["used"].at(0) == doctest::Approx(2.0));
}

TEST_CASE("hundred training steps are bitwise deterministic") {
  auto run = [] {
    Rng rng(42);
    ParamStore store;
    store.create("w1", he_uniform(Shape{4, 8}, 4, rng));
    store.create("b1", Tensor(Shape{8}));
    store.create("w2", he_uniform(Shape{8, 1}, 8, rng));
    Tensor x = random_tensor(Shape{16, 4}, rng);
    Tensor target = random_tensor(Shape{16, 1}, rng);
    AdamConfig cfg;
    cfg.lr = 1e-2;
    std::vector<double> losses;
    for (int step = 0; step < 100; ++step) {
      Tape tape(store);
      Var h = relu(add_bias(matmul(make_constant(x), tape.param("w1")), tape.param("b1")));
      Var out = matmul(h, tape.param("w2"));
      Var diff = sub(out, make_constant(target));
      Var loss = sum_all(mul(diff, diff));
      backward(loss);
      losses.push_back(loss->value.item());
      adam_step(store, tape.collect_grads(), cfg);
    }
    return losses;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
