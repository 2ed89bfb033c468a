#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lvt/metrics.hpp"
#include "lvt/rng.hpp"

using namespace lvt;

TEST_CASE("bits per dim") {
  CHECK(bits_per_dim(std::log(512.0)) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(bits_per_dim(0.0) == 0.0);
  CHECK_THROWS_AS((void)bits_per_dim(-0.1), NumericError);
}

TEST_CASE("reconstruction mse") {
  Tensor a(Shape{2, 4, 4, 3}, 0.7);
  CHECK(reconstruction_mse(a, a) == 0.0);
  Tensor zeros(Shape{2, 4, 4, 3}, 0.0), ones(Shape{2, 4, 4, 3}, 1.0);
  CHECK(reconstruction_mse(zeros, ones) == doctest::Approx(1.0));
  Tensor other(Shape{1, 4, 4, 3});
  CHECK_THROWS_AS((void)reconstruction_mse(a, other), ShapeError);
}

TEST_CASE("codebook usage: degenerate and uniform cases") {
  SUBCASE("all indices equal -> one-hot histogram, mass80 = 1, perplexity = 1") {
    LatentGrid g(2, 2, 2, 1, 8, /*fill=*/3);
    auto st = codebook_usage({&g}, 0);
    CHECK(st.histogram[3] == doctest::Approx(1.0));
    CHECK(st.mass80 == 1);
    CHECK(st.perplexity == doctest::Approx(1.0));
  }
  SUBCASE("uniform over K=10 -> mass80 = 8, perplexity = 10") {
    LatentGrid g(1, 2, 5, 1, 10);
    for (int i = 0; i < 10; ++i) g.codes[static_cast<size_t>(i)] = i;
    auto st = codebook_usage({&g}, 0);
    CHECK(st.mass80 == 8);
    CHECK(st.perplexity == doctest::Approx(10.0).epsilon(1e-9));
    double sum = 0;
    for (double v : st.histogram) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("codebook usage matches a direct counting oracle") {
  Rng rng(3);
  LatentGrid g(3, 4, 4, 2, 16);
  for (auto& c : g.codes) c = static_cast<int32_t>(rng.uniform_int(0, 15));
  for (int j = 0; j < 2; ++j) {
    auto st = codebook_usage({&g}, j);
    std::vector<int64_t> counts(16, 0);
    int64_t total = 0;
    for (int t = 0; t < 3; ++t)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          ++counts[static_cast<size_t>(g.at(t, y, x, j))];
          ++total;
        }
    for (int i = 0; i < 16; ++i)
      CHECK(st.histogram[static_cast<size_t>(i)] ==
            doctest::Approx(double(counts[static_cast<size_t>(i)]) / total).epsilon(1e-12));
    CHECK(st.perplexity >= 1.0);
    CHECK(st.perplexity <= 16.0);
  }
}

TEST_CASE("code change masks") {
  SUBCASE("static latent video is all zeros") {
    LatentGrid g(4, 2, 2, 2, 8, 5);
    auto masks = code_change_mask(g);
    for (uint8_t m : masks) CHECK(m == 0);
  }
  SUBCASE("two frames differing at one position produce a single 1") {
    LatentGrid g(2, 2, 2, 1, 8, 2);
    g.at(1, 1, 0, 0) = 3;
    auto masks = code_change_mask(g);
    int ones = 0;
    for (uint8_t m : masks) ones += m;
    CHECK(ones == 1);
    CHECK(masks[static_cast<size_t>(g.flat(0, 1, 0, 0))] == 1);
  }
  SUBCASE("random pair matches direct comparison") {
    Rng rng(5);
    LatentGrid g(2, 3, 3, 2, 4);
    for (auto& c : g.codes) c = static_cast<int32_t>(rng.uniform_int(0, 3));
    auto masks = code_change_mask(g);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x)
        for (int j = 0; j < 2; ++j)
          CHECK(masks[static_cast<size_t>(g.flat(0, y, x, j))] ==
                (g.at(0, y, x, j) != g.at(1, y, x, j) ? 1 : 0));
  }
  SUBCASE("single frame rejected") {
    LatentGrid g(1, 2, 2, 1, 4);
    CHECK_THROWS_AS((void)code_change_mask(g), DataError);
  }
}

TEST_CASE("last frame baseline") {
  Tensor priming(Shape{1, 2, 2, 3});
  for (int64_t i = 0; i < priming.numel(); ++i) priming.at(i) = 0.1 * double(i);
  Tensor out = last_frame_baseline(priming, 3);
  CHECK(out.shape() == Shape{3, 2, 2, 3});
  const int64_t fe = priming.numel();
  for (int t = 0; t < 3; ++t)
    for (int64_t e = 0; e < fe; ++e) CHECK(out.at(t * fe + e) == priming.at(e));
  // static video -> baseline reproduces it exactly
  Tensor stat(Shape{4, 2, 2, 3}, 0.25);
  Tensor prime2(Shape{2, 2, 2, 3}, 0.25);
  CHECK(reconstruction_mse(stat, last_frame_baseline(prime2, 4)) == 0.0);
}

TEST_CASE("eval report renders text and json") {
  EvalReport rep;
  rep.config_digest = 42;
  rep.mse = 0.5;
  rep.bits_per_dim = 3.0;
  rep.K = 4;
  UsageStats u;
  u.histogram = {0.25, 0.25, 0.25, 0.25};
  u.perplexity = 4.0;
  u.mass80 = 4;
  rep.usage.push_back(u);
  const std::string text = rep.to_text();
  CHECK(text.find("mse=0.5") != std::string::npos);
  CHECK(text.find("codebook0.perplexity=4") != std::string::npos);
  const std::string json = rep.to_json();
  CHECK(json.find("\"mass80\": 4") != std::string::npos);
}
