#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "lvt/subscale.hpp"

using namespace lvt;

namespace {

// brute-force order straight from the definition: slices lexicographic by
// (a,b,c), raster scan within a slice
std::vector<GridPos> order_oracle(GridExtents e, SubscaleFactor f) {
  std::vector<GridPos> out;
  for (int a = 0; a < f.s_t; ++a)
    for (int b = 0; b < f.s_h; ++b)
      for (int c = 0; c < f.s_w; ++c)
        for (int t = 0; t < e.T; ++t)
          for (int y = 0; y < e.h; ++y)
            for (int x = 0; x < e.w; ++x)
              if (t % f.s_t == a && y % f.s_h == b && x % f.s_w == c) out.push_back({t, y, x});
  return out;
}

}  // namespace

TEST_CASE("factor (1,1,1) is plain raster order") {
  auto plan = build_plan({2, 2, 3}, {1, 1, 1});
  CHECK(plan.slice_count() == 1);
  int rank = 0;
  for (int t = 0; t < 2; ++t)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) CHECK(plan.rank_of(t, y, x) == rank++);
}

TEST_CASE("factor (T,1,1) generates frame by frame") {
  auto plan = build_plan({4, 2, 2}, {4, 1, 1});
  CHECK(plan.slice_count() == 4);
  for (int a = 0; a < 4; ++a) {
    const auto& slice = plan.slice_positions(a);
    REQUIRE(slice.size() == 4);
    for (const auto& p : slice) CHECK(p.t == a);
  }
}

TEST_CASE("plan matches the brute-force order oracle") {
  for (auto [e, f] : {std::pair<GridExtents, SubscaleFactor>{{2, 2, 2}, {2, 1, 1}},
                      {{4, 4, 4}, {2, 2, 2}},
                      {{4, 2, 6}, {2, 2, 3}}}) {
    auto plan = build_plan(e, f);
    auto ref = order_oracle(e, f);
    REQUIRE(static_cast<int>(ref.size()) == e.positions());
    for (int r = 0; r < static_cast<int>(ref.size()); ++r) {
      CHECK(plan.order()[r].t == ref[r].t);
      CHECK(plan.order()[r].y == ref[r].y);
      CHECK(plan.order()[r].x == ref[r].x);
      CHECK(plan.rank_of(ref[r].t, ref[r].y, ref[r].x) == r);
    }
  }
}

TEST_CASE("bijection and cover for every factor of a 4x4x4 grid") {
  const GridExtents e{4, 4, 4};
  for (int st : {1, 2, 4})
    for (int sh : {1, 2, 4})
      for (int sw : {1, 2, 4}) {
        auto plan = build_plan(e, {st, sh, sw});
        std::set<std::tuple<int, int, int>> seen;
        std::set<int> ranks;
        for (const auto& p : plan.order()) {
          seen.insert({p.t, p.y, p.x});
          ranks.insert(plan.rank_of(p.t, p.y, p.x));
        }
        CHECK(static_cast<int>(seen.size()) == 64);
        CHECK(*ranks.begin() == 0);
        CHECK(*ranks.rbegin() == 63);
        CHECK(static_cast<int>(ranks.size()) == 64);
        // slices cover, non-overlapping
        int total = 0;
        for (int s = 0; s < plan.slice_count(); ++s)
          total += static_cast<int>(plan.slice_positions(s).size());
        CHECK(total == 64);
      }
}

TEST_CASE("paper figure configuration: slice precedence for Z_(1,0,1)") {
  // (t,h,w)=(4,4,4), s=(2,2,2): the last pixel of slice (1,0,1) comes after
  // every position of slices (0,0,0),(0,0,1),(0,1,0),(0,1,1),(1,0,0)
  auto plan = build_plan({4, 4, 4}, {2, 2, 2});
  const int slice_101 = (1 * 2 + 0) * 2 + 1;
  const auto& s101 = plan.slice_positions(slice_101);
  const GridPos last = s101.back();
  const int last_rank = plan.rank_of(last.t, last.y, last.x);
  for (int s = 0; s < slice_101; ++s)
    for (const auto& p : plan.slice_positions(s)) CHECK(plan.rank_of(p.t, p.y, p.x) < last_rank);
  // and the slice order is exactly lexicographic over (a,b,c)
  int prev_max = -1;
  for (int s = 0; s <= slice_101; ++s) {
    int mn = 1 << 30, mx = -1;
    for (const auto& p : plan.slice_positions(s)) {
      mn = std::min(mn, plan.rank_of(p.t, p.y, p.x));
      mx = std::max(mx, plan.rank_of(p.t, p.y, p.x));
    }
    CHECK(mn == prev_max + 1);
    prev_max = mx;
  }
}

TEST_CASE("non-divisible extents are rejected naming the axis") {
  CHECK_THROWS_WITH_AS((void)build_plan({3, 4, 4}, {2, 1, 1}),
                       doctest::Contains("s_t=2 does not divide T=3"), ConfigError);
  CHECK_THROWS_WITH_AS((void)build_plan({4, 3, 4}, {1, 2, 1}),
                       doctest::Contains("s_h=2 does not divide h=3"), ConfigError);
  CHECK_THROWS_WITH_AS((void)build_plan({4, 4, 3}, {1, 1, 2}),
                       doctest::Contains("s_w=2 does not divide w=3"), ConfigError);
}

TEST_CASE("encoder visibility: earlier slices only") {
  auto plan = build_plan({4, 4, 4}, {2, 2, 2});
  SUBCASE("first slice sees nothing") {
    auto m = visible_context(plan, 0);
    for (int k = 0; k < m.n_k; ++k) CHECK_FALSE(m.sees(0, k));
  }
  SUBCASE("last slice sees all other slices") {
    const int last = plan.slice_count() - 1;
    auto m = visible_context(plan, last);
    int visible = 0;
    for (int k = 0; k < m.n_k; ++k) visible += m.sees(0, k);
    CHECK(visible == 64 - plan.slice_size());
    for (const auto& p : plan.slice_positions(last)) CHECK_FALSE(m.sees(0, plan.flat(p.t, p.y, p.x)));
  }
  SUBCASE("mid slice matches hand enumeration of 5 earlier slices") {
    const int slice_101 = 5;
    auto m = visible_context(plan, slice_101);
    for (int t = 0; t < 4; ++t)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          const bool expect = plan.slice_of(t, y, x) < slice_101;
          CHECK(m.sees(0, plan.flat(t, y, x)) == expect);
        }
  }
}

TEST_CASE("decoder mask is strictly lower-triangular in rank") {
  auto plan = build_plan({1, 2, 2}, {1, 1, 1});
  auto m = decoder_mask(plan, 0);
  REQUIRE(m.n_q == 4);
  for (int q = 0; q < 4; ++q) {
    int seen = 0;
    for (int k = 0; k < 4; ++k) {
      CHECK(m.sees(q, k) == (k < q));
      seen += m.sees(q, k);
    }
    CHECK(seen == q);  // rank-r pixel sees exactly r keys
  }
}

TEST_CASE("mask antisymmetry") {
  auto plan = build_plan({2, 2, 2}, {2, 1, 1});
  for (int s = 0; s < plan.slice_count(); ++s) {
    auto m = decoder_mask(plan, s);
    for (int q = 0; q < m.n_q; ++q)
      for (int k = 0; k < m.n_k; ++k)
        if (q != k && m.sees(q, k)) CHECK_FALSE(m.sees(k, q));
  }
}

TEST_CASE("priming positions visible regardless of rank") {
  // factor (2,2,2) on a 4x4x4 grid with one priming frame: slice 0 holds both
  // t=0 (priming) and t=2 positions
  auto plan = build_plan({4, 4, 4}, {2, 2, 2});
  const int t0 = 1;
  auto m = decoder_mask(plan, 0, t0);
  const auto& pos = plan.slice_positions(0);
  for (int q = 0; q < m.n_q; ++q)
    for (int k = 0; k < m.n_k; ++k) {
      const bool priming = pos[static_cast<size_t>(k)].t < t0;
      CHECK(m.sees(q, k) == (k < q || priming));
    }
  auto enc = visible_context(plan, 0, t0);
  for (int t = 0; t < 4; ++t)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(enc.sees(0, plan.flat(t, y, x)) == (t < t0));
}

TEST_CASE("plan serializes to ordered t y x lines") {
  auto plan = build_plan({2, 1, 2}, {2, 1, 1});
  CHECK(plan.to_text() == "0 0 0\n0 0 1\n1 0 0\n1 0 1\n");
}
