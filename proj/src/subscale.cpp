#include "lvt/subscale.hpp"

#include <sstream>

namespace lvt {

SubscalePlan build_plan(GridExtents extents, SubscaleFactor factor) {
  LVT_CHECK(extents.T > 0 && extents.h > 0 && extents.w > 0, ConfigError,
            "build_plan: extents must be positive");
  LVT_CHECK(factor.s_t >= 1 && factor.s_h >= 1 && factor.s_w >= 1, ConfigError,
            "build_plan: factor must be positive");
  LVT_CHECK(extents.T % factor.s_t == 0, ConfigError,
            "build_plan: s_t=" + std::to_string(factor.s_t) + " does not divide T=" +
                std::to_string(extents.T));
  LVT_CHECK(extents.h % factor.s_h == 0, ConfigError,
            "build_plan: s_h=" + std::to_string(factor.s_h) + " does not divide h=" +
                std::to_string(extents.h));
  LVT_CHECK(extents.w % factor.s_w == 0, ConfigError,
            "build_plan: s_w=" + std::to_string(factor.s_w) + " does not divide w=" +
                std::to_string(extents.w));

  SubscalePlan plan;
  plan.extents_ = extents;
  plan.factor_ = factor;
  plan.rank_.assign(static_cast<size_t>(extents.positions()), -1);
  plan.order_.reserve(static_cast<size_t>(extents.positions()));
  plan.slices_.resize(static_cast<size_t>(factor.slices()));

  plan.raster_.reserve(static_cast<size_t>(extents.positions()));
  for (int t = 0; t < extents.T; ++t)
    for (int y = 0; y < extents.h; ++y)
      for (int x = 0; x < extents.w; ++x) plan.raster_.push_back({t, y, x});

  int rank = 0;
  for (int a = 0; a < factor.s_t; ++a) {
    for (int b = 0; b < factor.s_h; ++b) {
      for (int c = 0; c < factor.s_w; ++c) {
        auto& slice = plan.slices_[static_cast<size_t>((a * factor.s_h + b) * factor.s_w + c)];
        for (int i = 0; i < extents.T / factor.s_t; ++i) {
          for (int j = 0; j < extents.h / factor.s_h; ++j) {
            for (int k = 0; k < extents.w / factor.s_w; ++k) {
              const GridPos p{a + i * factor.s_t, b + j * factor.s_h, c + k * factor.s_w};
              slice.push_back(p);
              plan.rank_[static_cast<size_t>(plan.flat(p.t, p.y, p.x))] = rank;
              plan.order_.push_back(p);
              ++rank;
            }
          }
        }
      }
    }
  }
  return plan;
}

std::string SubscalePlan::to_text() const {
  std::ostringstream os;
  for (const auto& p : order_) os << p.t << " " << p.y << " " << p.x << "\n";
  return os.str();
}

CausalMaskSpec visible_context(const SubscalePlan& plan, int slice_id, int t0) {
  LVT_CHECK(0 <= slice_id && slice_id < plan.slice_count(), ConfigError,
            "visible_context: slice_id out of range");
  const GridExtents e = plan.extents();
  CausalMaskSpec m;
  m.n_q = 1;
  m.n_k = e.positions();
  m.visible.assign(static_cast<size_t>(m.n_k), 0);
  for (int t = 0; t < e.T; ++t)
    for (int y = 0; y < e.h; ++y)
      for (int x = 0; x < e.w; ++x)
        if (plan.slice_of(t, y, x) < slice_id || t < t0)
          m.visible[static_cast<size_t>(plan.flat(t, y, x))] = 1;
  return m;
}

namespace {
CausalMaskSpec within_slice_mask(const SubscalePlan& plan, int slice_id, int t0, bool include_self) {
  LVT_CHECK(0 <= slice_id && slice_id < plan.slice_count(), ConfigError,
            "decoder mask: slice_id out of range");
  const auto& pos = plan.slice_positions(slice_id);
  const int n = static_cast<int>(pos.size());
  CausalMaskSpec m;
  m.n_q = n;
  m.n_k = n;
  m.visible.assign(static_cast<size_t>(n) * n, 0);
  for (int q = 0; q < n; ++q) {
    for (int k = 0; k < n; ++k) {
      const bool priming = pos[static_cast<size_t>(k)].t < t0;
      const bool earlier = include_self ? (k <= q) : (k < q);
      if (earlier || priming) m.visible[static_cast<size_t>(q) * n + k] = 1;
    }
  }
  return m;
}
}  // namespace

CausalMaskSpec decoder_mask(const SubscalePlan& plan, int slice_id, int t0) {
  return within_slice_mask(plan, slice_id, t0, /*include_self=*/false);
}

CausalMaskSpec decoder_key_mask(const SubscalePlan& plan, int slice_id, int t0) {
  return within_slice_mask(plan, slice_id, t0, /*include_self=*/true);
}

}  // namespace lvt
