#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvt/error.hpp"
#include "lvt/ops.hpp"

namespace lvt {

struct GridExtents {
  int T = 0, h = 0, w = 0;
  int positions() const { return T * h * w; }
};

struct SubscaleFactor {
  int s_t = 1, s_h = 1, s_w = 1;
  int slices() const { return s_t * s_h * s_w; }
};

// Total generation order over a T x h x w grid: slices in lexicographic
// (a,b,c) order, raster scan inside each slice. Slice (a,b,c) holds the
// positions { (a + i*s_t, b + j*s_h, c + k*s_w) }.
class SubscalePlan {
 public:
  SubscalePlan() = default;

  GridExtents extents() const { return extents_; }
  SubscaleFactor factor() const { return factor_; }
  int slice_count() const { return factor_.slices(); }
  int slice_size() const { return extents_.positions() / factor_.slices(); }

  int slice_of(int t, int y, int x) const {
    return (t % factor_.s_t) * factor_.s_h * factor_.s_w + (y % factor_.s_h) * factor_.s_w +
           (x % factor_.s_w);
  }
  // rank in the total order pi (0 .. T*h*w-1)
  int rank_of(int t, int y, int x) const {
    return rank_[flat(t, y, x)];
  }
  // positions of one slice in raster order
  const std::vector<GridPos>& slice_positions(int slice_id) const {
    return slices_.at(static_cast<size_t>(slice_id));
  }
  // all grid positions sorted by rank
  const std::vector<GridPos>& order() const { return order_; }
  // all grid positions in raster (t,y,x) order, matching flat indexing
  const std::vector<GridPos>& raster_order() const { return raster_; }

  int flat(int t, int y, int x) const { return (t * extents_.h + y) * extents_.w + x; }

  // one "t y x" line per rank, for test fixtures
  std::string to_text() const;

  friend SubscalePlan build_plan(GridExtents extents, SubscaleFactor factor);

 private:
  GridExtents extents_;
  SubscaleFactor factor_;
  std::vector<int> rank_;
  std::vector<GridPos> order_;
  std::vector<GridPos> raster_;
  std::vector<std::vector<GridPos>> slices_;
};

SubscalePlan build_plan(GridExtents extents, SubscaleFactor factor);

// Visibility sets; `visible` is row-major n_q x n_k.
struct CausalMaskSpec {
  int n_q = 0, n_k = 0;
  std::vector<uint8_t> visible;
  bool sees(int q, int k) const { return visible[static_cast<size_t>(q) * n_k + k] != 0; }
};

// Encoder-side visibility over the whole grid (keys indexed by flat (t,y,x)):
// positions of slices strictly before slice_id, plus priming frames t < t0.
// n_q == 1: the set is shared by every query.
CausalMaskSpec visible_context(const SubscalePlan& plan, int slice_id, int t0 = 0);

// Decoder-side within-slice mask for the prediction stream: query at raster
// rank r sees keys with rank < r, plus priming positions anywhere in the slice.
CausalMaskSpec decoder_mask(const SubscalePlan& plan, int slice_id, int t0 = 0);

// Within-slice mask for the context stream: rank r sees ranks <= r plus priming.
CausalMaskSpec decoder_key_mask(const SubscalePlan& plan, int slice_id, int t0 = 0);

}  // namespace lvt
