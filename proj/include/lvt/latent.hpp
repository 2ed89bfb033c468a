#pragma once

#include <cstdint>
#include <vector>

#include "lvt/error.hpp"

namespace lvt {

// Discrete latent video: T x h x w x n_c codebook indices in [0,K).
struct LatentGrid {
  int T = 0, h = 0, w = 0, n_c = 0;
  int K = 0;
  std::vector<int32_t> codes;

  LatentGrid() = default;
  LatentGrid(int T_, int h_, int w_, int nc_, int K_, int32_t fill = 0)
      : T(T_), h(h_), w(w_), n_c(nc_), K(K_),
        codes(static_cast<size_t>(T_) * h_ * w_ * nc_, fill) {}

  int64_t flat(int t, int y, int x, int c) const {
    return ((static_cast<int64_t>(t) * h + y) * w + x) * n_c + c;
  }
  int32_t& at(int t, int y, int x, int c) { return codes[static_cast<size_t>(flat(t, y, x, c))]; }
  int32_t at(int t, int y, int x, int c) const {
    return codes[static_cast<size_t>(flat(t, y, x, c))];
  }
  int64_t positions() const { return static_cast<int64_t>(T) * h * w; }

  void check_valid() const {
    LVT_CHECK(static_cast<int64_t>(codes.size()) == positions() * n_c, DataError,
              "latent grid: payload size mismatch");
    for (int32_t c : codes)
      LVT_CHECK(0 <= c && c < K, DataError, "latent grid: index out of [0,K)");
  }
};

}  // namespace lvt
