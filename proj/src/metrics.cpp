#include "lvt/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lvt {

Real bits_per_dim(Real nll_nats_mean) {
  LVT_CHECK(nll_nats_mean >= 0.0, NumericError, "bits_per_dim: nll must be non-negative");
  return nll_nats_mean / std::log(2.0);
}

Real reconstruction_mse(const Tensor& video, const Tensor& reconstruction) {
  check_same_shape(video, reconstruction, "reconstruction_mse");
  Real se = 0;
  for (int64_t i = 0; i < video.numel(); ++i) {
    const Real d = video.at(i) - reconstruction.at(i);
    se += d * d;
  }
  return se / static_cast<Real>(video.numel());
}

UsageStats codebook_usage(const std::vector<const LatentGrid*>& grids, int codebook) {
  LVT_CHECK(!grids.empty(), DataError, "codebook_usage: no grids");
  const int K = grids[0]->K;
  UsageStats st;
  st.histogram.assign(static_cast<size_t>(K), 0.0);
  int64_t total = 0;
  for (const LatentGrid* g : grids) {
    LVT_CHECK(g->K == K, DataError, "codebook_usage: inconsistent K across grids");
    LVT_CHECK(0 <= codebook && codebook < g->n_c, DataError, "codebook_usage: codebook index");
    for (int64_t p = 0; p < g->positions(); ++p) {
      const int32_t c = g->codes[static_cast<size_t>(p * g->n_c + codebook)];
      LVT_CHECK(0 <= c && c < K, DataError, "codebook_usage: index out of range");
      st.histogram[static_cast<size_t>(c)] += 1.0;
      ++total;
    }
  }
  for (auto& v : st.histogram) v /= static_cast<Real>(total);

  std::vector<Real> sorted = st.histogram;
  std::sort(sorted.begin(), sorted.end(), std::greater<Real>());
  st.cumulative.resize(sorted.size());
  Real acc = 0;
  st.mass80 = K;
  for (size_t i = 0; i < sorted.size(); ++i) {
    acc += sorted[i];
    st.cumulative[i] = acc;
    if (st.mass80 == K && acc >= 0.8 - 1e-12) st.mass80 = static_cast<int>(i) + 1;
  }
  Real entropy = 0;
  for (Real p : st.histogram)
    if (p > 0) entropy -= p * std::log(p);
  st.perplexity = std::exp(entropy);
  return st;
}

std::vector<uint8_t> code_change_mask(const LatentGrid& grid) {
  LVT_CHECK(grid.T >= 2, DataError, "code_change_mask: need at least two frames");
  const int64_t per_frame = static_cast<int64_t>(grid.h) * grid.w * grid.n_c;
  std::vector<uint8_t> masks(static_cast<size_t>((grid.T - 1) * per_frame));
  for (int t = 0; t + 1 < grid.T; ++t)
    for (int64_t e = 0; e < per_frame; ++e)
      masks[static_cast<size_t>(t * per_frame + e)] =
          grid.codes[static_cast<size_t>(t * per_frame + e)] !=
          grid.codes[static_cast<size_t>((t + 1) * per_frame + e)];
  return masks;
}

Tensor last_frame_baseline(const Tensor& priming, int T) {
  LVT_CHECK(priming.ndim() == 4 && priming.dim(0) >= 1, ShapeError,
            "last_frame_baseline: priming must be [T0,H,W,C] with T0 >= 1");
  const int T0 = priming.dim(0);
  LVT_CHECK(T >= T0, ShapeError, "last_frame_baseline: T must be >= T0");
  Tensor out(Shape{T, priming.dim(1), priming.dim(2), priming.dim(3)});
  const int64_t fe = priming.numel() / T0;
  for (int t = 0; t < T; ++t) {
    const int src = std::min(t, T0 - 1);
    std::copy(priming.data() + src * fe, priming.data() + (src + 1) * fe, out.data() + t * fe);
  }
  return out;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(10);
  os << "config_digest=" << config_digest << "\n";
  os << "mse=" << mse << "\n";
  os << "bits_per_dim=" << bits_per_dim << "\n";
  os << "baseline_mse=" << baseline_mse << "\n";
  os << "generation_mse=" << generation_mse << "\n";
  os << "K=" << K << "\n";
  for (size_t j = 0; j < usage.size(); ++j) {
    os << "codebook" << j << ".perplexity=" << usage[j].perplexity << "\n";
    os << "codebook" << j << ".mass80=" << usage[j].mass80 << "\n";
    Real sum = 0;
    for (Real v : usage[j].histogram) sum += v;
    os << "codebook" << j << ".histogram_sum=" << sum << "\n";
  }
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["config_digest"] = config_digest;
  j["mse"] = mse;
  j["bits_per_dim"] = bits_per_dim;
  j["baseline_mse"] = baseline_mse;
  j["generation_mse"] = generation_mse;
  j["K"] = K;
  j["codebooks"] = nlohmann::json::array();
  for (const auto& u : usage) {
    nlohmann::json cb;
    cb["perplexity"] = u.perplexity;
    cb["mass80"] = u.mass80;
    cb["histogram"] = u.histogram;
    j["codebooks"].push_back(cb);
  }
  return j.dump(2);
}

}  // namespace lvt
