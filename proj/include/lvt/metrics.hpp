#pragma once

#include <string>
#include <vector>

#include "lvt/latent.hpp"
#include "lvt/tensor.hpp"

namespace lvt {

// nats per symbol -> bits per latent dimension
Real bits_per_dim(Real nll_nats_mean);

// mean squared difference over all T*H*W*C entries
Real reconstruction_mse(const Tensor& video, const Tensor& reconstruction);

struct UsageStats {
  std::vector<Real> histogram;   // length K, sums to 1
  std::vector<Real> cumulative;  // sorted-descending cumulative mass
  Real perplexity = 0;           // exp(entropy); in [1, K]
  int mass80 = 0;                // smallest prefix reaching 80% of the mass
};

// empirical code frequencies for one codebook across grids
UsageStats codebook_usage(const std::vector<const LatentGrid*>& grids, int codebook);

// T-1 binary masks (h x w x n_c) marking codes that differ between frames t, t+1
std::vector<uint8_t> code_change_mask(const LatentGrid& grid);

// frames t0..T-1 are copies of the last ground-truth frame
Tensor last_frame_baseline(const Tensor& priming, int T);

struct EvalReport {
  uint64_t config_digest = 0;
  Real mse = -1;            // codec reconstruction, mean over videos
  Real bits_per_dim = -1;   // negative when no generator was evaluated
  Real baseline_mse = -1;
  Real generation_mse = -1; // negative when generation was not run
  std::vector<UsageStats> usage;  // one per codebook
  int K = 0;
  std::string to_text() const;
  std::string to_json() const;
};

}  // namespace lvt
