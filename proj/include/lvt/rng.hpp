#pragma once

#include <cstdint>
#include <random>

namespace lvt {

// All randomness flows through explicitly seeded generators so that every
// command is reproducible from (config, seed).
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

  // Derive an independent stream without disturbing this one.
  Rng fork(uint64_t tag) const {
    return Rng(seed_ ^ (tag * 0x9e3779b97f4a7c15ULL + 0x2545F4914F6CDD1DULL));
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(gen_); }
  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
    return std::uniform_int_distribution<int64_t>(lo, hi)(gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace lvt
