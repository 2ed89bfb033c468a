#include "lvt/param_store.hpp"

#include <cmath>
#include <iostream>
#include <mutex>
#include <set>

namespace lvt {

void warn_param_off_graph(const std::string& name) {
  static std::mutex mu;
  static std::set<std::string> seen;
  std::lock_guard<std::mutex> lock(mu);
  if (seen.insert(name).second)
    std::cerr << "[lvt] warning: parameter '" << name
              << "' is not on the loss graph; gradient is zero\n";
}

bool adam_step(ParamStore& store, const GradMap& grads, const AdamConfig& cfg) {
  LVT_CHECK(cfg.lr > 0, ConfigError, "adam: lr must be positive");
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) {
      std::cerr << "[lvt] adam: non-finite gradient for '" << name << "', step "
                << (store.step() + 1) << " skipped\n";
      return false;
    }
  }
  const int64_t t = store.step() + 1;
  const Real c1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(t));
  const Real c2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(t));
  for (auto& [name, e] : store.entries()) {
    auto it = grads.find(name);
    LVT_CHECK(it != grads.end(), ConfigError, "adam: no gradient supplied for " + name);
    const Tensor& g = it->second;
    check_same_shape(e.value, g, "adam");
    Real* w = e.value.data();
    Real* m = e.m.data();
    Real* v = e.v.data();
    const Real* gd = g.data();
    const int64_t n = e.value.numel();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gd[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
      const Real mhat = m[i] / c1;
      const Real vhat = v[i] / c2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  store.set_step(t);
  return true;
}

Tensor he_uniform(Shape shape, int fan_in, Rng& rng) {
  LVT_CHECK(fan_in > 0, ConfigError, "he_uniform: fan_in must be positive");
  const Real limit = std::sqrt(6.0 / static_cast<Real>(fan_in));
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-limit, limit);
  return t;
}

Tensor normal_init(Shape shape, Real stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal(0.0, stddev);
  return t;
}

}  // namespace lvt
