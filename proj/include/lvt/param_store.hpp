#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>

#include "lvt/graph.hpp"
#include "lvt/rng.hpp"
#include "lvt/tensor.hpp"

namespace lvt {

// Named parameters with per-parameter Adam accumulators and one shared step
// counter. std::map keeps iteration order deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor m;  // first moment
    Tensor v;  // second moment
  };

  Tensor& create(const std::string& name, Tensor init) {
    LVT_CHECK(entries_.find(name) == entries_.end(), ConfigError, "duplicate parameter " + name);
    Entry e;
    e.m = Tensor(init.shape());
    e.v = Tensor(init.shape());
    e.value = std::move(init);
    auto [it, ok] = entries_.emplace(name, std::move(e));
    (void)ok;
    return it->second.value;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    LVT_CHECK(it != entries_.end(), ConfigError, "unknown parameter " + name);
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    LVT_CHECK(it != entries_.end(), ConfigError, "unknown parameter " + name);
    return it->second;
  }
  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& [k, e] : entries_) n += e.value.numel();
    return n;
  }

 private:
  std::map<std::string, Entry> entries_;
  int64_t step_ = 0;
};

using GradMap = std::map<std::string, Tensor>;

// supplies parameter nodes to graph builders (trainable leaves or constants)
using ParamGetter = std::function<Var(const std::string&)>;

// stderr warning, emitted once per parameter name per process
void warn_param_off_graph(const std::string& name);

// Per-step graph binding: hands out one leaf Var per parameter so gradients
// from repeated uses accumulate on a single node.
class Tape {
 public:
  explicit Tape(ParamStore& store) : store_(&store) {}

  Var param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    Var v = make_leaf(store_->value(name), true);
    leaves_.emplace(name, v);
    return v;
  }

  // Gradients for every parameter in the store; parameters that never joined
  // the graph get zeros. The caller can collect their names, otherwise a
  // once-per-name warning goes to stderr.
  GradMap collect_grads(std::vector<std::string>* missing = nullptr) const {
    GradMap grads;
    for (const auto& [name, e] : store_->entries()) {
      auto it = leaves_.find(name);
      if (it != leaves_.end() && it->second->grad.defined()) {
        grads[name] = it->second->grad;
      } else {
        grads[name] = Tensor(e.value.shape());
        if (missing)
          missing->push_back(name);
        else
          warn_param_off_graph(name);
      }
    }
    return grads;
  }

 private:
  ParamStore* store_;
  std::unordered_map<std::string, Var> leaves_;
};

struct AdamConfig {
  Real lr = 3e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

// Bias-corrected Adam, applied in place. Returns false (and leaves the store
// untouched, counter included) when any gradient is non-finite.
bool adam_step(ParamStore& store, const GradMap& grads, const AdamConfig& cfg);

// ---- initializers ----

Tensor he_uniform(Shape shape, int fan_in, Rng& rng);
Tensor normal_init(Shape shape, Real stddev, Rng& rng);

}  // namespace lvt
