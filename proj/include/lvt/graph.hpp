#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "lvt/tensor.hpp"

namespace lvt {

// Define-by-run reverse-mode tape. Graphs are built per step and per thread;
// nodes are never shared across threads.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  int64_t id = 0;  // creation order; parents always have smaller ids
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  void accumulate(const Tensor& g) {
    if (!grad.defined()) grad = Tensor(value.shape());
    check_same_shape(grad, g, "gradient accumulate");
    Real* d = grad.data();
    const Real* s = g.data();
    const int64_t n = grad.numel();
    for (int64_t i = 0; i < n; ++i) d[i] += s[i];
  }
  Tensor& ensure_grad() {
    if (!grad.defined()) grad = Tensor(value.shape());
    return grad;
  }
};

Var make_leaf(Tensor value, bool requires_grad);
Var make_constant(Tensor value);
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

// Runs reverse-mode accumulation from a scalar loss. Gradients land in the
// `grad` fields of every reachable node with requires_grad set.
void backward(const Var& loss);

}  // namespace lvt
