#include "lvt/graph.hpp"

#include <algorithm>
#include <unordered_set>

namespace lvt {

namespace {
thread_local int64_t g_next_id = 0;
}

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = g_next_id++;
  return n;
}

Var make_constant(Tensor value) { return make_leaf(std::move(value), false); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id++;
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void backward(const Var& loss) {
  LVT_CHECK(loss->value.numel() == 1, ShapeError,
            "backward requires a scalar loss, got shape " + shape_str(loss->value.shape()));
  if (!loss->requires_grad) return;

  // Collect the requires_grad subgraph; ids give a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.get()};
  seen.insert(loss.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  loss->ensure_grad().fill(1.0);
  for (Node* n : order) {
    if (n->backprop && n->grad.defined()) n->backprop(*n);
  }
}

}  // namespace lvt
