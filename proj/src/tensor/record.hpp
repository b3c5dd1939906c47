#pragma once

#include <initializer_list>
#include <utility>

#include "odyn/tensor.hpp"

namespace odyn::tensor::detail {

/// Wraps freshly computed values as a tensor. The pullback is attached only
/// when recording is enabled and some parent requires a gradient.
inline Tensor make_result(Shape shape, std::vector<real> values,
                          std::vector<NodePtr> parents, std::function<void(Node&)> pullback) {
  auto node = std::make_shared<Node>();
  node->id = next_node_id();
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->pullback = std::move(pullback);
  }
  return Tensor(std::move(node));
}

inline void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor operand");
}

}  // namespace odyn::tensor::detail
