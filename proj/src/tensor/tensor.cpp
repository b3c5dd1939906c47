#include "odyn/tensor.hpp"

#include <malloc.h>

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace odyn::tensor {

namespace {

thread_local bool grad_mode = true;

// Activations are allocated and freed every step. Served from fresh mmaps
// they page-fault on every touch; keeping them in the heap removes that.
const bool heap_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();

detail::NodePtr make_leaf(Shape shape, std::vector<real> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor data of length " + std::to_string(values.size()) +
                     " does not fill shape " + to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->id = detail::next_node_id();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

std::vector<real>& Node::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), real(0));
  return grad;
}

}  // namespace detail

Tensor::Tensor(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  node_ = make_leaf(std::move(shape), std::vector<real>(n, real(0)), requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<real>{value}, requires_grad);
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<real>(n, value), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("access to an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return numel(shape()); }

std::span<real> Tensor::values() {
  shape();
  return node_->data;
}

std::span<const real> Tensor::values() const {
  shape();
  return node_->data;
}

real Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
  return node_->data[0];
}

std::span<const real> Tensor::grad() const {
  shape();
  return node_->grad;
}

std::span<real> Tensor::mutable_grad() {
  shape();
  return node_->grad_buffer();
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  shape();
  node_->requires_grad = flag;
}

std::uint64_t Tensor::id() const {
  shape();
  return node_->id;
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

Tensor Tensor::clone() const { return Tensor(shape(), node_->data, requires_grad()); }

void Tensor::backward() const {
  if (size() != 1) {
    throw ShapeError("backward() needs a scalar root, got shape " + to_string(shape()));
  }
  if (!node_->requires_grad) return;

  std::vector<detail::Node*> order;
  std::vector<detail::Node*> stack{node_.get()};
  std::unordered_set<const detail::Node*> seen;
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  node_->grad_buffer()[0] += real(1);
  for (auto* n : order) {
    if (n->is_leaf() || n->grad.empty()) continue;
    n->pullback(*n);
    // Interior gradients are consumed exactly once.
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

bool grad_enabled() { return grad_mode; }

}  // namespace odyn::tensor
