#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "odyn/real.hpp"

namespace odyn::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand extents do not fit an operation. The message names
/// every offending shape.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One entry of the differentiation record. Ids grow monotonically, so a
/// node is always newer than every node it was computed from; sorting the
/// reachable set by descending id is a valid reverse topological order.
struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> pullback;

  bool is_leaf() const { return !pullback; }
  /// Gradient buffer of this node, zero-filled on first use.
  std::vector<real>& grad_buffer();
};

std::uint64_t next_node_id();

}  // namespace detail

/// Dense row-major array with an attached reverse-mode record.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets the optimizer update parameters in place. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);

  static Tensor scalar(real value, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<real> values();
  std::span<const real> values() const;
  real& at(std::size_t flat_index) { return values()[flat_index]; }
  real at(std::size_t flat_index) const { return values()[flat_index]; }
  real item() const;

  /// Empty span when no gradient reached this tensor.
  std::span<const real> grad() const;
  std::span<real> mutable_grad();
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  std::uint64_t id() const;

  Tensor detach() const;
  Tensor clone() const;

  /// Reverse sweep from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  const detail::NodePtr& impl() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

/// Disables recording for its lifetime (evaluation, frozen encoders).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace odyn::tensor
