#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "msfmamba/tensor.hpp"

namespace msf {

template <typename T>
struct Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

/// Maps the cotangent of a node's output to one cotangent per parent. An empty
/// tensor in the result means "no contribution" for that parent.
template <typename T>
using VjpFn = std::function<std::vector<Tensor<T>>(const Node<T>& self, const Tensor<T>& cotangent)>;

template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<NodePtr<T>> parents;
  VjpFn<T> vjp;
  bool requires_grad = false;
};

/// Handle to a node of the define-by-run tape. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr<T> node) : node_(std::move(node)) {}

  /// A differentiable input (weight or data we want gradients for).
  static Var leaf(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Node<T>* node() const { return node_.get(); }
  const NodePtr<T>& node_ptr() const { return node_; }

 private:
  NodePtr<T> node_;
};

/// While alive, ops on this thread record no parents or vjp rules.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

/// Records a new op on the tape. Throws NumericError if `value` is not finite.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, VjpFn<T> vjp, const char* op_name);

/// Cotangents of every leaf reachable from a backward() root.
template <typename T>
class Gradients {
 public:
  /// Zero tensor when `v` was not reachable from the root.
  Tensor<T> wrt(const Var<T>& v) const {
    auto it = grads_.find(v.node());
    if (it == grads_.end()) return Tensor<T>(v.shape());
    return it->second;
  }

  bool reached(const Var<T>& v) const { return grads_.count(v.node()) != 0; }

  std::unordered_map<const Node<T>*, Tensor<T>>& raw() { return grads_; }

 private:
  std::unordered_map<const Node<T>*, Tensor<T>> grads_;
};

/// Reverse-mode sweep from `root`, seeded with `seed` (same shape as the root value).
/// Each node is visited once; cotangents accumulate additively.
template <typename T>
Gradients<T> backward(const Var<T>& root, const Tensor<T>& seed);

/// backward() seeded with ones; root must hold a single element.
template <typename T>
Gradients<T> backward(const Var<T>& root);

}  // namespace msf
