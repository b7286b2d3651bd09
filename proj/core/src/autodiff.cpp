#include "msfmamba/autodiff.hpp"

#include <unordered_set>

namespace msf {

namespace {
thread_local int no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

bool grad_enabled() { return no_grad_depth == 0; }

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, VjpFn<T> vjp, const char* op_name) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op_name) + " produced a non-finite value");
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (!grad_enabled()) return Var<T>(std::move(node));
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return Var<T>(std::move(node));
  node->requires_grad = true;
  node->parents.reserve(parents.size());
  for (auto& p : parents) node->parents.push_back(p.node_ptr());
  node->vjp = std::move(vjp);
  return Var<T>(std::move(node));
}

template <typename T>
Gradients<T> backward(const Var<T>& root, const Tensor<T>& seed) {
  if (seed.shape() != root.shape()) {
    throw DimensionError("backward seed shape " + shape_to_string(seed.shape()) + " does not match root " +
                         shape_to_string(root.shape()));
  }
  Gradients<T> result;
  if (!root.requires_grad()) return result;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node<T>*> order;
  std::unordered_set<const Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node_ptr().get(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<const Node<T>*, Tensor<T>> cot;
  cot.reserve(order.size());
  cot.emplace(root.node(), seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    auto found = cot.find(node);
    if (found == cot.end()) continue;
    if (node->parents.empty()) {
      result.raw().emplace(node, std::move(found->second));
      cot.erase(found);
      continue;
    }
    Tensor<T> g = std::move(found->second);
    cot.erase(found);
    auto parent_cots = node->vjp(*node, g);
    for (std::size_t i = 0; i < node->parents.size() && i < parent_cots.size(); ++i) {
      Node<T>* parent = node->parents[i].get();
      if (!parent->requires_grad || parent_cots[i].empty()) continue;
      auto& slot = cot[parent];
      if (slot.empty()) {
        slot = std::move(parent_cots[i]);
      } else {
        auto dst = slot.data();
        auto src = parent_cots[i].data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }
  return result;
}

template <typename T>
Gradients<T> backward(const Var<T>& root) {
  if (root.value().size() != 1) throw DimensionError("backward without a seed needs a scalar root");
  return backward(root, Tensor<T>(root.shape(), T(1)));
}

template Var<float> make_op(Tensor<float>, std::vector<Var<float>>, VjpFn<float>, const char*);
template Var<double> make_op(Tensor<double>, std::vector<Var<double>>, VjpFn<double>, const char*);
template Gradients<float> backward(const Var<float>&, const Tensor<float>&);
template Gradients<double> backward(const Var<double>&, const Tensor<double>&);
template Gradients<float> backward(const Var<float>&);
template Gradients<double> backward(const Var<double>&);

}  // namespace msf
