#pragma once

#include <deque>
#include <functional>

#include "segn/nn/tensor.hpp"

namespace segn::nn {

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const std::vector<std::size_t>& shape() const { return value().shape(); }
};

/// Record of one forward pass. Nodes are appended in evaluation order, so
/// walking ids downward is a reverse topological order. With recording off
/// no backward closures are kept (inference mode).
template <typename T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var<T> constant(Tensor<T> value) { return push_node(std::move(value), nullptr, false); }

  /// Leaf whose gradient is wanted (used for input-gradient checks).
  Var<T> variable(Tensor<T> value) { return push_node(std::move(value), nullptr, record_); }

  /// Leaf bound to a parameter; gradients accumulate into param.grad.
  Var<T> param(Parameter<T>& p) {
    Node n;
    n.param = &p;
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient accumulator for a node, allocated zero on first use.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.param) return n.param->grad;
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  /// Record an op output. backward is invoked once with the output id
  /// during the reverse sweep; it is dropped when no input needs a gradient.
  Var<T> push(Tensor<T> value, std::initializer_list<Var<T>> inputs, std::function<void(std::size_t)> backward) {
    bool any = false;
    for (const auto& v : inputs) any = any || nodes_[v.id].needs_grad;
    return push_node(std::move(value), any && record_ ? std::move(backward) : nullptr, any && record_);
  }
  Var<T> push(Tensor<T> value, const std::vector<Var<T>>& inputs, std::function<void(std::size_t)> backward) {
    bool any = false;
    for (const auto& v : inputs) any = any || nodes_[v.id].needs_grad;
    return push_node(std::move(value), any && record_ ? std::move(backward) : nullptr, any && record_);
  }

  /// Reverse sweep from a scalar output, seeded with d(output) = 1.
  void backward(Var<T> output) {
    if (!record_) throw Error(ErrorKind::NotInitialized, "backward on a non-recording tape");
    if (value(output.id).size() != 1) throw Error(ErrorKind::ShapeMismatch, "backward needs a scalar output");
    grad(output.id)[0] += T(1);
    for (std::size_t id = output.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward) continue;
      if (n.grad.size() == 0) continue;  // nothing flowed into this node
      n.backward(id);
      n.backward = nullptr;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
    std::function<void(std::size_t)> backward;
  };

  Var<T> push_node(Tensor<T> value, std::function<void(std::size_t)> backward, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  bool record_;
  std::deque<Node> nodes_;
};

}  // namespace segn::nn
