#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "agnet/numerics/tensor.hpp"

namespace agnet {

template <class T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape. Operations are appended in execution order;
/// `backward` replays them newest-first. One tape serves one logical thread.
template <class T>
class Tape {
 public:
  /// Receives the tape and the gradient flowing into the node's output.
  using Backward = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, true, {}); }

  Var<T> parameter(Tensor<T> value) {
    Var<T> v = push(std::move(value), true, true, {});
    parameters_.push_back(v.id());
    return v;
  }

  /// Appends the result of an operation. The node requires a gradient iff
  /// any of its inputs does; otherwise `backward` is dropped.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool needs = false;
    for (const Var<T>& in : inputs) needs = needs || requires_grad(in.id());
    return push(std::move(value), needs, false, needs ? std::move(backward) : Backward{});
  }

  template <class Range>
  Var<T> record_many(Tensor<T> value, const Range& inputs, Backward backward) {
    bool needs = false;
    for (const Var<T>& in : inputs) needs = needs || requires_grad(in.id());
    return push(std::move(value), needs, false, needs ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Mutable gradient buffer of a node, allocated as zeros on first use.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  /// Gradient of the last backward pass; zeros when nothing reached the node.
  Tensor<T> gradient(const Var<T>& v) const {
    const Node& n = nodes_[v.id()];
    return n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad;
  }

  const std::vector<std::size_t>& parameters() const { return parameters_; }

  void backward(const Var<T>& loss) {
    if (loss.value().size() != 1) {
      throw ShapeError("backward needs a scalar loss, got " + to_string(loss.shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor<T>();
    grad(loss.id())[0] = T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    bool requires_grad = false;
    bool leaf = false;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, bool leaf, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(backward), requires_grad, leaf});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> parameters_;
};

}  // namespace agnet
