#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace hgr {

/// A named tensor with an accumulated gradient. All network parameters live
/// in Variables; backward() adds into grad until zero_grad() clears it.
template <typename T>
struct Variable {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Variable() = default;
  Variable(std::string name_, Tensor<T> value_, bool trainable_ = true)
      : name(std::move(name_)),
        value(std::move(value_)),
        grad(value.shape()),
        trainable(trainable_) {}

  void zero_grad() { grad.zero(); }
};

/// Records the forward pass as a sequence of nodes and replays it backwards.
/// Nodes are appended in execution order, so reverse index order is a valid
/// reverse-topological order and every node is visited exactly once.
///
/// One tape = one forward/backward episode on one thread. Ops may
/// parallelize internally; the tape itself is single-writer.
template <typename T>
class Tape {
 public:
  using Ref = std::int32_t;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on demand during backward
    bool requires_grad = false;
    // Consumes this node's grad, adds into parent/variable grads.
    std::function<void(Tape&, Node&)> backprop;
  };

  Tape() { nodes_.reserve(128); }

  /// Constant leaf. With requires_grad, the gradient is kept after backward
  /// and can be read via grad() (used by gradient checks).
  Ref input(Tensor<T> value, bool requires_grad = false) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return static_cast<Ref>(nodes_.size() - 1);
  }

  Ref emit(Tensor<T> value, bool requires_grad,
           std::function<void(Tape&, Node&)> backprop) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return static_cast<Ref>(nodes_.size() - 1);
  }

  const Tensor<T>& value(Ref ref) const { return nodes_[ref].value; }
  Tensor<T>& mutable_value(Ref ref) { return nodes_[ref].value; }
  bool requires_grad(Ref ref) const { return nodes_[ref].requires_grad; }

  /// Gradient of a leaf created with requires_grad=true; valid after
  /// backward() until the tape is destroyed or cleared.
  const Tensor<T>& grad(Ref ref) const { return nodes_[ref].grad; }

  /// Adds `delta` into the gradient accumulator of `ref`.
  void accumulate(Ref ref, const Tensor<T>& delta) {
    Node& node = nodes_[ref];
    if (!node.requires_grad) return;
    if (node.grad.empty()) {
      node.grad = delta;
      return;
    }
    require_same_shape(node.grad, delta, "accumulate");
    T* g = node.grad.data();
    const T* d = delta.data();
    const std::int64_t count = delta.size();
    for (std::int64_t i = 0; i < count; ++i) g[i] += d[i];
  }

  /// Gradient accumulator of `ref`, allocated and zeroed on first use.
  Tensor<T>& grad_buffer(Ref ref) {
    Node& node = nodes_[ref];
    if (node.grad.empty()) node.grad = Tensor<T>(node.value.shape());
    return node.grad;
  }

  /// Reverse-mode sweep from a scalar loss. Trainable Variables touched by
  /// the recorded ops receive accumulated gradients; repeated calls keep
  /// accumulating until Variable::zero_grad.
  void backward(Ref loss) {
    const Shape4& s = nodes_[loss].value.shape();
    if (s.numel() != 1)
      throw ShapeError("backward: loss must be a scalar, got " + s.str());
    if (!nodes_[loss].requires_grad) return;  // nothing trainable upstream
    grad_buffer(loss)[0] = T(1);
    for (Ref i = loss; i >= 0; --i) {
      Node& node = nodes_[i];
      if (!node.requires_grad || node.grad.empty()) continue;
      if (node.backprop) {
        node.backprop(*this, node);
        node.backprop = nullptr;
        node.grad.reset();  // consumed; leaves keep theirs for inspection
      }
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

}  // namespace hgr
