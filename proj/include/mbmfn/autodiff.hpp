#pragma once

#include "mbmfn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace mbmfn {

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // empty until something flows into it
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  /// Gradient accumulator for this node, zero-initialized on first use.
  /// Returns nullptr when the node does not take gradients.
  Tensor<Scalar>* grad_slot() {
    if (!requires_grad) return nullptr;
    if (grad.empty()) grad = Tensor<Scalar>::zeros(value.shape());
    return &grad;
  }
};

/// Handle to a value produced on (or outside) a tape. Cheap to copy.
template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  Var(NodePtr node, Tape<Scalar>* tape) : node_(std::move(node)), tape_(tape) {}

  /// Untracked constant.
  static Var constant(Tensor<Scalar> value) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    return Var(std::move(node), nullptr);
  }

  const Tensor<Scalar>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Tensor<Scalar>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tape<Scalar>* tape() const { return tape_; }
  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
  Tape<Scalar>* tape_ = nullptr;
};

/// Records op nodes in creation order (a valid topological order) and runs
/// reverse-mode accumulation over them.
///
/// Single-writer: one forward/backward pass at a time.
template <typename Scalar>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient (parameters, inputs under test).
  Var<Scalar> variable(Tensor<Scalar> value) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    node->requires_grad = true;
    nodes_.push_back(node);
    return Var<Scalar>(std::move(node), this);
  }

  Var<Scalar> constant(Tensor<Scalar> value) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    return Var<Scalar>(std::move(node), this);
  }

  /// Adds an op result. The backward closure reads `self.grad` and pushes
  /// into `self.inputs[i]->grad_slot()`.
  Var<Scalar> record(Tensor<Scalar> value, std::vector<std::shared_ptr<Node<Scalar>>> inputs,
                     std::function<void(Node<Scalar>&)> backward) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->requires_grad = true;
    nodes_.push_back(node);
    return Var<Scalar>(std::move(node), this);
  }

  /// Reverse accumulation from a scalar loss. Gradients sum over every use of a node.
  void backward(const Var<Scalar>& loss) {
    if (loss.shape() != Shape{}) throw ShapeError("backward requires a scalar loss, got " + loss.shape().str());
    if (loss.tape() != this) throw std::invalid_argument("loss was not recorded on this tape");
    if (!loss.requires_grad()) return;
    loss.node()->grad = Tensor<Scalar>::constant(Shape{}, Scalar(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<Scalar>& node = **it;
      if (node.backward && !node.grad.empty()) node.backward(node);
    }
  }

  void zero_grad() {
    for (auto& node : nodes_) node->grad = Tensor<Scalar>();
  }

  std::size_t size() const { return nodes_.size(); }

  /// Elements held by recorded values (activations kept for backward).
  std::size_t stored_elements() const {
    std::size_t n = 0;
    for (const auto& node : nodes_) n += static_cast<std::size_t>(node->value.size());
    return n;
  }

  /// When enabled, piecewise ops append the side of each kink their inputs
  /// fall on. Finite-difference checks compare signatures to detect steps
  /// that straddle a non-differentiable point.
  void set_kink_tracking(bool on) { track_kinks_ = on; }
  bool kink_tracking() const { return track_kinks_; }
  std::vector<std::uint8_t>& kink_signature() { return kink_signature_; }

 private:
  std::vector<std::shared_ptr<Node<Scalar>>> nodes_;
  bool track_kinks_ = false;
  std::vector<std::uint8_t> kink_signature_;
};

namespace detail {

/// Tape shared by the inputs of an op, or nullptr if none of them is tracked.
template <typename Scalar>
Tape<Scalar>* common_tape(std::initializer_list<const Var<Scalar>*> vars) {
  Tape<Scalar>* tape = nullptr;
  for (const auto* v : vars) {
    if (!v->tape()) continue;
    if (tape && tape != v->tape()) throw std::invalid_argument("op inputs live on different tapes");
    tape = v->tape();
  }
  return tape;
}

template <typename Scalar>
bool any_requires_grad(std::initializer_list<const Var<Scalar>*> vars) {
  for (const auto* v : vars)
    if (v->requires_grad()) return true;
  return false;
}

/// Wraps an op result: recorded with its backward when some input needs a
/// gradient, otherwise returned as an untracked value.
template <typename Scalar>
Var<Scalar> finish(Tensor<Scalar> value, std::initializer_list<const Var<Scalar>*> vars,
                   std::function<void(Node<Scalar>&)> backward) {
  Tape<Scalar>* tape = common_tape<Scalar>(vars);
  if (!tape || !any_requires_grad<Scalar>(vars)) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    return Var<Scalar>(std::move(node), tape);
  }
  std::vector<std::shared_ptr<Node<Scalar>>> inputs;
  inputs.reserve(vars.size());
  for (const auto* v : vars) inputs.push_back(v->node());
  return tape->record(std::move(value), std::move(inputs), std::move(backward));
}

}  // namespace detail
}  // namespace mbmfn
