#pragma once

// Reverse-mode differentiation over Tensor values. A Tape records one forward
// pass as an append-only list of nodes; every node's inputs precede it, so
// backward is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmnet/autodiff/tensor.hpp"
#include "tmnet/errors.hpp"

namespace tmnet::ad {

/// Trainable tensor with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    grad.fill(T{0});
  }
};

template <class T>
class Tape;

/// Handle to a node on a tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
};

#ifdef NDEBUG
inline constexpr bool kCheckFiniteByDefault = false;
#else
inline constexpr bool kCheckFiniteByDefault = true;
#endif

template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool check_finite = kCheckFiniteByDefault) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that takes no gradient.
  Var<T> constant(Tensor<T> value) { return append(std::move(value), BackwardFn{}, false); }

  /// Leaf bound to a Parameter; backward accumulates into parameter.grad.
  Var<T> param(Parameter<T>& p) {
    Node n;
    n.param = &p;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Records an operation result. `inputs` decides whether the node needs a
  /// gradient; `fn` is dropped when none of them do.
  Var<T> push(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return push(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(fn));
  }

  Var<T> push(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn fn) {
    bool needs = false;
    for (const auto& v : inputs) {
      check_owner(v);
      needs = needs || nodes_[v.id].needs_grad;
    }
    return append(std::move(value), needs ? std::move(fn) : BackwardFn{}, needs);
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.param ? n.param->value : n.value;
  }

  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  /// Gradient buffer of node `id`, allocated as zeros on first use.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.shape() != value(id).shape()) n.grad = Tensor<T>(value(id).shape());
    return n.grad;
  }

  /// Gradient buffer for an op input, or nullptr when that input takes no gradient.
  Tensor<T>* grad_if_needed(std::size_t id) { return needs_grad(id) ? &grad(id) : nullptr; }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Parameter
  /// gradients accumulate: two calls without zeroing give twice the gradient.
  void backward(Var<T> loss) {
    check_owner(loss);
    if (value(loss.id).numel() != 1)
      throw NotAScalar("backward needs a scalar loss, got shape " + shape_string(value(loss.id).shape()));
    for (auto& n : nodes_) n.grad = Tensor<T>();
    grad(loss.id)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
        auto& dst = n.param->grad;
        for (std::size_t k = 0; k < dst.numel(); ++k) dst[k] += n.grad[k];
      }
    }
  }

  bool checks_finite() const noexcept { return check_finite_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
  };

  Var<T> append(Tensor<T> value, BackwardFn fn, bool needs) {
    if (check_finite_ && !value.all_finite())
      throw NonFiniteValue("non-finite value produced at tape node " + std::to_string(nodes_.size()));
    Node n;
    n.value = std::move(value);
    n.backward = std::move(fn);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  void check_owner(const Var<T>& v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw InvalidArgument("variable does not belong to this tape");
  }

  std::vector<Node> nodes_;
  bool check_finite_;
};

}  // namespace tmnet::ad
