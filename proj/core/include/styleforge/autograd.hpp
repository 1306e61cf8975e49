#pragma once

// Reverse-mode differentiation over the operator set in ops.hpp.
//
// A Tape records every value produced during a forward pass together with a
// closure that maps the gradient of that value onto the gradients of its
// inputs. Values are immutable once recorded; Var is a plain index into the
// tape. Other modules (losses, flow warping) add their own differentiable
// operators through Tape::record.

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "styleforge/ops.hpp"
#include "styleforge/tensor.hpp"

namespace styleforge {

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  /// grad_inputs[i] is null when input i does not require a gradient.
  using Backward = std::function<void(const BasicTensor<T>& grad_output,
                                      std::span<BasicTensor<T>* const> grad_inputs)>;

  Tape() = default;
  // Recorded closures refer back to the tape.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(BasicTensor<T> value, bool requires_grad = false);
  Var record(BasicTensor<T> value, std::vector<Var> inputs, Backward backward);

  const BasicTensor<T>& value(Var v) const;
  /// Gradient accumulated by the last backward(); empty when v was not reached.
  const BasicTensor<T>& grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node that requires a
  /// gradient. The loss must hold exactly one element.
  void backward(Var loss);

  Var conv2d(Var x, Var weight, Var bias, int stride, Padding padding = Padding::reflect);
  Var instance_norm(Var x, Var gamma, Var beta, T eps = T(kInstanceNormEps));
  Var relu(Var x);
  Var upsample_nearest(Var x, int factor = 2);
  Var max_pool2(Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, T factor);
  Var square(Var a);
  /// Elementwise product with a constant; a constant with one channel is
  /// broadcast over the channels of a.
  Var mul(Var a, const BasicTensor<T>& constant);
  /// y = (x - shift[c]) * factor[c].
  Var channel_affine(Var x, std::span<const T> shift, std::span<const T> factor);
  /// Sum of all elements as a (1, 1, 1, 1) tensor.
  Var sum(Var a);
  Var mean(Var a);

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    std::vector<Var> inputs;
    Backward backward;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

/// Leaves for a set of parameter tensors, looked up by address so network
/// code can be written once against the parameter structs.
template <typename T>
class ParameterBinding {
 public:
  ParameterBinding(Tape<T>& tape, std::span<const BasicTensor<T>* const> params,
                   bool requires_grad) {
    vars_.reserve(params.size());
    for (const BasicTensor<T>* p : params) {
      const Var v = tape.input(*p, requires_grad);
      vars_.push_back(v);
      index_.emplace(p, v);
    }
  }

  /// Throws InvalidArgument for a tensor that was not bound.
  Var operator()(const BasicTensor<T>& param) const;
  /// In binding order.
  const std::vector<Var>& vars() const noexcept { return vars_; }

 private:
  std::vector<Var> vars_;
  std::unordered_map<const BasicTensor<T>*, Var> index_;
};

extern template class ParameterBinding<float>;
extern template class ParameterBinding<double>;

/// Scalar value of a one-element tape entry.
template <typename T>
T scalar(const Tape<T>& tape, Var v) {
  return tape.value(v)[0];
}

}  // namespace styleforge
