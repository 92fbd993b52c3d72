#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "part/params.hpp"
#include "part/tensor.hpp"

namespace part::ad {

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

  const Tensor& value() const;
  /// Gradient after backward(); an empty tensor means the value received none.
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records operations in execution order; backward() replays their adjoints in
/// exact reverse order. One tape per forward pass and per thread.
class Tape {
 public:
  /// Adjoint of one recorded op; receives the tape and the op's own node id.
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient (readable through Var::grad()).
  Var input(Tensor value);
  /// Leaf bound to a parameter; the value is referenced, not copied.
  Var param(const Parameter& p);
  /// Parameter value used as a constant (frozen).
  Var frozen(const Parameter& p);

  /// Reverse sweep from a scalar loss. Parameter gradients are added to Parameter::grad,
  /// so calling this twice without zeroing accumulates.
  void backward(Var loss);
  /// Same sweep, but parameter gradients are added to sink[parameter.index].
  void backward(Var loss, std::span<Tensor> sink);

  std::size_t size() const { return nodes_.size(); }

  // Op-authoring interface.
  Var record(Tensor value, bool requires_grad, Backward back);
  const Tensor& value_of(std::size_t id) const;
  /// Gradient slot, allocated as zeros on first use.
  Tensor& grad_of(std::size_t id);
  const Tensor& grad_view(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Backward back;
    const Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void sweep(Var loss);

  std::vector<Node> nodes_;
};

// Differentiable operations. All inputs must live on the same tape.
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
/// x + row broadcast over every row of x (row is 1 x cols).
Var add_row(Var x, Var row);
/// x * weight + bias, weight is in x out, bias is 1 x out (bias may be an invalid Var).
Var linear(Var x, Var weight, Var bias);
Var scale(Var x, double c);
Var gelu(Var x);
/// Softmax along each row, max-subtracted.
Var row_softmax(Var x);
/// Per-row normalization to zero mean / unit variance, then gain and shift (1 x cols).
Var layernorm(Var x, Var gain, Var shift, double epsilon = 1e-6);
Var concat_last_dim(Var a, Var b);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t start, std::size_t width);
Var gather_rows(Var x, std::span<const std::size_t> rows);
Var slice_rows(Var x, std::size_t start, std::size_t count);
/// Stacks a over b (same column count).
Var concat_rows(Var a, Var b);
Var reshape(Var x, std::size_t rows, std::size_t cols);
Var sum(Var x);
/// Mean of squared differences over all elements.
Var mse(Var pred, Var target);
/// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);
/// Selected outputs of a linear map with weight stored output-major (outputs x inputs):
/// result[0, k] = x . weight.row(outputs[k]) + bias[outputs[k]]. x is 1 x inputs.
Var linear_select(Var x, Var weight, Var bias, std::span<const std::size_t> outputs);

}  // namespace part::ad
