#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "toposeg/tensor.hpp"

namespace toposeg {

using NodeId = std::size_t;

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  div,
  relu,
  sigmoid,
  clamp,
  log,
  affine,
  reshape,
  matmul,
  max_pool,
  min_pool,
  conv_dw3x3,
  conv_pw1x1,
  sum,
  mean,
  custom,
};

std::string_view op_name(OpKind kind);

class Tape;

/// Handle to a node recorded on a Tape.
///
/// Cheap to copy. Valid for as long as the owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

  NodeId id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Accumulates gradient contributions into the inputs of one node.
///
/// `grad_inputs[i]` is null when input i does not require a gradient; the
/// callback must skip those.
using BackwardFn =
    std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_inputs)>;

/// Gradients of a scalar with respect to every requires_grad leaf.
class Gradients {
 public:
  bool contains(const Var& v) const { return grads_.contains(v.id()); }
  const Tensor& at(const Var& v) const;
  const Tensor* find(const Var& v) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<NodeId, Tensor> grads_;
};

/// Linear record of a computation, in topological order by construction.
///
/// Nodes are appended as ops run; backward() walks the record once in
/// reverse. A tape is single-threaded; independent tapes may be used from
/// different threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var variable(Tensor value) { return leaf(std::move(value), true); }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records a node. `backward` may be empty when no input requires grad.
  Var record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::size_t size() const { return nodes_.size(); }

  bool owns(const Var& v) const { return v.tape_ == this && v.id_ < nodes_.size(); }

  /// Reverse sweep from a scalar node.
  Gradients backward(const Var& loss) const;

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

// Elementwise ops. Binary ops accept equal shapes or one single-element
// operand, which is broadcast.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var relu(const Var& x);
Var sigmoid(const Var& x);
/// Gradient passes where lo <= x <= hi and is zero outside.
Var clamp(const Var& x, double lo, double hi);
/// Natural log; errors on non-positive input.
Var log(const Var& x);
/// scale * x + shift.
Var affine(const Var& x, double scale, double shift);
Var reshape(const Var& x, Shape shape);

Var matmul(const Var& a, const Var& b);

enum class PoolKind { min, max };

/// 3x3 stride-1 pooling over each plane of a CxHxW tensor.
///
/// Max pooling pads with 0. Min pooling is evaluated as -maxpool(-x) with the
/// same zero padding, so border pixels erode toward 0. Ties go to the first
/// position in row-major window order and the whole gradient is routed there.
Var morph_pool(PoolKind kind, const Var& x);
inline Var max_pool(const Var& x) { return morph_pool(PoolKind::max, x); }
inline Var min_pool(const Var& x) { return morph_pool(PoolKind::min, x); }

/// Per-channel 3x3 cross-correlation, zero padding 1, plus bias.
/// x: CxHxW, weight: Cx3x3, bias: C.
Var conv_dw3x3(const Var& x, const Var& weight, const Var& bias);

/// Per-pixel channel mixing. x: CxHxW, weight: C'xC, bias: C' (optional).
Var conv_pw1x1(const Var& x, const Var& weight, std::optional<Var> bias = std::nullopt);

enum class ReduceKind { sum, mean };
Var reduce(ReduceKind kind, const Var& x);
inline Var sum(const Var& x) { return reduce(ReduceKind::sum, x); }
inline Var mean(const Var& x) { return reduce(ReduceKind::mean, x); }

/// Central-difference gradient of a scalar function.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-5);

/// max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|, floor).
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace toposeg
