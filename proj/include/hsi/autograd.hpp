#pragma once

// Eager reverse-mode autodiff. A Var carries an immutable value plus,
// when tracked, the tape and node that produced it. Ops on untracked
// Vars run eagerly and record nothing.

#include <concepts>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hsi/counters.hpp"
#include "hsi/kernels.hpp"
#include "hsi/tensor.hpp"

namespace hsi {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

enum class OpKind : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  affine,
  sum_all,
  mean_all,
  matmul,
  transpose_last2,
  reshape,
  softmax_rows,
  softmax_channels,
  sigmoid,
  relu,
  clamp,
  conv2d,
  depthwise_conv2d,
  pad2d,
  upsample_nearest2x,
  avg_pool2x2,
  max_pool2x2,
  pool_global,
  channel_norm,
  moment,
  cosine_lambda,
  l2norm_per_sample,
  bce_logits_mean,
};

std::string_view op_name(OpKind kind) noexcept;

/// Per-op parameters; each op reads only the fields it needs.
struct OpAttrs {
  double scale = 1.0;
  double shift = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  double eps = kernels::kDefaultEps;
  double target = 0.0;
  double limit = 20.0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  kernels::PadMode pad_mode = kernels::PadMode::reflect;
  kernels::PoolKind pool = kernels::PoolKind::avg;
  kernels::Moment moment = kernels::Moment::mean;
  bool trans_a = false;
  bool trans_b = false;
  Shape shape;
};

/// MACs and additions one op execution costs, with its scaling class.
struct OpCost {
  CostClass cls = CostClass::spatial;
  std::uint64_t macs = 0;
  std::uint64_t adds = 0;
};

template <std::floating_point T>
OpCost op_cost(OpKind kind, std::span<const BasicTensor<T>* const> inputs, const BasicTensor<T>& out,
               const OpAttrs& attrs);

template <std::floating_point T>
using ValuePtr = std::shared_ptr<const BasicTensor<T>>;

template <std::floating_point T>
struct TapeNode {
  OpKind kind = OpKind::leaf;
  OpAttrs attrs;
  std::vector<NodeId> inputs;          // kNoNode marks a constant operand
  std::vector<ValuePtr<T>> saved;      // forward operand values
  ValuePtr<T> value;
};

template <std::floating_point T>
class BasicTape;

template <std::floating_point T>
class BasicVar {
 public:
  BasicVar() = default;
  // Untracked constant.
  BasicVar(BasicTensor<T> v) : value_(std::make_shared<BasicTensor<T>>(std::move(v))) {}
  explicit BasicVar(ValuePtr<T> v) : value_(std::move(v)) {}

  const BasicTensor<T>& value() const noexcept { return *value_; }
  const ValuePtr<T>& value_ptr() const noexcept { return value_; }
  const Shape& shape() const noexcept { return value_->shape(); }
  bool defined() const noexcept { return value_ != nullptr; }

  bool tracked() const noexcept { return tape_ != nullptr; }
  BasicTape<T>* tape() const noexcept { return tape_; }
  NodeId id() const noexcept { return id_; }

  /// Same value, detached from any tape.
  BasicVar detached() const { return BasicVar(value_); }

 private:
  friend class BasicTape<T>;
  BasicVar(ValuePtr<T> v, BasicTape<T>* tape, NodeId id) : value_(std::move(v)), tape_(tape), id_(id) {}

  ValuePtr<T> value_;
  BasicTape<T>* tape_ = nullptr;
  NodeId id_ = kNoNode;
};

/// Gradients of the leaves reached by a backward pass. Missing entries are zero.
template <std::floating_point T>
class GradientMap {
 public:
  const BasicTensor<T>* find(NodeId id) const {
    auto it = grads_.find(id);
    return it == grads_.end() ? nullptr : &it->second;
  }
  /// Gradient of `v`, zeros of its shape when absent.
  BasicTensor<T> of(const BasicVar<T>& v) const {
    if (const auto* g = find(v.id())) return *g;
    return BasicTensor<T>(v.shape());
  }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class BasicTape<T>;
  std::unordered_map<NodeId, BasicTensor<T>> grads_;
};

/// Dispatches one op: validates tapes, computes the forward value, records
/// its cost in the active MacScope and, for tracked operands, a tape node.
template <std::floating_point T>
BasicVar<T> apply(OpKind kind, std::initializer_list<const BasicVar<T>*> inputs, const OpAttrs& attrs = {});

template <std::floating_point T>
class BasicTape {
 public:
  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  /// New leaf holding `v`'s value.
  BasicVar<T> leaf(const BasicVar<T>& v);
  BasicVar<T> leaf(BasicTensor<T> v) { return leaf(BasicVar<T>(std::move(v))); }

  /// Runs the registered op `name` and appends its node. Throws ArgumentError
  /// for unknown names.
  BasicVar<T> record(std::string_view name, std::span<const BasicVar<T>> inputs, const OpAttrs& attrs = {});

  /// Reverse pass from a single-element loss.
  GradientMap<T> backward(const BasicVar<T>& loss) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const TapeNode<T>& node(NodeId id) const { return nodes_.at(id); }

  /// Appends a fully formed node; used by apply().
  BasicVar<T> append(TapeNode<T> node);

 private:
  std::vector<TapeNode<T>> nodes_;
};

using Var = BasicVar<float>;
using VarD = BasicVar<double>;
using Tape = BasicTape<float>;
using TapeD = BasicTape<double>;

// ---------------------------------------------------------------------------
// Differentiable ops.

template <std::floating_point T>
BasicVar<T> operator+(const BasicVar<T>& a, const BasicVar<T>& b) {
  return apply<T>(OpKind::add, {&a, &b});
}
template <std::floating_point T>
BasicVar<T> operator-(const BasicVar<T>& a, const BasicVar<T>& b) {
  return apply<T>(OpKind::sub, {&a, &b});
}
template <std::floating_point T>
BasicVar<T> operator*(const BasicVar<T>& a, const BasicVar<T>& b) {
  return apply<T>(OpKind::mul, {&a, &b});
}

/// scale * x + shift
template <std::floating_point T>
BasicVar<T> affine(const BasicVar<T>& x, double scale, double shift = 0.0) {
  OpAttrs at;
  at.scale = scale;
  at.shift = shift;
  return apply<T>(OpKind::affine, {&x}, at);
}

template <std::floating_point T>
BasicVar<T> sum_all(const BasicVar<T>& x) {
  return apply<T>(OpKind::sum_all, {&x});
}
template <std::floating_point T>
BasicVar<T> mean_all(const BasicVar<T>& x) {
  return apply<T>(OpKind::mean_all, {&x});
}

template <std::floating_point T>
BasicVar<T> matmul(const BasicVar<T>& a, const BasicVar<T>& b, bool trans_a = false, bool trans_b = false) {
  OpAttrs at;
  at.trans_a = trans_a;
  at.trans_b = trans_b;
  return apply<T>(OpKind::matmul, {&a, &b}, at);
}

template <std::floating_point T>
BasicVar<T> transpose_last2(const BasicVar<T>& x) {
  return apply<T>(OpKind::transpose_last2, {&x});
}

template <std::floating_point T>
BasicVar<T> reshape(const BasicVar<T>& x, const Shape& s) {
  OpAttrs at;
  at.shape = s;
  return apply<T>(OpKind::reshape, {&x}, at);
}

/// Runs in place when `x` is untracked and is the only owner of its value.
template <std::floating_point T>
BasicVar<T> softmax_rows(BasicVar<T> x);

template <std::floating_point T>
BasicVar<T> softmax_channels(const BasicVar<T>& x) {
  return apply<T>(OpKind::softmax_channels, {&x});
}
template <std::floating_point T>
BasicVar<T> sigmoid(const BasicVar<T>& x) {
  return apply<T>(OpKind::sigmoid, {&x});
}
template <std::floating_point T>
BasicVar<T> relu(const BasicVar<T>& x) {
  return apply<T>(OpKind::relu, {&x});
}
template <std::floating_point T>
BasicVar<T> clamp(const BasicVar<T>& x, double lo, double hi) {
  OpAttrs at;
  at.lo = lo;
  at.hi = hi;
  return apply<T>(OpKind::clamp, {&x}, at);
}

/// Valid convolution; pass an undefined `bias` for none.
template <std::floating_point T>
BasicVar<T> conv2d(const BasicVar<T>& x, const BasicVar<T>& kernel, const BasicVar<T>& bias, std::size_t stride = 1) {
  OpAttrs at;
  at.stride = stride;
  if (!bias.defined()) return apply<T>(OpKind::conv2d, {&x, &kernel}, at);
  return apply<T>(OpKind::conv2d, {&x, &kernel, &bias}, at);
}

template <std::floating_point T>
BasicVar<T> depthwise_conv2d(const BasicVar<T>& x, const BasicVar<T>& kernel) {
  return apply<T>(OpKind::depthwise_conv2d, {&x, &kernel});
}

template <std::floating_point T>
BasicVar<T> pad2d(const BasicVar<T>& x, std::size_t p, kernels::PadMode mode) {
  OpAttrs at;
  at.pad = p;
  at.pad_mode = mode;
  return apply<T>(OpKind::pad2d, {&x}, at);
}
template <std::floating_point T>
BasicVar<T> reflect_pad(const BasicVar<T>& x, std::size_t p) {
  return pad2d(x, p, kernels::PadMode::reflect);
}

template <std::floating_point T>
BasicVar<T> upsample_nearest2x(const BasicVar<T>& x) {
  return apply<T>(OpKind::upsample_nearest2x, {&x});
}
template <std::floating_point T>
BasicVar<T> avg_pool2x2(const BasicVar<T>& x) {
  return apply<T>(OpKind::avg_pool2x2, {&x});
}
template <std::floating_point T>
BasicVar<T> max_pool2x2(const BasicVar<T>& x) {
  return apply<T>(OpKind::max_pool2x2, {&x});
}

template <std::floating_point T>
BasicVar<T> pool_global(const BasicVar<T>& x, kernels::PoolKind kind) {
  OpAttrs at;
  at.pool = kind;
  return apply<T>(OpKind::pool_global, {&x}, at);
}

template <std::floating_point T>
BasicVar<T> channel_norm(const BasicVar<T>& x, double eps = kernels::kDefaultEps) {
  OpAttrs at;
  at.eps = eps;
  return apply<T>(OpKind::channel_norm, {&x}, at);
}

template <std::floating_point T>
BasicVar<T> moment(const BasicVar<T>& x, kernels::Moment which, double eps) {
  OpAttrs at;
  at.moment = which;
  at.eps = eps;
  return apply<T>(OpKind::moment, {&x}, at);
}

template <std::floating_point T>
BasicVar<T> cosine_lambda(const BasicVar<T>& a, const BasicVar<T>& b) {
  return apply<T>(OpKind::cosine_lambda, {&a, &b});
}

template <std::floating_point T>
BasicVar<T> l2norm_per_sample(const BasicVar<T>& x) {
  return apply<T>(OpKind::l2norm_per_sample, {&x});
}

template <std::floating_point T>
BasicVar<T> bce_logits_mean(const BasicVar<T>& x, double target, double limit = 20.0) {
  OpAttrs at;
  at.target = target;
  at.limit = limit;
  return apply<T>(OpKind::bce_logits_mean, {&x}, at);
}

}  // namespace hsi
