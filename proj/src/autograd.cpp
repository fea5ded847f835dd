#include "hsi/autograd.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace hsi {
namespace k = kernels;

namespace {

struct OpInfo {
  std::string_view name;
  std::size_t min_arity;
  std::size_t max_arity;
};

// Indexed by OpKind.
constexpr std::array<OpInfo, 27> kOps{{
    {"leaf", 0, 0},
    {"add", 2, 2},
    {"sub", 2, 2},
    {"mul", 2, 2},
    {"affine", 1, 1},
    {"sum_all", 1, 1},
    {"mean_all", 1, 1},
    {"matmul", 2, 2},
    {"transpose_last2", 1, 1},
    {"reshape", 1, 1},
    {"softmax_rows", 1, 1},
    {"softmax_channels", 1, 1},
    {"sigmoid", 1, 1},
    {"relu", 1, 1},
    {"clamp", 1, 1},
    {"conv2d", 2, 3},
    {"depthwise_conv2d", 2, 2},
    {"pad2d", 1, 1},
    {"upsample_nearest2x", 1, 1},
    {"avg_pool2x2", 1, 1},
    {"max_pool2x2", 1, 1},
    {"pool_global", 1, 1},
    {"channel_norm", 1, 1},
    {"moment", 1, 1},
    {"cosine_lambda", 2, 2},
    {"l2norm_per_sample", 1, 1},
    {"bce_logits_mean", 1, 1},
}};

const OpInfo& info(OpKind kind) { return kOps[static_cast<std::size_t>(kind)]; }

template <class T>
using Inputs = std::span<const BasicTensor<T>* const>;

template <class T>
BasicTensor<T> forward(OpKind kind, Inputs<T> in, const OpAttrs& at) {
  const auto& x = *in[0];
  switch (kind) {
    case OpKind::add: return k::broadcast_binary(x, *in[1], k::BinaryKind::add);
    case OpKind::sub: return k::broadcast_binary(x, *in[1], k::BinaryKind::sub);
    case OpKind::mul: return k::broadcast_binary(x, *in[1], k::BinaryKind::mul);
    case OpKind::affine: return k::affine(x, at.scale, at.shift);
    case OpKind::sum_all: return k::sum_all(x);
    case OpKind::mean_all: {
      auto s = k::sum_all(x);
      s[0] = static_cast<T>(double(s[0]) / double(x.numel()));
      return s;
    }
    case OpKind::matmul: return k::matmul(x, *in[1], at.trans_a, at.trans_b);
    case OpKind::transpose_last2: return k::transpose_last2(x);
    case OpKind::reshape: return x.reshaped(at.shape);
    case OpKind::softmax_rows: return k::softmax_rows(x);
    case OpKind::softmax_channels: return k::softmax_channels(x);
    case OpKind::sigmoid: return k::sigmoid(x);
    case OpKind::relu: return k::relu(x);
    case OpKind::clamp: return k::clamp(x, at.lo, at.hi);
    case OpKind::conv2d: {
      static const BasicTensor<T> no_bias;
      return k::conv2d(x, *in[1], in.size() > 2 ? *in[2] : no_bias, at.stride);
    }
    case OpKind::depthwise_conv2d: return k::depthwise_conv2d(x, *in[1]);
    case OpKind::pad2d: return k::pad2d(x, at.pad, at.pad_mode);
    case OpKind::upsample_nearest2x: return k::upsample_nearest2x(x);
    case OpKind::avg_pool2x2: return k::avg_pool2x2(x);
    case OpKind::max_pool2x2: return k::max_pool2x2(x);
    case OpKind::pool_global: return k::pool_global(x, at.pool);
    case OpKind::channel_norm: return k::channel_norm(x, at.eps);
    case OpKind::moment: return k::moment(x, at.moment, at.eps);
    case OpKind::cosine_lambda: return k::cosine_lambda(x, *in[1]);
    case OpKind::l2norm_per_sample: return k::l2norm_per_sample(x);
    case OpKind::bce_logits_mean: return k::bce_logits_mean(x, at.target, at.limit);
    case OpKind::leaf: break;
  }
  throw ArgumentError("autograd: op has no forward");
}

template <class T>
BasicTensor<T> scaled(const BasicTensor<T>& g, double s) {
  return k::affine(g, s, 0.0);
}

// Input gradients of one node; entries for operands in `skip` may be empty.
template <class T>
std::vector<BasicTensor<T>> backward_node(const TapeNode<T>& node, const BasicTensor<T>& g) {
  const auto& in = node.saved;
  const auto need = [&](std::size_t i) { return node.inputs[i] != kNoNode; };
  const OpAttrs& at = node.attrs;
  std::vector<BasicTensor<T>> out(in.size());
  const auto& x = *in[0];
  switch (node.kind) {
    case OpKind::add:
    case OpKind::sub:
      if (need(0)) out[0] = k::reduce_to_shape(g, x.shape());
      if (need(1)) {
        out[1] = k::reduce_to_shape(g, in[1]->shape());
        if (node.kind == OpKind::sub) out[1] = scaled(out[1], -1.0);
      }
      break;
    case OpKind::mul:
      if (need(0)) out[0] = k::reduce_to_shape(k::broadcast_binary(g, *in[1], k::BinaryKind::mul), x.shape());
      if (need(1)) out[1] = k::reduce_to_shape(k::broadcast_binary(g, x, k::BinaryKind::mul), in[1]->shape());
      break;
    case OpKind::affine: out[0] = scaled(g, at.scale); break;
    case OpKind::sum_all: out[0] = BasicTensor<T>(x.shape(), g[0]); break;
    case OpKind::mean_all: out[0] = BasicTensor<T>(x.shape(), static_cast<T>(double(g[0]) / double(x.numel()))); break;
    case OpKind::matmul: {
      const auto& b = *in[1];
      const bool ta = at.trans_a, tb = at.trans_b;
      if (need(0)) {
        if (!ta) out[0] = tb ? k::matmul(g, b) : k::matmul(g, b, false, true);
        else out[0] = tb ? k::matmul(b, g, true, true) : k::matmul(b, g, false, true);
      }
      if (need(1)) {
        if (!tb) out[1] = ta ? k::matmul(x, g) : k::matmul(x, g, true, false);
        else out[1] = ta ? k::matmul(g, x, true, true) : k::matmul(g, x, true, false);
      }
      break;
    }
    case OpKind::transpose_last2: out[0] = k::transpose_last2(g); break;
    case OpKind::reshape: out[0] = g.reshaped(x.shape()); break;
    case OpKind::softmax_rows: out[0] = k::softmax_rows_backward(*node.value, g); break;
    case OpKind::softmax_channels: out[0] = k::softmax_channels_backward(*node.value, g); break;
    case OpKind::sigmoid: out[0] = k::sigmoid_backward(*node.value, g); break;
    case OpKind::relu: out[0] = k::relu_backward(x, g); break;
    case OpKind::clamp: out[0] = k::clamp_backward(x, g, at.lo, at.hi); break;
    case OpKind::conv2d: {
      const bool with_bias = in.size() > 2 && need(2);
      auto r = k::conv2d_backward(x, *in[1], g, at.stride, with_bias, need(1), need(0));
      out[0] = std::move(r.input);
      out[1] = std::move(r.kernel);
      if (in.size() > 2) out[2] = std::move(r.bias);
      break;
    }
    case OpKind::depthwise_conv2d: {
      auto r = k::depthwise_conv2d_backward(x, *in[1], g);
      out[0] = std::move(r.input);
      out[1] = std::move(r.kernel);
      break;
    }
    case OpKind::pad2d: out[0] = k::pad2d_backward(g, at.pad, at.pad_mode); break;
    case OpKind::upsample_nearest2x: out[0] = k::upsample_nearest2x_backward(g); break;
    case OpKind::avg_pool2x2: out[0] = k::avg_pool2x2_backward(g); break;
    case OpKind::max_pool2x2: out[0] = k::max_pool2x2_backward(x, g); break;
    case OpKind::pool_global: out[0] = k::pool_global_backward(x, g, at.pool); break;
    case OpKind::channel_norm: out[0] = k::channel_norm_backward(x, g, at.eps); break;
    case OpKind::moment: out[0] = k::moment_backward(x, g, at.moment, at.eps); break;
    case OpKind::cosine_lambda: {
      auto [da, db] = k::cosine_lambda_backward(x, *in[1], g);
      out[0] = std::move(da);
      out[1] = std::move(db);
      break;
    }
    case OpKind::l2norm_per_sample: out[0] = k::l2norm_per_sample_backward(x, *node.value, g); break;
    case OpKind::bce_logits_mean: out[0] = k::bce_logits_mean_backward(x, g, at.target, at.limit); break;
    case OpKind::leaf: break;
  }
  return out;
}

std::size_t spatial_extent(const Shape& s) { return s.rank() == 4 ? s.h() * s.w() : s.numel(); }

template <class T>
void accumulate(BasicTensor<T>& into, BasicTensor<T>&& g) {
  if (into.empty()) {
    into = std::move(g);
    return;
  }
  for (std::size_t i = 0; i < into.numel(); ++i) into[i] += g[i];
}

}  // namespace

std::string_view op_name(OpKind kind) noexcept { return info(kind).name; }

template <std::floating_point T>
OpCost op_cost(OpKind kind, std::span<const BasicTensor<T>* const> in, const BasicTensor<T>& out, const OpAttrs& at) {
  OpCost c;
  std::size_t hw = spatial_extent(out.shape());
  for (const auto* t : in) hw = std::max(hw, spatial_extent(t->shape()));
  c.cls = hw == 1 ? CostClass::constant : CostClass::spatial;
  const std::uint64_t n_out = out.numel();
  const std::uint64_t n_in = in.empty() ? 0 : in[0]->numel();
  switch (kind) {
    case OpKind::add:
    case OpKind::sub: c.adds = n_out; break;
    case OpKind::mul:
    case OpKind::affine: c.macs = n_out; break;
    case OpKind::sum_all:
    case OpKind::mean_all: c.adds = n_in; break;
    case OpKind::matmul: {
      c.cls = CostClass::pairwise;
      const Shape& a = in[0]->shape();
      const std::uint64_t inner = at.trans_a ? a[a.rank() - 2] : a[a.rank() - 1];
      c.macs = n_out * inner;
      break;
    }
    case OpKind::conv2d: {
      const Shape& ks = in[1]->shape();
      c.macs = n_out * ks.c() * ks.h() * ks.w();
      break;
    }
    case OpKind::depthwise_conv2d: {
      const Shape& ks = in[1]->shape();
      c.macs = n_out * ks.h() * ks.w();
      break;
    }
    case OpKind::avg_pool2x2: c.adds = n_in; break;
    case OpKind::pool_global:
      if (at.pool == k::PoolKind::avg) c.adds = n_in;
      break;
    case OpKind::channel_norm:
      c.macs = 2 * n_in;
      c.adds = n_in;
      break;
    case OpKind::moment:
      c.adds = n_in;
      switch (at.moment) {
        case k::Moment::mean: break;
        case k::Moment::std: c.macs = n_in; break;
        case k::Moment::skew: c.macs = 4 * n_in; break;
        case k::Moment::kurt: c.macs = 5 * n_in; break;
      }
      break;
    case OpKind::cosine_lambda: c.macs = 3 * n_in; break;
    case OpKind::l2norm_per_sample:
    case OpKind::bce_logits_mean: c.macs = n_in; break;
    default: break;
  }
  return c;
}

template <std::floating_point T>
BasicVar<T> apply(OpKind kind, std::initializer_list<const BasicVar<T>*> inputs, const OpAttrs& attrs) {
  const OpInfo& oi = info(kind);
  if (kind == OpKind::leaf || inputs.size() < oi.min_arity || inputs.size() > oi.max_arity)
    throw ArgumentError(std::string("autograd: wrong operand count for ") + std::string(oi.name));
  BasicTape<T>* tape = nullptr;
  std::array<const BasicTensor<T>*, 3> vals{};
  std::size_t i = 0;
  for (const BasicVar<T>* v : inputs) {
    if (!v->defined()) throw ArgumentError(std::string("autograd: undefined operand for ") + std::string(oi.name));
    if (v->tracked()) {
      if (tape && tape != v->tape())
        throw ArgumentError(std::string("autograd: operands of ") + std::string(oi.name) + " live on different tapes");
      tape = v->tape();
    }
    vals[i++] = &v->value();
  }
  const std::span<const BasicTensor<T>* const> in(vals.data(), inputs.size());
  auto out = std::make_shared<BasicTensor<T>>(forward<T>(kind, in, attrs));
  if (MacScope::active()) {
    const OpCost c = op_cost<T>(kind, in, *out, attrs);
    MacScope::record(c.cls, c.macs, c.adds);
  }
  if (!tape) return BasicVar<T>(ValuePtr<T>(std::move(out)));
  TapeNode<T> node;
  node.kind = kind;
  node.attrs = attrs;
  for (const BasicVar<T>* v : inputs) {
    node.inputs.push_back(v->tracked() ? v->id() : kNoNode);
    node.saved.push_back(v->value_ptr());
  }
  node.value = std::move(out);
  return tape->append(std::move(node));
}

template <std::floating_point T>
BasicVar<T> softmax_rows(BasicVar<T> x) {
  if (!x.defined()) throw ArgumentError("autograd: undefined operand for softmax_rows");
  if (x.tracked() || x.value_ptr().use_count() != 1) return apply<T>(OpKind::softmax_rows, {&x});
  // Sole owner of a value that was created mutable; overwrite it.
  auto& v = const_cast<BasicTensor<T>&>(x.value());
  k::softmax_rows_inplace(v);
  return x;
}

template <std::floating_point T>
BasicVar<T> BasicTape<T>::append(TapeNode<T> node) {
  if (nodes_.size() >= kNoNode) throw Error("autograd: tape is full");
  const auto id = static_cast<NodeId>(nodes_.size());
  ValuePtr<T> value = node.value;
  nodes_.push_back(std::move(node));
  return BasicVar<T>(std::move(value), this, id);
}

template <std::floating_point T>
BasicVar<T> BasicTape<T>::leaf(const BasicVar<T>& v) {
  if (!v.defined()) throw ArgumentError("autograd: leaf needs a value");
  TapeNode<T> node;
  node.value = v.value_ptr();
  return append(std::move(node));
}

template <std::floating_point T>
BasicVar<T> BasicTape<T>::record(std::string_view name, std::span<const BasicVar<T>> inputs, const OpAttrs& attrs) {
  std::size_t idx = 1;
  while (idx < kOps.size() && kOps[idx].name != name) ++idx;
  if (idx == kOps.size()) throw ArgumentError("autograd: no differentiable op named '" + std::string(name) + "'");
  const auto kind = static_cast<OpKind>(idx);
  for (const auto& v : inputs)
    if (v.tracked() && v.tape() != this)
      throw ArgumentError("autograd: operand of " + std::string(name) + " belongs to another tape");
  // Untracked operands become leaves so the node lands on this tape.
  std::vector<BasicVar<T>> bound;
  for (const auto& v : inputs) bound.push_back(v.tracked() ? v : leaf(v));
  switch (bound.size()) {
    case 1: return apply<T>(kind, {&bound[0]}, attrs);
    case 2: return apply<T>(kind, {&bound[0], &bound[1]}, attrs);
    case 3: return apply<T>(kind, {&bound[0], &bound[1], &bound[2]}, attrs);
    default: throw ArgumentError("autograd: wrong operand count for " + std::string(name));
  }
}

template <std::floating_point T>
GradientMap<T> BasicTape<T>::backward(const BasicVar<T>& loss) const {
  if (loss.tape() != this) throw ArgumentError("backward: loss was not recorded on this tape");
  if (loss.value().numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " + loss.shape().str());
  std::vector<BasicTensor<T>> grads(loss.id() + 1);
  grads[loss.id()] = BasicTensor<T>(loss.shape(), T(1));
  GradientMap<T> result;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (grads[i].empty()) continue;
    const TapeNode<T>& node = nodes_[i];
    if (node.kind == OpKind::leaf) {
      result.grads_.emplace(static_cast<NodeId>(i), std::move(grads[i]));
      continue;
    }
    auto in_grads = backward_node(node, grads[i]);
    grads[i] = BasicTensor<T>();
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      if (node.inputs[j] == kNoNode || in_grads[j].empty()) continue;
      accumulate(grads[node.inputs[j]], std::move(in_grads[j]));
    }
  }
  return result;
}

#define HSI_INSTANTIATE_AUTOGRAD(T)                                                                         \
  template OpCost op_cost<T>(OpKind, std::span<const BasicTensor<T>* const>, const BasicTensor<T>&,         \
                             const OpAttrs&);                                                               \
  template BasicVar<T> apply<T>(OpKind, std::initializer_list<const BasicVar<T>*>, const OpAttrs&);         \
  template BasicVar<T> softmax_rows<T>(BasicVar<T>);                                                        \
  template class BasicTape<T>;

HSI_INSTANTIATE_AUTOGRAD(float)
HSI_INSTANTIATE_AUTOGRAD(double)

#undef HSI_INSTANTIATE_AUTOGRAD

}  // namespace hsi
