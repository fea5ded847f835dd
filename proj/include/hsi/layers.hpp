#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "hsi/autograd.hpp"

namespace hsi {

enum class ConvKind {
  pointwise_1x1,
  depthwise_separable_3x3,  // reflect pad 1, depth 3x3, then pointwise 1x1 with bias
  dense,                    // k x k with `pad_mode` padding of k/2 and `stride`
};

using Rng = std::mt19937_64;

template <std::floating_point T>
struct BasicConvWeights {
  ConvKind kind = ConvKind::pointwise_1x1;
  BasicVar<T> kernel;  // (Co, Ci, k, k); the point kernel for depthwise-separable
  BasicVar<T> depth;   // (Ci, 1, 3, 3), depthwise-separable only
  BasicVar<T> bias;    // (Co)
  std::size_t stride = 1;
  kernels::PadMode pad_mode = kernels::PadMode::reflect;

  std::size_t in_channels() const { return kernel.shape().c(); }
  std::size_t out_channels() const { return kernel.shape().n(); }

  /// Throws ShapeError when the tensors disagree with `kind`.
  void validate() const;

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    if (kind == ConvKind::depthwise_separable_3x3) f(prefix + ".depth", depth);
    f(prefix + ".kernel", kernel);
    f(prefix + ".bias", bias);
  }
  template <class F>
  void for_each_param(F&& f) {
    for_each_param(std::string("conv"), f);
  }

  template <std::floating_point U>
  BasicConvWeights<U> cast() const {
    BasicConvWeights<U> o;
    o.kind = kind;
    o.kernel = kernel.value().template cast<U>();
    if (depth.defined()) o.depth = depth.value().template cast<U>();
    o.bias = bias.value().template cast<U>();
    o.stride = stride;
    o.pad_mode = pad_mode;
    return o;
  }
};

using ConvWeights = BasicConvWeights<float>;

/// Kernels U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)), biases U(-1 / sqrt(fan_in), +1 / sqrt(fan_in)).
template <std::floating_point T>
BasicConvWeights<T> make_conv(ConvKind kind, std::size_t in_ch, std::size_t out_ch, Rng& rng, std::size_t k = 3,
                              std::size_t stride = 1, kernels::PadMode pad = kernels::PadMode::reflect);

template <std::floating_point T>
BasicConvWeights<T> make_conv_zero(ConvKind kind, std::size_t in_ch, std::size_t out_ch, std::size_t k = 3,
                                   std::size_t stride = 1, kernels::PadMode pad = kernels::PadMode::reflect);

/// Output keeps H and W except for dense convs with stride > 1.
template <std::floating_point T>
BasicVar<T> apply_conv(const BasicVar<T>& x, const BasicConvWeights<T>& w);

}  // namespace hsi
