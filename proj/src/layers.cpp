#include "hsi/layers.hpp"

#include <cmath>

namespace hsi {

template <std::floating_point T>
void BasicConvWeights<T>::validate() const {
  if (!kernel.defined() || !bias.defined()) throw ShapeError("conv weights: kernel and bias are required");
  const Shape& ks = kernel.shape();
  require_rank4(ks, "conv kernel");
  if (bias.shape() != Shape{ks.n()})
    throw ShapeError("conv weights: bias " + bias.shape().str() + " does not match kernel " + ks.str());
  switch (kind) {
    case ConvKind::pointwise_1x1:
      if (ks.h() != 1 || ks.w() != 1) throw ShapeError("conv weights: pointwise kernel must be 1x1, got " + ks.str());
      break;
    case ConvKind::depthwise_separable_3x3:
      if (ks.h() != 1 || ks.w() != 1)
        throw ShapeError("conv weights: depthwise-separable point kernel must be 1x1, got " + ks.str());
      if (!depth.defined() || depth.shape() != Shape{ks.c(), 1, 3, 3})
        throw ShapeError("conv weights: depthwise-separable needs a (" + std::to_string(ks.c()) + ",1,3,3) depth kernel");
      break;
    case ConvKind::dense:
      if (ks.h() != ks.w()) throw ShapeError("conv weights: kernel must be square, got " + ks.str());
      break;
  }
}

template <std::floating_point T>
BasicConvWeights<T> make_conv_zero(ConvKind kind, std::size_t in_ch, std::size_t out_ch, std::size_t k,
                                   std::size_t stride, kernels::PadMode pad) {
  BasicConvWeights<T> w;
  w.kind = kind;
  w.stride = kind == ConvKind::dense ? stride : 1;
  w.pad_mode = pad;
  const std::size_t kk = kind == ConvKind::dense ? k : 1;
  w.kernel = BasicTensor<T>(Shape{out_ch, in_ch, kk, kk});
  w.bias = BasicTensor<T>(Shape{out_ch});
  if (kind == ConvKind::depthwise_separable_3x3) w.depth = BasicTensor<T>(Shape{in_ch, 1, 3, 3});
  return w;
}

namespace {
template <class T>
BasicTensor<T> uniform(const Shape& s, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  BasicTensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}
}  // namespace

template <std::floating_point T>
BasicConvWeights<T> make_conv(ConvKind kind, std::size_t in_ch, std::size_t out_ch, Rng& rng, std::size_t k,
                              std::size_t stride, kernels::PadMode pad) {
  auto w = make_conv_zero<T>(kind, in_ch, out_ch, k, stride, pad);
  if (kind == ConvKind::depthwise_separable_3x3) w.depth = uniform<T>(w.depth.shape(), std::sqrt(6.0 / 9.0), rng);
  const Shape& ks = w.kernel.shape();
  const double fan_in = double(ks.c() * ks.h() * ks.w());
  w.kernel = uniform<T>(ks, std::sqrt(6.0 / fan_in), rng);
  // Nonzero biases: after channel norm the pooled Q and K are exactly the
  // f_q and f_k biases, so zero biases leave the relation cosine undefined.
  w.bias = uniform<T>(w.bias.shape(), 1.0 / std::sqrt(fan_in), rng);
  return w;
}

template <std::floating_point T>
BasicVar<T> apply_conv(const BasicVar<T>& x, const BasicConvWeights<T>& w) {
  require_rank4(x.shape(), "conv2d");
  if (x.shape().c() != w.in_channels())
    throw ShapeError("conv2d: channel mismatch, input " + x.shape().str() + " vs weights expecting " +
                     std::to_string(w.in_channels()) + " channels");
  switch (w.kind) {
    case ConvKind::pointwise_1x1: return conv2d(x, w.kernel, w.bias);
    case ConvKind::depthwise_separable_3x3:
      return conv2d(depthwise_conv2d(reflect_pad(x, 1), w.depth), w.kernel, w.bias);
    case ConvKind::dense: {
      const std::size_t p = w.kernel.shape().h() / 2;
      return conv2d(p ? pad2d(x, p, w.pad_mode) : x, w.kernel, w.bias, w.stride);
    }
  }
  throw ArgumentError("conv2d: unknown kind");
}

#define HSI_INSTANTIATE_LAYERS(T)                                                                              \
  template struct BasicConvWeights<T>;                                                                         \
  template BasicConvWeights<T> make_conv<T>(ConvKind, std::size_t, std::size_t, Rng&, std::size_t, std::size_t, \
                                            kernels::PadMode);                                                 \
  template BasicConvWeights<T> make_conv_zero<T>(ConvKind, std::size_t, std::size_t, std::size_t, std::size_t,  \
                                                 kernels::PadMode);                                            \
  template BasicVar<T> apply_conv<T>(const BasicVar<T>&, const BasicConvWeights<T>&);

HSI_INSTANTIATE_LAYERS(float)
HSI_INSTANTIATE_LAYERS(double)

#undef HSI_INSTANTIATE_LAYERS

}  // namespace hsi
