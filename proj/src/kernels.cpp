#include "hsi/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace hsi::kernels {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Rank-padded view of a shape: leading axes filled with 1.
std::array<std::size_t, 4> dims4(const Shape& s) {
  std::array<std::size_t, 4> d{1, 1, 1, 1};
  const std::size_t off = 4 - s.rank();
  for (std::size_t i = 0; i < s.rank(); ++i) d[off + i] = s[i];
  return d;
}

std::array<std::size_t, 4> broadcast_strides(const std::array<std::size_t, 4>& d) {
  std::array<std::size_t, 4> st{};
  std::size_t acc = 1;
  for (int i = 3; i >= 0; --i) {
    st[i] = d[i] == 1 ? 0 : acc;
    acc *= d[i];
  }
  return st;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": shape " + a.str() + " does not match " + b.str());
}

void require_even_spatial(const Shape& s, const char* what) {
  require_rank4(s, what);
  if (s.h() % 2 || s.w() % 2) throw ShapeError(std::string(what) + ": H and W must be even, got " + s.str());
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.rank() != b.rank())
    throw ShapeError("broadcast: shape-mismatch between " + a.str() + " and " + b.str());
  std::array<std::size_t, 4> out{};
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1)
      throw ShapeError("broadcast: shape-mismatch between " + a.str() + " and " + b.str());
    out[i] = std::max(a[i], b[i]);
  }
  return Shape(std::span<const std::size_t>(out.data(), a.rank()));
}

template <std::floating_point T>
BasicTensor<T> broadcast_binary(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryKind kind) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  BasicTensor<T> out(out_shape);
  const auto od = dims4(out_shape);
  const auto sa = broadcast_strides(dims4(a.shape()));
  const auto sb = broadcast_strides(dims4(b.shape()));
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  std::size_t o = 0;
  for (std::size_t i0 = 0; i0 < od[0]; ++i0)
    for (std::size_t i1 = 0; i1 < od[1]; ++i1)
      for (std::size_t i2 = 0; i2 < od[2]; ++i2) {
        const std::size_t ba = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
        const std::size_t bb = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
        for (std::size_t i3 = 0; i3 < od[3]; ++i3, ++o) {
          const T x = pa[ba + i3 * sa[3]];
          const T y = pb[bb + i3 * sb[3]];
          switch (kind) {
            case BinaryKind::add: po[o] = x + y; break;
            case BinaryKind::sub: po[o] = x - y; break;
            case BinaryKind::mul: po[o] = x * y; break;
          }
        }
      }
  return out;
}

template <std::floating_point T>
BasicTensor<T> reduce_to_shape(const BasicTensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  if (broadcast_shape(g.shape(), target) != g.shape())
    throw ShapeError("reduce_to_shape: " + target.str() + " is not a broadcast source of " + g.shape().str());
  std::vector<double> acc(target.numel(), 0.0);
  const auto gd = dims4(g.shape());
  const auto st = broadcast_strides(dims4(target));
  std::size_t o = 0;
  for (std::size_t i0 = 0; i0 < gd[0]; ++i0)
    for (std::size_t i1 = 0; i1 < gd[1]; ++i1)
      for (std::size_t i2 = 0; i2 < gd[2]; ++i2) {
        const std::size_t base = i0 * st[0] + i1 * st[1] + i2 * st[2];
        for (std::size_t i3 = 0; i3 < gd[3]; ++i3, ++o) acc[base + i3 * st[3]] += g[o];
      }
  BasicTensor<T> out(target);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
  return out;
}

template <std::floating_point T>
BasicTensor<T> affine(const BasicTensor<T>& x, double scale, double shift) {
  BasicTensor<T> out(x.shape());
  const T s = static_cast<T>(scale), b = static_cast<T>(shift);
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = s * x[i] + b;
  return out;
}

template <std::floating_point T>
BasicTensor<T> sum_all(const BasicTensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  return BasicTensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(acc));
}

// ---------------------------------------------------------------------------
// Matrices.

template <std::floating_point T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool trans_a, bool trans_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() != sb.rank() || (sa.rank() != 2 && sa.rank() != 3))
    throw ShapeError("matmul: expected two rank-2 or two rank-3 operands, got " + sa.str() + " and " + sb.str());
  const bool batched = sa.rank() == 3;
  const std::size_t batch = batched ? sa[0] : 1;
  if (batched && sb[0] != batch) throw ShapeError("matmul: batch mismatch " + sa.str() + " vs " + sb.str());
  const std::size_t ar = sa[sa.rank() - 2], ac = sa[sa.rank() - 1];
  const std::size_t br = sb[sb.rank() - 2], bc = sb[sb.rank() - 1];
  const std::size_t rows = trans_a ? ac : ar, inner = trans_a ? ar : ac;
  const std::size_t inner_b = trans_b ? bc : br, cols = trans_b ? br : bc;
  if (inner != inner_b)
    throw ShapeError("matmul: inner dimensions differ for " + sa.str() + " x " + sb.str());
  BasicTensor<T> out(batched ? Shape{batch, rows, cols} : Shape{rows, cols});
  for (std::size_t n = 0; n < batch; ++n) {
    ConstMapMat<T> A(a.raw() + n * ar * ac, ar, ac);
    ConstMapMat<T> B(b.raw() + n * br * bc, br, bc);
    MapMat<T> C(out.raw() + n * rows * cols, rows, cols);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> transpose_last2(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  if (s.rank() != 2 && s.rank() != 3) throw ShapeError("transpose: expected rank 2 or 3, got " + s.str());
  const bool batched = s.rank() == 3;
  const std::size_t batch = batched ? s[0] : 1, r = s[s.rank() - 2], c = s[s.rank() - 1];
  BasicTensor<T> out(batched ? Shape{batch, c, r} : Shape{c, r});
  for (std::size_t n = 0; n < batch; ++n) {
    ConstMapMat<T> X(x.raw() + n * r * c, r, c);
    MapMat<T> Y(out.raw() + n * r * c, c, r);
    Y = X.transpose();
  }
  return out;
}

template <std::floating_point T>
void softmax_rows_inplace(BasicTensor<T>& x) {
  const Shape& s = x.shape();
  const std::size_t len = s[s.rank() - 1];
  MapMat<T> m(x.raw(), x.numel() / len, len);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r).array();
    row = (row - row.maxCoeff()).exp();
    const double sum = row.template cast<double>().sum();
    row *= static_cast<T>(1.0 / sum);
  }
}

template <std::floating_point T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x) {
  BasicTensor<T> out(x);
  softmax_rows_inplace(out);
  return out;
}

template <std::floating_point T>
BasicTensor<T> softmax_rows_backward(const BasicTensor<T>& y, const BasicTensor<T>& g) {
  require_same_shape(y.shape(), g.shape(), "softmax_rows_backward");
  const std::size_t len = y.shape()[y.shape().rank() - 1];
  const std::size_t rows = y.numel() / len;
  BasicTensor<T> dx(y.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * len;
    double dot = 0.0;
    for (std::size_t j = 0; j < len; ++j) dot += double(g[o + j]) * y[o + j];
    for (std::size_t j = 0; j < len; ++j) dx[o + j] = static_cast<T>(y[o + j] * (g[o + j] - dot));
  }
  return dx;
}

template <std::floating_point T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  require_rank4(s, "softmax_channels");
  const std::size_t C = s.c(), HW = s.h() * s.w();
  BasicTensor<T> out(s);
  std::vector<double> buf(C);
  for (std::size_t n = 0; n < s.n(); ++n) {
    const std::size_t base = n * C * HW;
    for (std::size_t p = 0; p < HW; ++p) {
      T mx = x[base + p];
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, x[base + c * HW + p]);
      double sum = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        buf[c] = std::exp(double(x[base + c * HW + p]) - mx);
        sum += buf[c];
      }
      for (std::size_t c = 0; c < C; ++c) out[base + c * HW + p] = static_cast<T>(buf[c] / sum);
    }
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& y, const BasicTensor<T>& g) {
  require_same_shape(y.shape(), g.shape(), "softmax_channels_backward");
  const Shape& s = y.shape();
  const std::size_t C = s.c(), HW = s.h() * s.w();
  BasicTensor<T> dx(s);
  for (std::size_t n = 0; n < s.n(); ++n) {
    const std::size_t base = n * C * HW;
    for (std::size_t p = 0; p < HW; ++p) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += double(g[base + c * HW + p]) * y[base + c * HW + p];
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = base + c * HW + p;
        dx[i] = static_cast<T>(y[i] * (g[i] - dot));
      }
    }
  }
  return dx;
}

template <std::floating_point T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = static_cast<T>(1.0 / (1.0 + std::exp(-double(x[i]))));
  return out;
}

template <std::floating_point T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& g) {
  BasicTensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) dx[i] = g[i] * y[i] * (T(1) - y[i]);
  return dx;
}

template <std::floating_point T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <std::floating_point T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& g) {
  BasicTensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > T(0) ? g[i] : T(0);
  return dx;
}

template <std::floating_point T>
BasicTensor<T> clamp(const BasicTensor<T>& x, double lo, double hi) {
  BasicTensor<T> out(x.shape());
  const T l = static_cast<T>(lo), h = static_cast<T>(hi);
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::min(std::max(x[i], l), h);
  return out;
}

template <std::floating_point T>
BasicTensor<T> clamp_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, double lo, double hi) {
  BasicTensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) dx[i] = (x[i] >= lo && x[i] <= hi) ? g[i] : T(0);
  return dx;
}

// ---------------------------------------------------------------------------
// Convolutions (im2col + GEMM).

namespace {

struct ConvGeometry {
  std::size_t n, ci, h, w, co, k, stride, ho, wo;
};

template <class T>
ConvGeometry conv_geometry(const BasicTensor<T>& x, const BasicTensor<T>& kernel, std::size_t stride) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  require_rank4(xs, "conv2d");
  require_rank4(ks, "conv2d kernel");
  if (ks.h() != ks.w()) throw ShapeError("conv2d: kernel must be square, got " + ks.str());
  if (ks.c() != xs.c())
    throw ShapeError("conv2d: channel mismatch, input " + xs.str() + " vs kernel " + ks.str());
  if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
  if (xs.h() < ks.h() || xs.w() < ks.w())
    throw ShapeError("conv2d: input " + xs.str() + " smaller than kernel " + ks.str());
  ConvGeometry g{xs.n(), xs.c(), xs.h(), xs.w(), ks.n(), ks.h(), stride, 0, 0};
  g.ho = (g.h - g.k) / stride + 1;
  g.wo = (g.w - g.k) / stride + 1;
  return g;
}

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t P = g.ho * g.wo;
  for (std::size_t c = 0; c < g.ci; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * P;
        const T* plane = x + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const T* src = plane + (oy * g.stride + ky) * g.w + kx;
          for (std::size_t ox = 0; ox < g.wo; ++ox) row[oy * g.wo + ox] = src[ox * g.stride];
        }
      }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t P = g.ho * g.wo;
  for (std::size_t c = 0; c < g.ci; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * P;
        T* plane = dx + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          T* dst = plane + (oy * g.stride + ky) * g.w + kx;
          for (std::size_t ox = 0; ox < g.wo; ++ox) dst[ox * g.stride] += row[oy * g.wo + ox];
        }
      }
}

}  // namespace

template <std::floating_point T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::size_t stride) {
  const ConvGeometry g = conv_geometry(x, kernel, stride);
  if (!bias.empty() && bias.numel() != g.co)
    throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match " + std::to_string(g.co) + " outputs");
  const std::size_t P = g.ho * g.wo, KK = g.ci * g.k * g.k;
  const bool direct = g.k == 1 && g.stride == 1;
  BasicTensor<T> out(Shape{g.n, g.co, g.ho, g.wo});
  std::vector<T, Eigen::aligned_allocator<T>> col(direct ? 0 : KK * P);
  ConstMapMat<T> K(kernel.raw(), g.co, KK);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x.raw() + n * g.ci * g.h * g.w;
    if (!direct) im2col(xn, g, col.data());
    ConstMapMat<T> X(direct ? xn : col.data(), KK, P);
    MapMat<T> Y(out.raw() + n * g.co * P, g.co, P);
    Y.noalias() = K * X;
    if (!bias.empty())
      for (std::size_t o = 0; o < g.co; ++o) Y.row(o).array() += bias[o];
  }
  return out;
}

template <std::floating_point T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& g_out,
                             std::size_t stride, bool with_bias, bool with_kernel, bool with_input) {
  const ConvGeometry g = conv_geometry(x, kernel, stride);
  require_same_shape(g_out.shape(), Shape{g.n, g.co, g.ho, g.wo}, "conv2d_backward");
  const std::size_t P = g.ho * g.wo, KK = g.ci * g.k * g.k;
  const bool direct = g.k == 1 && g.stride == 1;
  ConvGrads<T> out{with_input ? BasicTensor<T>(x.shape()) : BasicTensor<T>(),
                   with_kernel ? BasicTensor<T>(kernel.shape()) : BasicTensor<T>(),
                   with_bias ? BasicTensor<T>(Shape{g.co}) : BasicTensor<T>()};
  std::vector<T, Eigen::aligned_allocator<T>> col(direct || !with_kernel ? 0 : KK * P),
      dcol(direct || !with_input ? 0 : KK * P);
  ConstMapMat<T> K(kernel.raw(), g.co, KK);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x.raw() + n * g.ci * g.h * g.w;
    ConstMapMat<T> G(g_out.raw() + n * g.co * P, g.co, P);
    if (with_kernel) {
      if (!direct) im2col(xn, g, col.data());
      ConstMapMat<T> X(direct ? xn : col.data(), KK, P);
      MapMat<T> dK(out.kernel.raw(), g.co, KK);
      dK.noalias() += G * X.transpose();
    }
    if (with_input) {
      T* dxn = out.input.raw() + n * g.ci * g.h * g.w;
      if (direct) {
        MapMat<T> dX(dxn, KK, P);
        dX.noalias() = K.transpose() * G;
      } else {
        MapMat<T> dC(dcol.data(), KK, P);
        dC.noalias() = K.transpose() * G;
        col2im_add(dcol.data(), g, dxn);
      }
    }
    if (with_bias)
      for (std::size_t o = 0; o < g.co; ++o) {
        double s = 0.0;
        for (std::size_t p = 0; p < P; ++p) s += G(o, p);
        out.bias[o] += static_cast<T>(s);
      }
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  require_rank4(xs, "depthwise_conv2d");
  require_rank4(ks, "depthwise_conv2d kernel");
  if (ks.n() != xs.c() || ks.c() != 1 || ks.h() != ks.w())
    throw ShapeError("depthwise_conv2d: kernel " + ks.str() + " incompatible with input " + xs.str());
  const std::size_t k = ks.h();
  if (xs.h() < k || xs.w() < k) throw ShapeError("depthwise_conv2d: input " + xs.str() + " smaller than kernel");
  const std::size_t ho = xs.h() - k + 1, wo = xs.w() - k + 1, C = xs.c();
  BasicTensor<T> out(Shape{xs.n(), C, ho, wo});
  for (std::size_t n = 0; n < xs.n(); ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* plane = x.raw() + (n * C + c) * xs.h() * xs.w();
      const T* kc = kernel.raw() + c * k * k;
      T* dst = out.raw() + (n * C + c) * ho * wo;
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T kv = kc[ky * k + kx];
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const T* src = plane + (oy + ky) * xs.w() + kx;
            T* d = dst + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) d[ox] += kv * src[ox];
          }
        }
    }
  return out;
}

template <std::floating_point T>
ConvGrads<T> depthwise_conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                                       const BasicTensor<T>& g) {
  const Shape& xs = x.shape();
  const std::size_t k = kernel.shape().h();
  const std::size_t ho = xs.h() - k + 1, wo = xs.w() - k + 1, C = xs.c();
  require_same_shape(g.shape(), Shape{xs.n(), C, ho, wo}, "depthwise_conv2d_backward");
  ConvGrads<T> out{BasicTensor<T>(xs), BasicTensor<T>(kernel.shape()), BasicTensor<T>()};
  for (std::size_t n = 0; n < xs.n(); ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* plane = x.raw() + (n * C + c) * xs.h() * xs.w();
      T* dplane = out.input.raw() + (n * C + c) * xs.h() * xs.w();
      const T* kc = kernel.raw() + c * k * k;
      T* dkc = out.kernel.raw() + c * k * k;
      const T* gc = g.raw() + (n * C + c) * ho * wo;
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T kv = kc[ky * k + kx];
          double acc = 0.0;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const T* src = plane + (oy + ky) * xs.w() + kx;
            T* dsrc = dplane + (oy + ky) * xs.w() + kx;
            const T* gr = gc + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              acc += double(gr[ox]) * src[ox];
              dsrc[ox] += kv * gr[ox];
            }
          }
          dkc[ky * k + kx] += static_cast<T>(acc);
        }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Spatial resampling.

namespace {
// Source index along one axis of a padded coordinate.
inline std::ptrdiff_t pad_source(std::ptrdiff_t i, std::ptrdiff_t n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PadMode::zero) return -1;
  return i < 0 ? -i : 2 * (n - 1) - i;
}

void check_pad(const Shape& s, std::size_t p, PadMode mode) {
  require_rank4(s, "pad2d");
  if (mode == PadMode::reflect && p >= std::min(s.h(), s.w()))
    throw ShapeError("reflect_pad: padding " + std::to_string(p) + " must be smaller than min(H, W) of " + s.str());
}
}  // namespace

template <std::floating_point T>
BasicTensor<T> pad2d(const BasicTensor<T>& x, std::size_t p, PadMode mode) {
  const Shape& s = x.shape();
  check_pad(s, p, mode);
  if (p == 0) return x;
  const std::size_t H = s.h(), W = s.w(), Ho = H + 2 * p, Wo = W + 2 * p;
  BasicTensor<T> out(Shape{s.n(), s.c(), Ho, Wo});
  const auto ip = static_cast<std::ptrdiff_t>(p);
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* src = x.raw() + nc * H * W;
    T* dst = out.raw() + nc * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y) {
      const auto sy = pad_source(static_cast<std::ptrdiff_t>(y) - ip, static_cast<std::ptrdiff_t>(H), mode);
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        const auto sx = pad_source(static_cast<std::ptrdiff_t>(xx) - ip, static_cast<std::ptrdiff_t>(W), mode);
        dst[y * Wo + xx] = (sy < 0 || sx < 0) ? T(0) : src[sy * W + sx];
      }
    }
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> pad2d_backward(const BasicTensor<T>& g, std::size_t p, PadMode mode) {
  const Shape& s = g.shape();
  require_rank4(s, "pad2d_backward");
  if (p == 0) return g;
  const std::size_t Ho = s.h(), Wo = s.w(), H = Ho - 2 * p, W = Wo - 2 * p;
  BasicTensor<T> dx(Shape{s.n(), s.c(), H, W});
  const auto ip = static_cast<std::ptrdiff_t>(p);
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* src = g.raw() + nc * Ho * Wo;
    T* dst = dx.raw() + nc * H * W;
    for (std::size_t y = 0; y < Ho; ++y) {
      const auto sy = pad_source(static_cast<std::ptrdiff_t>(y) - ip, static_cast<std::ptrdiff_t>(H), mode);
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        const auto sx = pad_source(static_cast<std::ptrdiff_t>(xx) - ip, static_cast<std::ptrdiff_t>(W), mode);
        if (sy >= 0 && sx >= 0) dst[sy * W + sx] += src[y * Wo + xx];
      }
    }
  }
  return dx;
}

template <std::floating_point T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  require_rank4(s, "upsample_nearest2x");
  const std::size_t H = s.h(), W = s.w();
  BasicTensor<T> out(Shape{s.n(), s.c(), 2 * H, 2 * W});
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* src = x.raw() + nc * H * W;
    T* dst = out.raw() + nc * 4 * H * W;
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t xx = 0; xx < 2 * W; ++xx) dst[y * 2 * W + xx] = src[(y / 2) * W + xx / 2];
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> upsample_nearest2x_backward(const BasicTensor<T>& g) {
  require_even_spatial(g.shape(), "upsample_nearest2x_backward");
  const Shape& s = g.shape();
  const std::size_t H = s.h() / 2, W = s.w() / 2;
  BasicTensor<T> dx(Shape{s.n(), s.c(), H, W});
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* src = g.raw() + nc * 4 * H * W;
    T* dst = dx.raw() + nc * H * W;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) {
        const std::size_t o = 2 * y * 2 * W + 2 * xx;
        dst[y * W + xx] = static_cast<T>(double(src[o]) + src[o + 1] + src[o + 2 * W] + src[o + 2 * W + 1]);
      }
  }
  return dx;
}

template <std::floating_point T>
BasicTensor<T> avg_pool2x2(const BasicTensor<T>& x) {
  require_even_spatial(x.shape(), "avg_pool2x2");
  const Shape& s = x.shape();
  const std::size_t Ho = s.h() / 2, Wo = s.w() / 2, W = s.w();
  BasicTensor<T> out(Shape{s.n(), s.c(), Ho, Wo});
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* src = x.raw() + nc * s.h() * W;
    T* dst = out.raw() + nc * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        const std::size_t o = 2 * y * W + 2 * xx;
        dst[y * Wo + xx] = static_cast<T>((double(src[o]) + src[o + 1] + src[o + W] + src[o + W + 1]) * 0.25);
      }
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> avg_pool2x2_backward(const BasicTensor<T>& g) {
  const Shape& s = g.shape();
  require_rank4(s, "avg_pool2x2_backward");
  const std::size_t Ho = s.h(), Wo = s.w(), W = 2 * Wo;
  BasicTensor<T> dx(Shape{s.n(), s.c(), 2 * Ho, W});
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* src = g.raw() + nc * Ho * Wo;
    T* dst = dx.raw() + nc * 4 * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        const T v = src[y * Wo + xx] * T(0.25);
        const std::size_t o = 2 * y * W + 2 * xx;
        dst[o] = dst[o + 1] = dst[o + W] = dst[o + W + 1] = v;
      }
  }
  return dx;
}

template <std::floating_point T>
BasicTensor<T> max_pool2x2(const BasicTensor<T>& x) {
  require_even_spatial(x.shape(), "max_pool2x2");
  const Shape& s = x.shape();
  const std::size_t Ho = s.h() / 2, Wo = s.w() / 2, W = s.w();
  BasicTensor<T> out(Shape{s.n(), s.c(), Ho, Wo});
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* src = x.raw() + nc * s.h() * W;
    T* dst = out.raw() + nc * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        const std::size_t o = 2 * y * W + 2 * xx;
        dst[y * Wo + xx] = std::max(std::max(src[o], src[o + 1]), std::max(src[o + W], src[o + W + 1]));
      }
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> max_pool2x2_backward(const BasicTensor<T>& x, const BasicTensor<T>& g) {
  const Shape& s = x.shape();
  const std::size_t Ho = s.h() / 2, Wo = s.w() / 2, W = s.w();
  require_same_shape(g.shape(), Shape{s.n(), s.c(), Ho, Wo}, "max_pool2x2_backward");
  BasicTensor<T> dx(s);
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* src = x.raw() + nc * s.h() * W;
    T* dst = dx.raw() + nc * s.h() * W;
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        const std::size_t o = 2 * y * W + 2 * xx;
        const std::array<std::size_t, 4> idx{o, o + 1, o + W, o + W + 1};
        std::size_t best = idx[0];
        for (std::size_t i : idx)
          if (src[i] > src[best]) best = i;
        dst[best] += g[nc * Ho * Wo + y * Wo + xx];
      }
  }
  return dx;
}

template <std::floating_point T>
BasicTensor<T> pool_global(const BasicTensor<T>& x, PoolKind kind) {
  const Shape& s = x.shape();
  require_rank4(s, "pool_global");
  const std::size_t HW = s.h() * s.w();
  BasicTensor<T> out(Shape{s.n(), s.c(), 1, 1});
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* p = x.raw() + nc * HW;
    if (kind == PoolKind::max) {
      out[nc] = *std::max_element(p, p + HW);
    } else {
      double acc = 0.0;
      for (std::size_t i = 0; i < HW; ++i) acc += p[i];
      out[nc] = static_cast<T>(acc / double(HW));
    }
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> pool_global_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, PoolKind kind) {
  const Shape& s = x.shape();
  const std::size_t HW = s.h() * s.w();
  BasicTensor<T> dx(s);
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* p = x.raw() + nc * HW;
    T* d = dx.raw() + nc * HW;
    if (kind == PoolKind::max) {
      d[std::max_element(p, p + HW) - p] = g[nc];
    } else {
      const T v = static_cast<T>(double(g[nc]) / double(HW));
      std::fill(d, d + HW, v);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Channel statistics.

namespace {
struct CentralMoments {
  double mean = 0, m2 = 0, m3 = 0, m4 = 0;
};

template <class T>
CentralMoments central_moments(const T* p, std::size_t n) {
  CentralMoments m;
  for (std::size_t i = 0; i < n; ++i) m.mean += p[i];
  m.mean /= double(n);
  // Second-pass correction; a constant channel then has exactly zero deviations.
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) c += p[i] - m.mean;
  m.mean += c / double(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p[i] - m.mean, d2 = d * d;
    m.m2 += d2;
    m.m3 += d2 * d;
    m.m4 += d2 * d2;
  }
  m.m2 /= double(n);
  m.m3 /= double(n);
  m.m4 /= double(n);
  return m;
}
}  // namespace

template <std::floating_point T>
BasicTensor<T> channel_norm(const BasicTensor<T>& x, double eps) {
  const Shape& s = x.shape();
  require_rank4(s, "channel_norm");
  const std::size_t HW = s.h() * s.w();
  BasicTensor<T> out(s);
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* p = x.raw() + nc * HW;
    const CentralMoments m = central_moments(p, HW);
    const double inv = 1.0 / std::sqrt(m.m2 + eps);
    T* d = out.raw() + nc * HW;
    for (std::size_t i = 0; i < HW; ++i) d[i] = static_cast<T>((p[i] - m.mean) * inv);
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> channel_norm_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, double eps) {
  const Shape& s = x.shape();
  require_same_shape(s, g.shape(), "channel_norm_backward");
  const std::size_t HW = s.h() * s.w();
  BasicTensor<T> dx(s);
  std::vector<double> y(HW);
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* p = x.raw() + nc * HW;
    const T* gp = g.raw() + nc * HW;
    const CentralMoments m = central_moments(p, HW);
    const double inv = 1.0 / std::sqrt(m.m2 + eps);
    double gmean = 0.0, gymean = 0.0;
    for (std::size_t i = 0; i < HW; ++i) {
      y[i] = (p[i] - m.mean) * inv;
      gmean += gp[i];
      gymean += gp[i] * y[i];
    }
    gmean /= double(HW);
    gymean /= double(HW);
    T* d = dx.raw() + nc * HW;
    for (std::size_t i = 0; i < HW; ++i) d[i] = static_cast<T>(inv * (gp[i] - gmean - y[i] * gymean));
  }
  return dx;
}

template <std::floating_point T>
BasicTensor<T> moment(const BasicTensor<T>& x, Moment which, double eps) {
  const Shape& s = x.shape();
  require_rank4(s, "moment");
  const std::size_t HW = s.h() * s.w();
  BasicTensor<T> out(Shape{s.n(), s.c(), 1, 1});
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const CentralMoments m = central_moments(x.raw() + nc * HW, HW);
    const double sigma = std::sqrt(m.m2);
    const double scale = sigma + eps;
    double v = 0.0;
    switch (which) {
      case Moment::mean: v = m.mean; break;
      case Moment::std: v = sigma; break;
      case Moment::skew: v = scale > 0 ? m.m3 / (scale * scale * scale) : 0.0; break;
      case Moment::kurt: v = scale > 0 ? m.m4 / (scale * scale * scale * scale) : 0.0; break;
    }
    out[nc] = static_cast<T>(v);
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> moment_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, Moment which, double eps) {
  const Shape& s = x.shape();
  require_rank4(s, "moment_backward");
  const std::size_t HW = s.h() * s.w();
  const double n = double(HW);
  BasicTensor<T> dx(s);
  for (std::size_t nc = 0; nc < s.n() * s.c(); ++nc) {
    const T* p = x.raw() + nc * HW;
    T* d = dx.raw() + nc * HW;
    const double go = g[nc];
    const CentralMoments m = central_moments(p, HW);
    const double sigma = std::sqrt(m.m2);
    const double scale = sigma + eps;
    // d sigma / d x_j = (x_j - mean) / (n sigma), taken as 0 when sigma == 0.
    const double dsig = sigma > 0 ? 1.0 / (n * sigma) : 0.0;
    for (std::size_t j = 0; j < HW; ++j) {
      const double dj = p[j] - m.mean;
      double v = 0.0;
      switch (which) {
        case Moment::mean: v = 1.0 / n; break;
        case Moment::std: v = dj * dsig; break;
        case Moment::skew: {
          if (scale <= 0) break;
          const double s3 = scale * scale * scale;
          v = (3.0 / n) * (dj * dj - m.m2) / s3 - 3.0 * m.m3 / (s3 * scale) * dj * dsig;
          break;
        }
        case Moment::kurt: {
          if (scale <= 0) break;
          const double s4 = scale * scale * scale * scale;
          v = (4.0 / n) * (dj * dj * dj - m.m3) / s4 - 4.0 * m.m4 / (s4 * scale) * dj * dsig;
          break;
        }
      }
      d[j] = static_cast<T>(go * v);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Similarity, norms and losses.

namespace {
void check_descriptors(const Shape& a, const Shape& b) {
  require_rank4(a, "cosine_lambda");
  if (!(a == b) || a.h() != 1 || a.w() != 1)
    throw ShapeError("cosine_lambda: expected matching (N,C,1,1) descriptors, got " + a.str() + " and " + b.str());
}
}  // namespace

template <std::floating_point T>
BasicTensor<T> cosine_lambda(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_descriptors(a.shape(), b.shape());
  const std::size_t N = a.shape().n(), C = a.shape().c();
  BasicTensor<T> out(Shape{N, 1, 1, 1});
  for (std::size_t n = 0; n < N; ++n) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const double x = a[n * C + c], y = b[n * C + c];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    double lam = 0.5;
    if (na > 0 && nb > 0) lam = std::clamp((dot / std::sqrt(na * nb) + 1.0) * 0.5, 0.0, 1.0);
    out[n] = static_cast<T>(lam);
  }
  return out;
}

template <std::floating_point T>
std::pair<BasicTensor<T>, BasicTensor<T>> cosine_lambda_backward(const BasicTensor<T>& a, const BasicTensor<T>& b,
                                                                 const BasicTensor<T>& g) {
  check_descriptors(a.shape(), b.shape());
  const std::size_t N = a.shape().n(), C = a.shape().c();
  BasicTensor<T> da(a.shape()), db(b.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const double x = a[n * C + c], y = b[n * C + c];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    if (!(na > 0 && nb > 0)) continue;
    const double la = std::sqrt(na), lb = std::sqrt(nb), cos = dot / (la * lb);
    const double k = 0.5 * g[n];
    for (std::size_t c = 0; c < C; ++c) {
      const double x = a[n * C + c], y = b[n * C + c];
      da[n * C + c] = static_cast<T>(k * (y / (la * lb) - cos * x / na));
      db[n * C + c] = static_cast<T>(k * (x / (la * lb) - cos * y / nb));
    }
  }
  return {std::move(da), std::move(db)};
}

template <std::floating_point T>
BasicTensor<T> l2norm_per_sample(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  require_rank4(s, "l2norm_per_sample");
  const std::size_t per = s.c() * s.h() * s.w();
  BasicTensor<T> out(Shape{s.n(), 1, 1, 1});
  for (std::size_t n = 0; n < s.n(); ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += double(x[n * per + i]) * x[n * per + i];
    out[n] = static_cast<T>(std::sqrt(acc));
  }
  return out;
}

template <std::floating_point T>
BasicTensor<T> l2norm_per_sample_backward(const BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& g) {
  const Shape& s = x.shape();
  const std::size_t per = s.c() * s.h() * s.w();
  BasicTensor<T> dx(s);
  for (std::size_t n = 0; n < s.n(); ++n) {
    if (!(y[n] > 0)) continue;
    const double k = double(g[n]) / y[n];
    for (std::size_t i = 0; i < per; ++i) dx[n * per + i] = static_cast<T>(k * x[n * per + i]);
  }
  return dx;
}

template <std::floating_point T>
BasicTensor<T> bce_logits_mean(const BasicTensor<T>& x, double target, double limit) {
  double acc = 0.0;
  for (T v : x.data()) {
    const double l = std::clamp(double(v), -limit, limit);
    acc += std::max(l, 0.0) - l * target + std::log1p(std::exp(-std::abs(l)));
  }
  return BasicTensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(acc / double(x.numel())));
}

template <std::floating_point T>
BasicTensor<T> bce_logits_mean_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, double target,
                                        double limit) {
  BasicTensor<T> dx(x.shape());
  const double k = double(g[0]) / double(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    if (v < -limit || v > limit) continue;
    dx[i] = static_cast<T>(k * (1.0 / (1.0 + std::exp(-v)) - target));
  }
  return dx;
}

// ---------------------------------------------------------------------------

#define HSI_INSTANTIATE_KERNELS(T)                                                                              \
  template BasicTensor<T> broadcast_binary(const BasicTensor<T>&, const BasicTensor<T>&, BinaryKind);            \
  template BasicTensor<T> reduce_to_shape(const BasicTensor<T>&, const Shape&);                                  \
  template BasicTensor<T> affine(const BasicTensor<T>&, double, double);                                         \
  template BasicTensor<T> sum_all(const BasicTensor<T>&);                                                        \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&, bool, bool);                      \
  template BasicTensor<T> transpose_last2(const BasicTensor<T>&);                                                \
  template BasicTensor<T> softmax_rows(const BasicTensor<T>&);                                                   \
  template void softmax_rows_inplace(BasicTensor<T>&);                                                           \
  template BasicTensor<T> softmax_rows_backward(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);                                               \
  template BasicTensor<T> softmax_channels_backward(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                                        \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                           \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> clamp(const BasicTensor<T>&, double, double);                                          \
  template BasicTensor<T> clamp_backward(const BasicTensor<T>&, const BasicTensor<T>&, double, double);          \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,           \
                                 std::size_t);                                                                   \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                        std::size_t, bool, bool, bool);                                          \
  template BasicTensor<T> depthwise_conv2d(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template ConvGrads<T> depthwise_conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                                  const BasicTensor<T>&);                                        \
  template BasicTensor<T> pad2d(const BasicTensor<T>&, std::size_t, PadMode);                                    \
  template BasicTensor<T> pad2d_backward(const BasicTensor<T>&, std::size_t, PadMode);                           \
  template BasicTensor<T> upsample_nearest2x(const BasicTensor<T>&);                                             \
  template BasicTensor<T> upsample_nearest2x_backward(const BasicTensor<T>&);                                    \
  template BasicTensor<T> avg_pool2x2(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> avg_pool2x2_backward(const BasicTensor<T>&);                                           \
  template BasicTensor<T> max_pool2x2(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> max_pool2x2_backward(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> pool_global(const BasicTensor<T>&, PoolKind);                                          \
  template BasicTensor<T> pool_global_backward(const BasicTensor<T>&, const BasicTensor<T>&, PoolKind);          \
  template BasicTensor<T> channel_norm(const BasicTensor<T>&, double);                                           \
  template BasicTensor<T> channel_norm_backward(const BasicTensor<T>&, const BasicTensor<T>&, double);           \
  template BasicTensor<T> moment(const BasicTensor<T>&, Moment, double);                                         \
  template BasicTensor<T> moment_backward(const BasicTensor<T>&, const BasicTensor<T>&, Moment, double);         \
  template BasicTensor<T> cosine_lambda(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template std::pair<BasicTensor<T>, BasicTensor<T>> cosine_lambda_backward(                                     \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                                      \
  template BasicTensor<T> l2norm_per_sample(const BasicTensor<T>&);                                              \
  template BasicTensor<T> l2norm_per_sample_backward(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                                     const BasicTensor<T>&);                                     \
  template BasicTensor<T> bce_logits_mean(const BasicTensor<T>&, double, double);                                \
  template BasicTensor<T> bce_logits_mean_backward(const BasicTensor<T>&, const BasicTensor<T>&, double, double);

HSI_INSTANTIATE_KERNELS(float)
HSI_INSTANTIATE_KERNELS(double)

#undef HSI_INSTANTIATE_KERNELS

}  // namespace hsi::kernels
