#pragma once

// Dense NCHW kernels. Every function is pure; backward kernels take the
// saved forward operands plus the upstream gradient and return input
// gradients. Instantiated for float and double.

#include <concepts>
#include <utility>

#include "hsi/tensor.hpp"

namespace hsi::kernels {

inline constexpr double kDefaultEps = 1e-5;

enum class BinaryKind { add, sub, mul };
enum class PoolKind { avg, max };
enum class PadMode { reflect, zero };
enum class Moment { mean, std, skew, kurt };

/// Element-wise max of two equal-rank shapes whose extents pair up as equal
/// or 1. Throws ShapeError naming both shapes otherwise.
Shape broadcast_shape(const Shape& a, const Shape& b);

template <std::floating_point T>
BasicTensor<T> broadcast_binary(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryKind kind);

/// Sums `g` over the axes where `target` has extent 1 (inverse of broadcast).
template <std::floating_point T>
BasicTensor<T> reduce_to_shape(const BasicTensor<T>& g, const Shape& target);

template <std::floating_point T>
BasicTensor<T> affine(const BasicTensor<T>& x, double scale, double shift);

/// Sum of all elements, shape (1,1,1,1).
template <std::floating_point T>
BasicTensor<T> sum_all(const BasicTensor<T>& x);

/// Matrix product of rank-2 (R,K)x(K,S) or batched rank-3 (B,R,K)x(B,K,S)
/// operands. `trans_a`/`trans_b` use the transpose of the last two axes.
template <std::floating_point T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool trans_a = false, bool trans_b = false);

template <std::floating_point T>
BasicTensor<T> transpose_last2(const BasicTensor<T>& x);

/// Softmax over the last axis with row-max subtraction.
template <std::floating_point T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x);
template <std::floating_point T>
void softmax_rows_inplace(BasicTensor<T>& x);
template <std::floating_point T>
BasicTensor<T> softmax_rows_backward(const BasicTensor<T>& y, const BasicTensor<T>& g);

/// Softmax over the channel axis at every (n, h, w) position.
template <std::floating_point T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x);
template <std::floating_point T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& y, const BasicTensor<T>& g);

template <std::floating_point T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <std::floating_point T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& g);

template <std::floating_point T>
BasicTensor<T> relu(const BasicTensor<T>& x);
/// Gradient is 0 at x == 0.
template <std::floating_point T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& g);

template <std::floating_point T>
BasicTensor<T> clamp(const BasicTensor<T>& x, double lo, double hi);
template <std::floating_point T>
BasicTensor<T> clamp_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, double lo, double hi);

// Convolutions are "valid" (no implicit padding); pad with pad2d first.

template <std::floating_point T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> kernel;
  BasicTensor<T> bias;
};

/// x (N,Ci,H,W), kernel (Co,Ci,k,k), bias (Co) or empty.
template <std::floating_point T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      std::size_t stride = 1);
template <std::floating_point T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& g,
                             std::size_t stride, bool with_bias, bool with_kernel = true, bool with_input = true);

/// x (N,C,H,W), kernel (C,1,k,k); one filter per channel, stride 1.
template <std::floating_point T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel);
template <std::floating_point T>
ConvGrads<T> depthwise_conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& g);

/// Reflection mirrors the interior excluding the edge pixel; requires p < min(H, W).
template <std::floating_point T>
BasicTensor<T> pad2d(const BasicTensor<T>& x, std::size_t p, PadMode mode);
template <std::floating_point T>
BasicTensor<T> pad2d_backward(const BasicTensor<T>& g, std::size_t p, PadMode mode);

template <std::floating_point T>
BasicTensor<T> reflect_pad(const BasicTensor<T>& x, std::size_t p) {
  return pad2d(x, p, PadMode::reflect);
}

template <std::floating_point T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& x);
template <std::floating_point T>
BasicTensor<T> upsample_nearest2x_backward(const BasicTensor<T>& g);

/// 2x2 stride-2 pooling; H and W must be even.
template <std::floating_point T>
BasicTensor<T> avg_pool2x2(const BasicTensor<T>& x);
template <std::floating_point T>
BasicTensor<T> avg_pool2x2_backward(const BasicTensor<T>& g);
template <std::floating_point T>
BasicTensor<T> max_pool2x2(const BasicTensor<T>& x);
template <std::floating_point T>
BasicTensor<T> max_pool2x2_backward(const BasicTensor<T>& x, const BasicTensor<T>& g);

/// Global pooling to (N, C, 1, 1). Max ties resolve to the first element in scan order.
template <std::floating_point T>
BasicTensor<T> pool_global(const BasicTensor<T>& x, PoolKind kind);
template <std::floating_point T>
BasicTensor<T> pool_global_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, PoolKind kind);

/// Per-(n, c) (x - mean) / sqrt(var + eps) with population variance.
template <std::floating_point T>
BasicTensor<T> channel_norm(const BasicTensor<T>& x, double eps = kDefaultEps);
template <std::floating_point T>
BasicTensor<T> channel_norm_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, double eps = kDefaultEps);

/// One channel-wise statistic, shape (N, C, 1, 1). Accumulates in double.
///   mean  = E[x]
///   std   = sqrt(E[(x - mean)^2])
///   skew  = E[((x - mean) / (std + eps))^3]
///   kurt  = E[((x - mean) / (std + eps))^4]
template <std::floating_point T>
BasicTensor<T> moment(const BasicTensor<T>& x, Moment which, double eps);
template <std::floating_point T>
BasicTensor<T> moment_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, Moment which, double eps);

/// (cos(a_n, b_n) + 1) / 2 per sample for (N, C, 1, 1) descriptors, clamped to
/// [0, 1]; 0.5 when either vector is zero. Shape (N, 1, 1, 1).
template <std::floating_point T>
BasicTensor<T> cosine_lambda(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <std::floating_point T>
std::pair<BasicTensor<T>, BasicTensor<T>> cosine_lambda_backward(const BasicTensor<T>& a, const BasicTensor<T>& b,
                                                                 const BasicTensor<T>& g);

/// Euclidean norm of every sample of a rank-4 tensor, shape (N, 1, 1, 1).
template <std::floating_point T>
BasicTensor<T> l2norm_per_sample(const BasicTensor<T>& x);
template <std::floating_point T>
BasicTensor<T> l2norm_per_sample_backward(const BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& g);

/// Mean binary cross-entropy of logits against a constant target after
/// clamping logits to [-limit, limit]. Shape (1,1,1,1).
template <std::floating_point T>
BasicTensor<T> bce_logits_mean(const BasicTensor<T>& x, double target, double limit);
template <std::floating_point T>
BasicTensor<T> bce_logits_mean_backward(const BasicTensor<T>& x, const BasicTensor<T>& g, double target, double limit);

}  // namespace hsi::kernels
