#pragma once

#include <array>
#include <span>
#include <string_view>

#include "hsi/layers.hpp"

namespace hsi {

enum class Stat : std::size_t { mean = 0, std = 1, skew = 2, kurt = 3 };
inline constexpr std::size_t kNumStats = 4;
inline constexpr std::array<std::string_view, kNumStats> kStatNames{"mean", "std", "skew", "kurt"};

/// Which of the four statistics take part in aggregation, indexed by Stat.
using StatMask = std::array<bool, kNumStats>;
inline constexpr StatMask kAllStats{true, true, true, true};

kernels::Moment to_moment(Stat s) noexcept;

/// Per-channel mean, std, skewness and kurtosis, each (N, C, 1, 1).
template <std::floating_point T>
struct BasicChannelStats {
  std::array<BasicVar<T>, kNumStats> values;

  const BasicVar<T>& operator[](Stat s) const { return values[static_cast<std::size_t>(s)]; }
  const BasicVar<T>& mean() const { return (*this)[Stat::mean]; }
  const BasicVar<T>& std() const { return (*this)[Stat::std]; }
  const BasicVar<T>& skew() const { return (*this)[Stat::skew]; }
  const BasicVar<T>& kurt() const { return (*this)[Stat::kurt]; }
};

using ChannelStats = BasicChannelStats<float>;

/// Population statistics; skew and kurt standardize by (std + eps).
/// Statistics outside `mask` are left undefined.
template <std::floating_point T>
BasicChannelStats<T> channel_statistics(const BasicVar<T>& x, double eps, const StatMask& mask = kAllStats);

/// Input-dependent scale and shift for one statistic, each (N, C, 1, 1).
template <std::floating_point T>
struct BasicDynamicAffine {
  BasicVar<T> weight;
  BasicVar<T> bias;
};

using DynamicAffine = BasicDynamicAffine<float>;

/// weight = avg_pool(conv_w(k)), bias = max_pool(conv_b(k)).
template <std::floating_point T>
BasicDynamicAffine<T> dynamic_affine(const BasicVar<T>& k, const BasicConvWeights<T>& conv_w,
                                     const BasicConvWeights<T>& conv_b);

/// Sum over the statistics in `mask` of weight * stat + bias, (N, C, 1, 1).
/// `affines` holds one entry per statistic in Stat order.
template <std::floating_point T>
BasicVar<T> aggregate_global_style(const BasicChannelStats<T>& stats, std::span<const BasicDynamicAffine<T>> affines,
                                   const StatMask& mask = kAllStats);

}  // namespace hsi
