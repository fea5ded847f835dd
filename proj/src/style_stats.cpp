#include "hsi/style_stats.hpp"

namespace hsi {

kernels::Moment to_moment(Stat s) noexcept {
  switch (s) {
    case Stat::mean: return kernels::Moment::mean;
    case Stat::std: return kernels::Moment::std;
    case Stat::skew: return kernels::Moment::skew;
    case Stat::kurt: return kernels::Moment::kurt;
  }
  return kernels::Moment::mean;
}

template <std::floating_point T>
BasicChannelStats<T> channel_statistics(const BasicVar<T>& x, double eps, const StatMask& mask) {
  require_rank4(x.shape(), "channel_statistics");
  if (eps < 0) throw ArgumentError("channel_statistics: eps must be nonnegative");
  BasicChannelStats<T> out;
  for (std::size_t i = 0; i < kNumStats; ++i)
    if (mask[i]) out.values[i] = moment(x, to_moment(static_cast<Stat>(i)), eps);
  return out;
}

template <std::floating_point T>
BasicDynamicAffine<T> dynamic_affine(const BasicVar<T>& k, const BasicConvWeights<T>& conv_w,
                                     const BasicConvWeights<T>& conv_b) {
  if (conv_w.out_channels() != k.shape().c() || conv_b.out_channels() != k.shape().c())
    throw ShapeError("dynamic_affine: conv output channels do not match key " + k.shape().str());
  return {pool_global(apply_conv(k, conv_w), kernels::PoolKind::avg),
          pool_global(apply_conv(k, conv_b), kernels::PoolKind::max)};
}

template <std::floating_point T>
BasicVar<T> aggregate_global_style(const BasicChannelStats<T>& stats, std::span<const BasicDynamicAffine<T>> affines,
                                   const StatMask& mask) {
  if (affines.size() != kNumStats)
    throw ArgumentError("aggregate_global_style: expected 4 affines, got " + std::to_string(affines.size()));
  BasicVar<T> acc;
  for (std::size_t i = 0; i < kNumStats; ++i) {
    if (!mask[i]) continue;
    const auto& s = stats.values[i];
    const auto& a = affines[i];
    if (!s.defined() || !a.weight.defined() || !a.bias.defined())
      throw ArgumentError(std::string("aggregate_global_style: missing ") + std::string(kStatNames[i]));
    BasicVar<T> term = a.weight * s + a.bias;
    acc = acc.defined() ? acc + term : term;
  }
  if (!acc.defined()) throw ArgumentError("aggregate_global_style: no statistic enabled");
  return acc;
}

#define HSI_INSTANTIATE_STATS(T)                                                                       \
  template BasicChannelStats<T> channel_statistics<T>(const BasicVar<T>&, double, const StatMask&);    \
  template BasicDynamicAffine<T> dynamic_affine<T>(const BasicVar<T>&, const BasicConvWeights<T>&,     \
                                                   const BasicConvWeights<T>&);                        \
  template BasicVar<T> aggregate_global_style<T>(const BasicChannelStats<T>&,                          \
                                                 std::span<const BasicDynamicAffine<T>>, const StatMask&);

HSI_INSTANTIATE_STATS(float)
HSI_INSTANTIATE_STATS(double)

#undef HSI_INSTANTIATE_STATS

}  // namespace hsi
