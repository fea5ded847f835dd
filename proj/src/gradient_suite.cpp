#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hsi/gradcheck.hpp"
#include "hsi/transfer.hpp"

namespace hsi {

namespace {

using kernels::Moment;
using kernels::PadMode;
using kernels::PoolKind;

class Inputs {
 public:
  explicit Inputs(std::uint64_t seed) : rng_(seed) {}

  TensorD normal(const Shape& s) {
    std::normal_distribution<double> d(0.0, 1.0);
    TensorD t(s);
    for (auto& v : t.data()) v = d(rng_);
    return t;
  }
  // N(0,1) resampled until every entry is at least `margin` from each kink.
  TensorD away_from(const Shape& s, std::initializer_list<double> kinks, double margin = 0.05) {
    std::normal_distribution<double> d(0.0, 1.0);
    TensorD t(s);
    for (auto& v : t.data()) {
      do v = d(rng_);
      while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(v - k) < margin; }));
    }
    return t;
  }
  // Distinct values at least 2/numel apart, shuffled; keeps max ties far
  // away from the step size.
  TensorD spaced(const Shape& s) {
    TensorD t(s);
    std::vector<std::size_t> perm(t.numel());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng_);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = -1.0 + 2.0 * (double(perm[i]) + 0.5) / double(t.numel());
    return t;
  }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

// Random linear functional so every output coordinate reaches the loss.
VarD project(const VarD& y, const TensorD& r) { return sum_all(y * VarD(r)); }

}  // namespace

std::vector<GradCheckRow> gradient_suite(std::uint64_t seed, double tol, double h) {
  Inputs in(seed);
  std::vector<GradCheckRow> rows;
  const auto check = [&](std::string name, std::vector<TensorD> xs, auto&& body) {
    // The projection is drawn after a dry run fixes the output shape.
    std::vector<VarD> probe(xs.begin(), xs.end());
    const TensorD r = in.normal(body(std::span<const VarD>(probe)).shape());
    ScalarFn f = [&](std::span<const VarD> v) {
      const VarD y = body(v);
      return y.value().numel() == 1 ? y : project(y, r);
    };
    rows.push_back({std::move(name), finite_diff_check(f, xs, h, tol)});
  };

  const Shape s233{1, 2, 3, 3}, s244{1, 2, 4, 4}, s211{1, 2, 1, 1};

  check("add", {in.normal(s233), in.normal(s211)}, [](auto v) { return v[0] + v[1]; });
  check("sub", {in.normal(s233), in.normal(s211)}, [](auto v) { return v[0] - v[1]; });
  check("mul", {in.normal(s233), in.normal(s211)}, [](auto v) { return v[0] * v[1]; });
  check("affine", {in.normal(s233)}, [](auto v) { return affine(v[0], -1.5, 0.25); });
  check("sum_all", {in.normal(s233)}, [](auto v) { return sum_all(v[0] * v[0]); });
  check("mean_all", {in.normal(s233)}, [](auto v) { return mean_all(v[0] * v[0]); });
  for (int t = 0; t < 4; ++t) {
    const bool ta = t & 1, tb = t & 2;
    const Shape sa = ta ? Shape{2, 4, 3} : Shape{2, 3, 4};
    const Shape sb = tb ? Shape{2, 3, 4} : Shape{2, 4, 3};
    std::string name = "matmul";
    if (ta) name += ".ta";
    if (tb) name += ".tb";
    check(name, {in.normal(sa), in.normal(sb)}, [=](auto v) { return matmul(v[0], v[1], ta, tb); });
  }
  check("transpose_last2", {in.normal(Shape{2, 3, 4})}, [](auto v) { return transpose_last2(v[0]); });
  check("reshape", {in.normal(s233)}, [](auto v) { return reshape(v[0], Shape{2, 9}); });
  check("softmax_rows", {in.normal(Shape{2, 3, 4})}, [](auto v) { return softmax_rows(v[0]); });
  check("softmax_channels", {in.normal(Shape{1, 3, 2, 2})}, [](auto v) { return softmax_channels(v[0]); });
  check("sigmoid", {in.normal(s233)}, [](auto v) { return sigmoid(v[0]); });
  check("relu", {in.away_from(s233, {0.0})}, [](auto v) { return relu(v[0]); });
  check("clamp", {in.away_from(s233, {-0.5, 0.5})}, [](auto v) { return clamp(v[0], -0.5, 0.5); });
  check("conv2d.3x3", {in.normal(Shape{1, 2, 4, 4}), in.normal(Shape{1, 2, 3, 3}), in.normal(Shape{1})},
        [](auto v) { return conv2d(v[0], v[1], v[2]); });
  check("conv2d.3x3.stride2", {in.normal(Shape{1, 1, 5, 5}), in.normal(Shape{2, 1, 3, 3}), in.normal(Shape{2})},
        [](auto v) { return conv2d(v[0], v[1], v[2], 2); });
  check("conv2d.1x1", {in.normal(Shape{1, 3, 3, 3}), in.normal(Shape{2, 3, 1, 1}), in.normal(Shape{2})},
        [](auto v) { return conv2d(v[0], v[1], v[2]); });
  check("depthwise_conv2d", {in.normal(s244), in.normal(Shape{2, 1, 3, 3})},
        [](auto v) { return depthwise_conv2d(v[0], v[1]); });
  check("conv.depthwise_separable",
        {in.normal(s244), in.normal(Shape{2, 1, 3, 3}), in.normal(Shape{2, 2, 1, 1}), in.normal(Shape{2})},
        [](auto v) {
          BasicConvWeights<double> w;
          w.kind = ConvKind::depthwise_separable_3x3;
          w.depth = v[1];
          w.kernel = v[2];
          w.bias = v[3];
          return apply_conv(v[0], w);
        });
  check("pad2d.reflect", {in.normal(s233)}, [](auto v) { return pad2d(v[0], 1, PadMode::reflect); });
  check("pad2d.zero", {in.normal(s233)}, [](auto v) { return pad2d(v[0], 1, PadMode::zero); });
  check("upsample_nearest2x", {in.normal(Shape{1, 2, 2, 2})}, [](auto v) { return upsample_nearest2x(v[0]); });
  check("avg_pool2x2", {in.normal(s244)}, [](auto v) { return avg_pool2x2(v[0]); });
  check("max_pool2x2", {in.spaced(s244)}, [](auto v) { return max_pool2x2(v[0]); });
  check("pool_global.avg", {in.normal(s233)}, [](auto v) { return pool_global(v[0], PoolKind::avg); });
  check("pool_global.max", {in.spaced(s233)}, [](auto v) { return pool_global(v[0], PoolKind::max); });
  check("channel_norm", {in.normal(s233)}, [](auto v) { return channel_norm(v[0]); });
  for (std::size_t m = 0; m < kNumStats; ++m)
    check("moment." + std::string(kStatNames[m]), {in.normal(s233)},
          [=](auto v) { return moment(v[0], static_cast<Moment>(m), kernels::kDefaultEps); });
  check("cosine_lambda", {in.normal(Shape{1, 3, 1, 1}), in.normal(Shape{1, 3, 1, 1})},
        [](auto v) { return cosine_lambda(v[0], v[1]); });
  check("l2norm_per_sample", {in.normal(Shape{2, 3, 2, 2})}, [](auto v) { return l2norm_per_sample(v[0]); });
  check("bce_logits_mean.real", {in.normal(s233)}, [](auto v) { return bce_logits_mean(v[0], 1.0); });
  check("bce_logits_mean.fake", {in.normal(s233)}, [](auto v) { return bce_logits_mean(v[0], 0.0); });

  // Style statistics and transfer pieces.
  check("channel_statistics", {in.normal(s233)}, [](auto v) {
    const auto st = channel_statistics(v[0], kernels::kDefaultEps);
    return st.mean() + affine(st.std(), 0.7) + affine(st.skew(), -0.4) + affine(st.kurt(), 0.2);
  });
  {
    const auto w = make_hsi_weights<double>(2, in.rng());
    check("dynamic_affine", {in.normal(s244)}, [&](auto v) {
      const auto a = dynamic_affine(v[0], w.dyn_w[0], w.dyn_b[0]);
      return a.weight + affine(a.bias, 0.5);
    });
    check("aggregate_global_style", {in.normal(s244)}, [&](auto v) {
      const auto st = channel_statistics(v[0], kernels::kDefaultEps);
      std::array<BasicDynamicAffine<double>, kNumStats> aff;
      for (std::size_t i = 0; i < kNumStats; ++i) aff[i] = dynamic_affine(v[0], w.dyn_w[i], w.dyn_b[i]);
      return aggregate_global_style<double>(st, aff);
    });
  }
  check("relation_lambda", {in.normal(s233), in.normal(s233)},
        [](auto v) { return relation_lambda(v[0], v[1], RelationMode::dual); });
  check("dual_relation_fuse", {in.normal(s233), in.normal(s211), in.normal(Shape{1, 1, 1, 1})},
        [](auto v) { return dual_relation_fuse(v[0], v[1], v[2]); });
  {
    const auto w = make_attn_weights<double>(2, in.rng());
    check("attention_map", {in.normal(s233), in.normal(s233)},
          [&](auto v) { return attention_map(v[0], v[1], w); });
    check("self_attention_forward", {in.normal(s233), in.normal(s233)},
          [&](auto v) { return self_attention_forward(v[0], v[1], w); });
  }
  {
    const auto w = make_hsi_weights<double>(2, in.rng());
    const std::array<std::pair<const char*, RelationMode>, 3> modes{
        {{"hsi_forward", RelationMode::dual},
         {"hsi_forward.local", RelationMode::local_only},
         {"hsi_forward.global", RelationMode::global_only}}};
    for (const auto& [name, mode] : modes) {
      HsiConfig cfg;
      cfg.relation = mode;
      check(name, {in.normal(s244), in.normal(s244)}, [&](auto v) { return hsi_forward(v[0], v[1], w, cfg); });
    }
    HsiConfig cfg;
    cfg.score = ScoreNorm::sigmoid;
    check("hsi_forward.sigmoid", {in.normal(s244), in.normal(s244)},
          [&](auto v) { return hsi_forward(v[0], v[1], w, cfg); });
  }
  return rows;
}

}  // namespace hsi
