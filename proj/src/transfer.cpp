#include "hsi/transfer.hpp"

#include <Eigen/Core>
#include <algorithm>

namespace hsi {

void HsiConfig::validate() const {
  if (std::none_of(stats.begin(), stats.end(), [](bool b) { return b; }))
    throw ArgumentError("hsi: at least one statistic must be enabled");
  if (blocks == 0) throw ArgumentError("hsi: block count must be at least 1");
  if (!(eps >= 0)) throw ArgumentError("hsi: eps must be nonnegative");
}

template <std::floating_point T>
BasicHsiWeights<T> make_hsi_weights(std::size_t c, Rng& rng) {
  BasicHsiWeights<T> w;
  w.f_q = make_conv<T>(ConvKind::pointwise_1x1, c, c, rng);
  w.f_k = make_conv<T>(ConvKind::pointwise_1x1, c, c, rng);
  w.f_v = make_conv<T>(ConvKind::pointwise_1x1, c, c, rng);
  w.f_o = make_conv<T>(ConvKind::pointwise_1x1, c, c, rng);
  for (std::size_t i = 0; i < kNumStats; ++i) {
    w.dyn_w[i] = make_conv<T>(ConvKind::depthwise_separable_3x3, c, c, rng);
    w.dyn_b[i] = make_conv<T>(ConvKind::depthwise_separable_3x3, c, c, rng);
  }
  return w;
}

template <std::floating_point T>
BasicAttnWeights<T> make_attn_weights(std::size_t c, Rng& rng) {
  BasicAttnWeights<T> w;
  w.f_q = make_conv<T>(ConvKind::pointwise_1x1, c, c, rng);
  w.f_k = make_conv<T>(ConvKind::pointwise_1x1, c, c, rng);
  w.f_v = make_conv<T>(ConvKind::pointwise_1x1, c, c, rng);
  w.f_o = make_conv<T>(ConvKind::pointwise_1x1, c, c, rng);
  return w;
}

template <std::floating_point T, class W>
BasicQkv<T> compute_qkv(const BasicVar<T>& content, const BasicVar<T>& style, const W& w, double eps) {
  require_rank4(content.shape(), "compute_qkv content");
  require_rank4(style.shape(), "compute_qkv style");
  if (content.shape().n() != style.shape().n() || content.shape().c() != style.shape().c())
    throw ShapeError("compute_qkv: content " + content.shape().str() + " and style " + style.shape().str() +
                     " differ in batch or channels");
  return {apply_conv(channel_norm(content, eps), w.f_q), apply_conv(channel_norm(style, eps), w.f_k),
          apply_conv(style, w.f_v)};
}

template <std::floating_point T>
BasicVar<T> attention_map(const BasicVar<T>& content, const BasicVar<T>& style, const BasicAttnWeights<T>& w) {
  const auto qkv = compute_qkv(content, style, w);
  const Shape& cs = content.shape();
  const Shape& ss = style.shape();
  const auto q = reshape(qkv.q, Shape{cs.n(), cs.c(), cs.h() * cs.w()});
  const auto k = reshape(qkv.k, Shape{ss.n(), ss.c(), ss.h() * ss.w()});
  return softmax_rows(matmul(q, k, true, false));
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A V without holding the whole map: rows of content positions at a time.
template <class T>
BasicTensor<T> tiled_attention_values(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                      std::size_t tile_rows) {
  const Shape& qs = q.shape();
  const std::size_t N = qs.n(), C = qs.c(), P = qs.h() * qs.w();
  const std::size_t S = k.shape().h() * k.shape().w();
  const std::size_t rows = std::min(tile_rows, P);
  BasicTensor<T> out(qs);
  BasicTensor<T> tile(Shape{rows, S});
  using Map = Eigen::Map<RowMat<T>>;
  using CMap = Eigen::Map<const RowMat<T>>;
  for (std::size_t n = 0; n < N; ++n) {
    CMap Q(q.raw() + n * C * P, C, P);
    CMap K(k.raw() + n * C * S, C, S);
    CMap V(v.raw() + n * C * S, C, S);
    Map O(out.raw() + n * C * P, C, P);
    for (std::size_t r0 = 0; r0 < P; r0 += rows) {
      const std::size_t r = std::min(rows, P - r0);
      Map Sm(tile.raw(), r, S);
      Sm.noalias() = Q.middleCols(r0, r).transpose() * K;
      for (std::size_t i = 0; i < r; ++i) {
        auto row = Sm.row(i).array();
        row = (row - row.maxCoeff()).exp();
        const double sum = row.template cast<double>().sum();
        row *= static_cast<T>(1.0 / sum);
      }
      O.middleCols(r0, r).noalias() = V * Sm.transpose();
    }
  }
  MacScope::record(CostClass::pairwise, 2ull * N * P * S * C, 0);
  return out;
}

}  // namespace

template <std::floating_point T>
BasicVar<T> self_attention_forward(const BasicVar<T>& content, const BasicVar<T>& style,
                                   const BasicAttnWeights<T>& w, std::size_t tile_rows) {
  const Shape& cs = content.shape();
  const Shape& ss = style.shape();
  BasicVar<T> av;
  {
    auto qkv = compute_qkv(content, style, w);
    const bool tiled = tile_rows > 0 && !qkv.q.tracked() && !qkv.k.tracked() && !qkv.v.tracked();
    if (tiled) {
      av = tiled_attention_values(qkv.q.value(), qkv.k.value(), qkv.v.value(), tile_rows);
    } else {
      const auto q = reshape(qkv.q, Shape{cs.n(), cs.c(), cs.h() * cs.w()});
      const auto k = reshape(qkv.k, Shape{ss.n(), ss.c(), ss.h() * ss.w()});
      const auto v = reshape(qkv.v, Shape{ss.n(), ss.c(), ss.h() * ss.w()});
      qkv = {};
      auto a = softmax_rows(matmul(q, k, true, false));
      av = reshape(matmul(v, a, false, true), cs);
    }
  }
  return apply_conv(av, w.f_o) + content;
}

template <std::floating_point T>
BasicVar<T> relation_lambda(const BasicVar<T>& q, const BasicVar<T>& k, RelationMode mode) {
  const Shape s{q.shape().n(), 1, 1, 1};
  switch (mode) {
    case RelationMode::local_only: return BasicVar<T>(BasicTensor<T>(s, T(0)));
    case RelationMode::global_only: return BasicVar<T>(BasicTensor<T>(s, T(1)));
    case RelationMode::dual: break;
  }
  return cosine_lambda(pool_global(q, kernels::PoolKind::avg), pool_global(k, kernels::PoolKind::avg));
}

template <std::floating_point T>
BasicVar<T> dual_relation_fuse(const BasicVar<T>& q, const BasicVar<T>& k_s, const BasicVar<T>& lambda) {
  const auto q_c = pool_global(q, kernels::PoolKind::avg);
  return lambda * (q_c * k_s) + affine(lambda, -1.0, 1.0) * (q * k_s);
}

namespace {
template <class T>
BasicVar<T> global_descriptor(const BasicVar<T>& x, const BasicHsiWeights<T>& w, const HsiConfig& cfg) {
  const auto stats = channel_statistics(x, cfg.eps, cfg.stats);
  std::array<BasicDynamicAffine<T>, kNumStats> aff;
  for (std::size_t i = 0; i < kNumStats; ++i)
    if (cfg.stats[i]) aff[i] = dynamic_affine(x, w.dyn_w[i], w.dyn_b[i]);
  return aggregate_global_style<T>(stats, aff, cfg.stats);
}
}  // namespace

template <std::floating_point T>
BasicVar<T> hsi_forward(const BasicVar<T>& content, const BasicVar<T>& style, const BasicHsiWeights<T>& w,
                        const HsiConfig& cfg) {
  cfg.validate();
  BasicVar<T> o;
  {
    const auto qkv = compute_qkv(content, style, w, cfg.eps);
    BasicVar<T> a;
    {
      const auto k_s = global_descriptor(qkv.k, w, cfg);
      const auto lambda = relation_lambda(qkv.q, qkv.k, cfg.relation);
      const auto f_qk = dual_relation_fuse(qkv.q, k_s, lambda);
      a = cfg.score == ScoreNorm::channel_softmax ? softmax_channels(f_qk) : sigmoid(f_qk);
    }
    const auto v_s = global_descriptor(qkv.v, w, cfg);
    o = apply_conv(a * v_s, w.f_o);
  }
  return o + content;
}

template <std::floating_point T>
BasicVar<T> hsi_chain(const BasicVar<T>& content, const BasicVar<T>& style,
                      std::span<const BasicHsiWeights<T>> blocks, const HsiConfig& cfg) {
  if (blocks.empty()) throw ArgumentError("hsi_chain: no blocks");
  BasicVar<T> x = content;
  for (const auto& b : blocks) x = hsi_forward(x, style, b, cfg);
  return x;
}

#define HSI_INSTANTIATE_TRANSFER(T)                                                                              \
  template BasicHsiWeights<T> make_hsi_weights<T>(std::size_t, Rng&);                                            \
  template BasicAttnWeights<T> make_attn_weights<T>(std::size_t, Rng&);                                          \
  template BasicQkv<T> compute_qkv<T, BasicHsiWeights<T>>(const BasicVar<T>&, const BasicVar<T>&,                \
                                                          const BasicHsiWeights<T>&, double);                    \
  template BasicQkv<T> compute_qkv<T, BasicAttnWeights<T>>(const BasicVar<T>&, const BasicVar<T>&,               \
                                                           const BasicAttnWeights<T>&, double);                  \
  template BasicVar<T> attention_map<T>(const BasicVar<T>&, const BasicVar<T>&, const BasicAttnWeights<T>&);     \
  template BasicVar<T> self_attention_forward<T>(const BasicVar<T>&, const BasicVar<T>&,                         \
                                                 const BasicAttnWeights<T>&, std::size_t);                       \
  template BasicVar<T> relation_lambda<T>(const BasicVar<T>&, const BasicVar<T>&, RelationMode);                 \
  template BasicVar<T> dual_relation_fuse<T>(const BasicVar<T>&, const BasicVar<T>&, const BasicVar<T>&);        \
  template BasicVar<T> hsi_forward<T>(const BasicVar<T>&, const BasicVar<T>&, const BasicHsiWeights<T>&,         \
                                      const HsiConfig&);                                                         \
  template BasicVar<T> hsi_chain<T>(const BasicVar<T>&, const BasicVar<T>&, std::span<const BasicHsiWeights<T>>, \
                                    const HsiConfig&);

HSI_INSTANTIATE_TRANSFER(float)
HSI_INSTANTIATE_TRANSFER(double)

#undef HSI_INSTANTIATE_TRANSFER

}  // namespace hsi
