#pragma once

#include <array>
#include <string>
#include <vector>

#include "hsi/style_stats.hpp"

namespace hsi {

enum class RelationMode { local_only, global_only, dual };
enum class ScoreNorm { channel_softmax, sigmoid };

struct HsiConfig {
  StatMask stats = kAllStats;
  RelationMode relation = RelationMode::dual;
  std::size_t blocks = 2;
  double eps = kernels::kDefaultEps;
  ScoreNorm score = ScoreNorm::channel_softmax;

  /// Throws ArgumentError for an empty statistic set or zero blocks.
  void validate() const;
};

template <std::floating_point T>
struct BasicAttnWeights {
  BasicConvWeights<T> f_q, f_k, f_v, f_o;

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f_q.for_each_param(prefix + ".f_q", f);
    f_k.for_each_param(prefix + ".f_k", f);
    f_v.for_each_param(prefix + ".f_v", f);
    f_o.for_each_param(prefix + ".f_o", f);
  }
  template <class F>
  void for_each_param(F&& f) {
    for_each_param(std::string("attn"), f);
  }
  template <std::floating_point U>
  BasicAttnWeights<U> cast() const {
    return {f_q.template cast<U>(), f_k.template cast<U>(), f_v.template cast<U>(), f_o.template cast<U>()};
  }
};

template <std::floating_point T>
struct BasicHsiWeights {
  BasicConvWeights<T> f_q, f_k, f_v, f_o;
  // Depthwise-separable convs producing the weight (avg-pooled) and bias
  // (max-pooled) of each statistic, indexed by Stat.
  std::array<BasicConvWeights<T>, kNumStats> dyn_w, dyn_b;

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f_q.for_each_param(prefix + ".f_q", f);
    f_k.for_each_param(prefix + ".f_k", f);
    f_v.for_each_param(prefix + ".f_v", f);
    f_o.for_each_param(prefix + ".f_o", f);
    for (std::size_t i = 0; i < kNumStats; ++i) {
      dyn_w[i].for_each_param(prefix + ".dyn_w." + std::string(kStatNames[i]), f);
      dyn_b[i].for_each_param(prefix + ".dyn_b." + std::string(kStatNames[i]), f);
    }
  }
  template <class F>
  void for_each_param(F&& f) {
    for_each_param(std::string("hsi"), f);
  }
  template <std::floating_point U>
  BasicHsiWeights<U> cast() const {
    BasicHsiWeights<U> o;
    o.f_q = f_q.template cast<U>();
    o.f_k = f_k.template cast<U>();
    o.f_v = f_v.template cast<U>();
    o.f_o = f_o.template cast<U>();
    for (std::size_t i = 0; i < kNumStats; ++i) {
      o.dyn_w[i] = dyn_w[i].template cast<U>();
      o.dyn_b[i] = dyn_b[i].template cast<U>();
    }
    return o;
  }
};

using AttnWeights = BasicAttnWeights<float>;
using HsiWeights = BasicHsiWeights<float>;

template <std::floating_point T>
BasicHsiWeights<T> make_hsi_weights(std::size_t channels, Rng& rng);
template <std::floating_point T>
BasicAttnWeights<T> make_attn_weights(std::size_t channels, Rng& rng);

template <std::floating_point T>
struct BasicQkv {
  BasicVar<T> q, k, v;
};

/// Q = f_q(norm(F_c)), K = f_k(norm(F_s)), V = f_v(F_s).
template <std::floating_point T, class W>
BasicQkv<T> compute_qkv(const BasicVar<T>& content, const BasicVar<T>& style, const W& w,
                        double eps = kernels::kDefaultEps);

/// Row-stochastic (N, H_c W_c, H_s W_s) attention map of the baseline.
template <std::floating_point T>
BasicVar<T> attention_map(const BasicVar<T>& content, const BasicVar<T>& style, const BasicAttnWeights<T>& w);

/// f_o(A V) + F_c. With `tile_rows` > 0 and untracked inputs the map is
/// evaluated in row blocks of that many content positions instead of being
/// materialized; the result is the same.
template <std::floating_point T>
BasicVar<T> self_attention_forward(const BasicVar<T>& content, const BasicVar<T>& style,
                                   const BasicAttnWeights<T>& w, std::size_t tile_rows = 0);

/// (N, 1, 1, 1) mixing coefficient of the two relations.
template <std::floating_point T>
BasicVar<T> relation_lambda(const BasicVar<T>& q, const BasicVar<T>& k, RelationMode mode);

/// lambda * (Q_c * K_s) + (1 - lambda) * (Q * K_s), Q_c the pooled Q.
template <std::floating_point T>
BasicVar<T> dual_relation_fuse(const BasicVar<T>& q, const BasicVar<T>& k_s, const BasicVar<T>& lambda);

template <std::floating_point T>
BasicVar<T> hsi_forward(const BasicVar<T>& content, const BasicVar<T>& style, const BasicHsiWeights<T>& w,
                        const HsiConfig& cfg);

/// Applies one block per entry of `blocks`, style fixed.
template <std::floating_point T>
BasicVar<T> hsi_chain(const BasicVar<T>& content, const BasicVar<T>& style,
                      std::span<const BasicHsiWeights<T>> blocks, const HsiConfig& cfg);

}  // namespace hsi
