#pragma once

#include <array>
#include <vector>

#include "hsi/network.hpp"

namespace hsi {

struct LossWeights {
  double style = 60.0;
  double content = 5.0;
  double adv = 50.0;
};

template <std::floating_point T>
struct BasicLossParts {
  BasicVar<T> style, content, adv;
};

/// Sum over taps of |mu(a) - mu(b)|_2 + |sigma(a) - sigma(b)|_2, mean over batch.
template <std::floating_point T>
BasicVar<T> style_loss_from_features(const Taps<T>& a, const Taps<T>& b);

template <std::floating_point T>
BasicVar<T> style_loss(const BasicVar<T>& stylized, const BasicVar<T>& style, const BasicEncoder<T>& enc);

/// Sum over taps of unsquared feature distances, mean over batch.
template <std::floating_point T>
BasicVar<T> feature_distance(const Taps<T>& a, const Taps<T>& b);

/// Color term plus the same distance between gray versions.
template <std::floating_point T>
BasicVar<T> content_loss(const BasicVar<T>& stylized, const BasicVar<T>& content, const BasicEncoder<T>& enc);

/// Two scales (full, 2x average-pooled), each three zero-padded stride-2 3x3
/// convs 3->16->32->1 with relu between, ending in patch logits.
template <std::floating_point T>
struct BasicDiscriminator {
  std::array<std::array<BasicConvWeights<T>, 3>, 2> scales;

  template <class F>
  void for_each_param(F&& f) {
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t l = 0; l < 3; ++l)
        scales[s][l].for_each_param("disc.scale" + std::to_string(s + 1) + ".conv" + std::to_string(l + 1), f);
  }
  template <std::floating_point U>
  BasicDiscriminator<U> cast() const {
    BasicDiscriminator<U> o;
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t l = 0; l < 3; ++l) o.scales[s][l] = scales[s][l].template cast<U>();
    return o;
  }
};

using Discriminator = BasicDiscriminator<float>;

template <std::floating_point T>
BasicDiscriminator<T> make_discriminator(Rng& rng);

/// Patch logits per scale.
template <std::floating_point T>
std::array<BasicVar<T>, 2> discriminate(const BasicVar<T>& image, const BasicDiscriminator<T>& d);

inline constexpr double kLogitClamp = 20.0;

template <std::floating_point T>
struct BasicAdvLosses {
  BasicVar<T> generator;
  BasicVar<T> discriminator;
};

/// Non-saturating BCE over both scales. The discriminator term sees `fake`
/// detached, so its gradient reaches only discriminator parameters.
template <std::floating_point T>
BasicAdvLosses<T> adversarial_loss(const BasicVar<T>& fake, const BasicVar<T>& real, const BasicDiscriminator<T>& d);

template <std::floating_point T>
BasicVar<T> total_loss(const BasicLossParts<T>& parts, const LossWeights& w);

double total_loss(double style, double content, double adv, const LossWeights& w);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& cfg = {});

/// Adam over every parameter `weights` visits; `grad_of` maps a parameter
/// name to its gradient (empty for none).
template <class W, class G>
void adam_update(W& weights, G&& grad_of, AdamState& state, const AdamConfig& cfg = {}) {
  std::vector<Tensor> values, grads;
  weights.for_each_param([&](std::string_view name, Var& p) {
    values.push_back(p.value());
    Tensor g = grad_of(name, p);
    grads.push_back(g.empty() ? Tensor(p.shape()) : std::move(g));
  });
  std::vector<Tensor*> ptrs;
  for (auto& v : values) ptrs.push_back(&v);
  adam_step(ptrs, grads, state, cfg);
  std::size_t i = 0;
  weights.for_each_param([&](std::string_view, Var& p) { p = Var(std::move(values[i++])); });
}

}  // namespace hsi
