#include "hsi/losses.hpp"

#include <cmath>

namespace hsi {

template <std::floating_point T>
BasicVar<T> style_loss_from_features(const Taps<T>& a, const Taps<T>& b) {
  BasicVar<T> acc;
  for (std::size_t i = 0; i < kNumTaps; ++i) {
    if (a[i].shape().n() != b[i].shape().n() || a[i].shape().c() != b[i].shape().c())
      throw ShapeError("style_loss: tap " + std::string(kTapNames[i]) + " shapes " + a[i].shape().str() + " and " +
                       b[i].shape().str() + " differ");
    const auto d_mu = l2norm_per_sample(moment(a[i], kernels::Moment::mean, 0.0) - moment(b[i], kernels::Moment::mean, 0.0));
    const auto d_sd = l2norm_per_sample(moment(a[i], kernels::Moment::std, 0.0) - moment(b[i], kernels::Moment::std, 0.0));
    const auto term = d_mu + d_sd;
    acc = acc.defined() ? acc + term : term;
  }
  return mean_all(acc);
}

template <std::floating_point T>
BasicVar<T> style_loss(const BasicVar<T>& stylized, const BasicVar<T>& style, const BasicEncoder<T>& enc) {
  return style_loss_from_features(encode(stylized, enc), encode(style, enc));
}

template <std::floating_point T>
BasicVar<T> feature_distance(const Taps<T>& a, const Taps<T>& b) {
  BasicVar<T> acc;
  for (std::size_t i = 0; i < kNumTaps; ++i) {
    const auto term = l2norm_per_sample(a[i] - b[i]);
    acc = acc.defined() ? acc + term : term;
  }
  return mean_all(acc);
}

template <std::floating_point T>
BasicVar<T> content_loss(const BasicVar<T>& stylized, const BasicVar<T>& content, const BasicEncoder<T>& enc) {
  if (stylized.shape() != content.shape())
    throw ShapeError("content_loss: shapes " + stylized.shape().str() + " and " + content.shape().str() + " differ");
  return feature_distance(encode(stylized, enc), encode(content, enc)) +
         feature_distance(encode(grayscale(stylized), enc), encode(grayscale(content), enc));
}

template <std::floating_point T>
BasicDiscriminator<T> make_discriminator(Rng& rng) {
  BasicDiscriminator<T> d;
  constexpr std::array<std::size_t, 4> ch{3, 16, 32, 1};
  for (auto& scale : d.scales)
    for (std::size_t l = 0; l < 3; ++l)
      scale[l] = make_conv<T>(ConvKind::dense, ch[l], ch[l + 1], rng, 3, 2, kernels::PadMode::zero);
  return d;
}

template <std::floating_point T>
std::array<BasicVar<T>, 2> discriminate(const BasicVar<T>& image, const BasicDiscriminator<T>& d) {
  require_rank4(image.shape(), "discriminator");
  if (image.shape().c() != 3) throw ShapeError("discriminator: expected 3 channels, got " + image.shape().str());
  std::array<BasicVar<T>, 2> out;
  BasicVar<T> x = image;
  for (std::size_t s = 0; s < 2; ++s) {
    if (s == 1) x = avg_pool2x2(image);
    BasicVar<T> h = x;
    for (std::size_t l = 0; l < 3; ++l) {
      h = apply_conv(h, d.scales[s][l]);
      if (l < 2) h = relu(h);
    }
    out[s] = h;
  }
  return out;
}

template <std::floating_point T>
BasicAdvLosses<T> adversarial_loss(const BasicVar<T>& fake, const BasicVar<T>& real, const BasicDiscriminator<T>& d) {
  if (fake.shape().c() != real.shape().c())
    throw ShapeError("adversarial_loss: fake " + fake.shape().str() + " and real " + real.shape().str() +
                     " differ in channels");
  const auto f = discriminate(fake, d);
  const auto fd = discriminate(fake.detached(), d);
  const auto r = discriminate(real, d);
  BasicVar<T> gen, disc;
  for (std::size_t s = 0; s < 2; ++s) {
    const auto g = bce_logits_mean(f[s], 1.0, kLogitClamp);
    const auto dl = bce_logits_mean(r[s], 1.0, kLogitClamp) + bce_logits_mean(fd[s], 0.0, kLogitClamp);
    gen = gen.defined() ? gen + g : g;
    disc = disc.defined() ? disc + dl : dl;
  }
  return {affine(gen, 0.5), affine(disc, 0.5)};
}

template <std::floating_point T>
BasicVar<T> total_loss(const BasicLossParts<T>& p, const LossWeights& w) {
  return affine(p.style, w.style) + affine(p.content, w.content) + affine(p.adv, w.adv);
}

double total_loss(double style, double content, double adv, const LossWeights& w) {
  return w.style * style + w.content * content + w.adv * adv;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& st, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter and gradient counts differ");
  if (!(cfg.lr > 0)) throw ArgumentError("adam: learning rate must be positive");
  if (st.m.empty()) {
    for (const Tensor* p : params) {
      st.m.emplace_back(p->shape());
      st.v.emplace_back(p->shape());
    }
  }
  if (st.m.size() != params.size()) throw ShapeError("adam: state does not match parameter count");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i].shape() || st.m[i].shape() != grads[i].shape())
      throw ShapeError("adam: gradient shape " + grads[i].shape().str() + " does not match parameter " +
                       params[i]->shape().str());
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double gj = g[j];
      const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double step = cfg.lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.eps);
      p[j] = static_cast<float>(p[j] - step);
    }
  }
}

#define HSI_INSTANTIATE_LOSSES(T)                                                                               \
  template BasicVar<T> style_loss_from_features<T>(const Taps<T>&, const Taps<T>&);                             \
  template BasicVar<T> style_loss<T>(const BasicVar<T>&, const BasicVar<T>&, const BasicEncoder<T>&);           \
  template BasicVar<T> feature_distance<T>(const Taps<T>&, const Taps<T>&);                                     \
  template BasicVar<T> content_loss<T>(const BasicVar<T>&, const BasicVar<T>&, const BasicEncoder<T>&);         \
  template BasicDiscriminator<T> make_discriminator<T>(Rng&);                                                   \
  template std::array<BasicVar<T>, 2> discriminate<T>(const BasicVar<T>&, const BasicDiscriminator<T>&);        \
  template BasicAdvLosses<T> adversarial_loss<T>(const BasicVar<T>&, const BasicVar<T>&,                        \
                                                 const BasicDiscriminator<T>&);                                 \
  template BasicVar<T> total_loss<T>(const BasicLossParts<T>&, const LossWeights&);

HSI_INSTANTIATE_LOSSES(float)
HSI_INSTANTIATE_LOSSES(double)

#undef HSI_INSTANTIATE_LOSSES

}  // namespace hsi
