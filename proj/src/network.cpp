#include "hsi/network.hpp"

namespace hsi {

std::size_t feature_channels(Arch arch) noexcept { return arch == Arch::mini ? 128 : 512; }

namespace {
template <class T>
BasicConvWeights<T> conv3(std::size_t ci, std::size_t co, Rng& rng, std::size_t stride = 1) {
  return make_conv<T>(ConvKind::dense, ci, co, rng, 3, stride, kernels::PadMode::reflect);
}
}  // namespace

template <std::floating_point T>
BasicEncoder<T> make_encoder(Arch arch, Rng& rng) {
  BasicEncoder<T> e;
  e.arch = arch;
  if (arch == Arch::mini) {
    // Stride-2 convs do the downsampling.
    e.stages[0].push_back({conv3<T>(3, 16, rng), false});
    e.stages[1].push_back({conv3<T>(16, 32, rng, 2), false});
    e.stages[2].push_back({conv3<T>(32, 64, rng, 2), false});
    e.stages[3].push_back({conv3<T>(64, 128, rng, 2), false});
    return e;
  }
  e.stages[0].push_back({conv3<T>(3, 64, rng), false});
  e.stages[1].push_back({conv3<T>(64, 64, rng), false});
  e.stages[1].push_back({conv3<T>(64, 128, rng), true});
  e.stages[2].push_back({conv3<T>(128, 128, rng), false});
  e.stages[2].push_back({conv3<T>(128, 256, rng), true});
  for (int i = 0; i < 3; ++i) e.stages[3].push_back({conv3<T>(256, 256, rng), false});
  e.stages[3].push_back({conv3<T>(256, 512, rng), true});
  return e;
}

template <std::floating_point T>
BasicDecoder<T> make_decoder(Arch arch, Rng& rng) {
  BasicDecoder<T> d;
  d.arch = arch;
  if (arch == Arch::mini) {
    d.layers.push_back({conv3<T>(128, 64, rng), true, true});
    d.layers.push_back({conv3<T>(64, 32, rng), true, true});
    d.layers.push_back({conv3<T>(32, 16, rng), true, true});
    d.layers.push_back({conv3<T>(16, 3, rng), false, false});
    return d;
  }
  d.layers.push_back({conv3<T>(512, 256, rng), true, true});
  for (int i = 0; i < 3; ++i) d.layers.push_back({conv3<T>(256, 256, rng), true, false});
  d.layers.push_back({conv3<T>(256, 128, rng), true, true});
  d.layers.push_back({conv3<T>(128, 128, rng), true, false});
  d.layers.push_back({conv3<T>(128, 64, rng), true, true});
  d.layers.push_back({conv3<T>(64, 64, rng), true, false});
  d.layers.push_back({conv3<T>(64, 3, rng), false, false});
  return d;
}

template <std::floating_point T>
BasicModel<T> make_model(Arch arch, std::size_t blocks, std::uint64_t seed) {
  if (blocks == 0) throw ArgumentError("model: block count must be at least 1");
  Rng rng(seed);
  BasicModel<T> m;
  m.encoder = make_encoder<T>(arch, rng);
  for (std::size_t b = 0; b < blocks; ++b) m.hsi.push_back(make_hsi_weights<T>(feature_channels(arch), rng));
  m.decoder = make_decoder<T>(arch, rng);
  return m;
}

namespace {
template <class T>
void check_image(const Shape& s, const char* what) {
  require_rank4(s, what);
  if (s.c() != 3) throw ShapeError(std::string(what) + ": expected 3 channels, got " + s.str());
  if (s.h() % 8 || s.w() % 8)
    throw ShapeError(std::string(what) + ": H and W must be divisible by 8, got " + s.str());
}

template <class T>
BasicVar<T> run_stage(BasicVar<T> x, const std::vector<BasicEncoderLayer<T>>& stage) {
  for (const auto& l : stage) {
    if (l.pool_before) x = max_pool2x2(x);
    x = relu(apply_conv(x, l.conv));
  }
  return x;
}
}  // namespace

template <std::floating_point T>
Taps<T> encode(const BasicVar<T>& image, const BasicEncoder<T>& enc) {
  check_image<T>(image.shape(), "encode");
  Taps<T> taps;
  BasicVar<T> x = image;
  for (std::size_t i = 0; i < kNumTaps; ++i) taps[i] = x = run_stage(x, enc.stages[i]);
  return taps;
}

template <std::floating_point T>
BasicVar<T> encode_last(const BasicVar<T>& image, const BasicEncoder<T>& enc) {
  check_image<T>(image.shape(), "encode");
  BasicVar<T> x = image;
  for (const auto& stage : enc.stages) x = run_stage(x, stage);
  return x;
}

template <std::floating_point T>
BasicVar<T> decode(const BasicVar<T>& features, const BasicDecoder<T>& dec) {
  require_rank4(features.shape(), "decode");
  if (dec.layers.empty()) throw ArgumentError("decode: empty decoder");
  if (features.shape().c() != dec.layers.front().conv.in_channels())
    throw ShapeError("decode: expected " + std::to_string(dec.layers.front().conv.in_channels()) +
                     " feature channels, got " + features.shape().str());
  BasicVar<T> x = features;
  for (const auto& l : dec.layers) {
    x = apply_conv(x, l.conv);
    if (l.relu) x = relu(x);
    if (l.upsample_after) x = upsample_nearest2x(x);
  }
  return clamp(x, 0.0, 1.0);
}

template <std::floating_point T>
BasicVar<T> stylize(const BasicVar<T>& content, const BasicVar<T>& style, const BasicModel<T>& model,
                    const HsiConfig& cfg) {
  if (model.hsi.size() != cfg.blocks)
    throw ArgumentError("stylize: model has " + std::to_string(model.hsi.size()) + " HSI blocks, config asks for " +
                        std::to_string(cfg.blocks));
  const auto f_c = encode_last(content, model.encoder);
  const auto f_s = encode_last(style, model.encoder);
  return decode(hsi_chain<T>(f_c, f_s, model.hsi, cfg), model.decoder);
}

template <std::floating_point T>
BasicVar<T> grayscale(const BasicVar<T>& image) {
  require_rank4(image.shape(), "grayscale");
  if (image.shape().c() != 3) throw ShapeError("grayscale: expected 3 channels, got " + image.shape().str());
  BasicTensor<T> k(Shape{3, 3, 1, 1});
  for (std::size_t o = 0; o < 3; ++o) {
    k[o * 3 + 0] = static_cast<T>(0.299);
    k[o * 3 + 1] = static_cast<T>(0.587);
    k[o * 3 + 2] = static_cast<T>(0.114);
  }
  return conv2d(image, BasicVar<T>(std::move(k)), BasicVar<T>());
}

#define HSI_INSTANTIATE_NETWORK(T)                                                                              \
  template BasicEncoder<T> make_encoder<T>(Arch, Rng&);                                                         \
  template BasicDecoder<T> make_decoder<T>(Arch, Rng&);                                                         \
  template BasicModel<T> make_model<T>(Arch, std::size_t, std::uint64_t);                                       \
  template Taps<T> encode<T>(const BasicVar<T>&, const BasicEncoder<T>&);                                       \
  template BasicVar<T> encode_last<T>(const BasicVar<T>&, const BasicEncoder<T>&);                              \
  template BasicVar<T> decode<T>(const BasicVar<T>&, const BasicDecoder<T>&);                                   \
  template BasicVar<T> stylize<T>(const BasicVar<T>&, const BasicVar<T>&, const BasicModel<T>&, const HsiConfig&); \
  template BasicVar<T> grayscale<T>(const BasicVar<T>&);

HSI_INSTANTIATE_NETWORK(float)
HSI_INSTANTIATE_NETWORK(double)

#undef HSI_INSTANTIATE_NETWORK

}  // namespace hsi
