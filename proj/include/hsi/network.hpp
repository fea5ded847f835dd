#pragma once

#include <array>
#include <string>
#include <vector>

#include "hsi/transfer.hpp"

namespace hsi {

enum class Arch { mini, vgg19 };

inline constexpr std::size_t kNumTaps = 4;  // relu1_1, relu2_1, relu3_1, relu4_1
inline constexpr std::array<std::string_view, kNumTaps> kTapNames{"relu1_1", "relu2_1", "relu3_1", "relu4_1"};

/// Channel count at relu4_1.
std::size_t feature_channels(Arch arch) noexcept;

template <std::floating_point T>
struct BasicEncoderLayer {
  BasicConvWeights<T> conv;
  bool pool_before = false;  // 2x2 max pool ahead of the conv (vgg19)
};

/// Every conv is followed by relu; the last layer of each stage is a tap.
template <std::floating_point T>
struct BasicEncoder {
  Arch arch = Arch::mini;
  std::array<std::vector<BasicEncoderLayer<T>>, kNumTaps> stages;

  template <class F>
  void for_each_param(F&& f) {
    for (std::size_t i = 0; i < kNumTaps; ++i)
      for (std::size_t j = 0; j < stages[i].size(); ++j)
        stages[i][j].conv.for_each_param("encoder.stage" + std::to_string(i + 1) + ".conv" + std::to_string(j + 1), f);
  }
  template <std::floating_point U>
  BasicEncoder<U> cast() const {
    BasicEncoder<U> o;
    o.arch = arch;
    for (std::size_t i = 0; i < kNumTaps; ++i)
      for (const auto& l : stages[i]) o.stages[i].push_back({l.conv.template cast<U>(), l.pool_before});
    return o;
  }
};

template <std::floating_point T>
struct BasicDecoderLayer {
  BasicConvWeights<T> conv;
  bool relu = true;
  bool upsample_after = false;
};

/// Mirror of the encoder; the output is clamped to [0, 1].
template <std::floating_point T>
struct BasicDecoder {
  Arch arch = Arch::mini;
  std::vector<BasicDecoderLayer<T>> layers;

  template <class F>
  void for_each_param(F&& f) {
    std::size_t stage = 1, conv = 1;
    for (auto& l : layers) {
      l.conv.for_each_param("decoder.stage" + std::to_string(stage) + ".conv" + std::to_string(conv), f);
      ++conv;
      if (l.upsample_after) {
        ++stage;
        conv = 1;
      }
    }
  }
  template <std::floating_point U>
  BasicDecoder<U> cast() const {
    BasicDecoder<U> o;
    o.arch = arch;
    for (const auto& l : layers) o.layers.push_back({l.conv.template cast<U>(), l.relu, l.upsample_after});
    return o;
  }
};

/// Encoder, HSI chain and decoder; the unit the weight file stores.
template <std::floating_point T>
struct BasicModel {
  BasicEncoder<T> encoder;
  std::vector<BasicHsiWeights<T>> hsi;
  BasicDecoder<T> decoder;

  template <class F>
  void for_each_param(F&& f) {
    encoder.for_each_param(f);
    for (std::size_t b = 0; b < hsi.size(); ++b) hsi[b].for_each_param("hsi.block" + std::to_string(b + 1), f);
    decoder.for_each_param(f);
  }
  template <std::floating_point U>
  BasicModel<U> cast() const {
    BasicModel<U> o;
    o.encoder = encoder.template cast<U>();
    for (const auto& b : hsi) o.hsi.push_back(b.template cast<U>());
    o.decoder = decoder.template cast<U>();
    return o;
  }
};

using Encoder = BasicEncoder<float>;
using Decoder = BasicDecoder<float>;
using Model = BasicModel<float>;

template <std::floating_point T>
BasicEncoder<T> make_encoder(Arch arch, Rng& rng);
template <std::floating_point T>
BasicDecoder<T> make_decoder(Arch arch, Rng& rng);
/// Seeded model: encoder, then `blocks` HSI blocks, then decoder.
template <std::floating_point T>
BasicModel<T> make_model(Arch arch, std::size_t blocks, std::uint64_t seed);

template <std::floating_point T>
using Taps = std::array<BasicVar<T>, kNumTaps>;

/// Features at every tap. Needs (N, 3, H, W) with H and W divisible by 8.
template <std::floating_point T>
Taps<T> encode(const BasicVar<T>& image, const BasicEncoder<T>& enc);

/// relu4_1 only.
template <std::floating_point T>
BasicVar<T> encode_last(const BasicVar<T>& image, const BasicEncoder<T>& enc);

template <std::floating_point T>
BasicVar<T> decode(const BasicVar<T>& features, const BasicDecoder<T>& dec);

template <std::floating_point T>
BasicVar<T> stylize(const BasicVar<T>& content, const BasicVar<T>& style, const BasicModel<T>& model,
                    const HsiConfig& cfg);

/// BT.601 luma replicated to three channels.
template <std::floating_point T>
BasicVar<T> grayscale(const BasicVar<T>& image);

}  // namespace hsi
