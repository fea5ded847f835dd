#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hsi/losses.hpp"

namespace hsi {

/// Sorted *.png paths directly inside `dir`. Throws IoError for a missing
/// directory and ArgumentError when it holds no PNG.
std::vector<std::string> list_png_files(const std::string& dir);

/// Every image resized so its shorter side is `side`, then center-cropped square.
std::vector<Tensor> load_square_images(const std::vector<std::string>& paths, std::size_t side);

struct TrainConfig {
  std::size_t iters = 200;
  std::size_t batch = 4;
  bool adversarial = true;
  std::uint64_t seed = 42;
  Arch arch = Arch::mini;
  HsiConfig hsi{};
  LossWeights weights{};
  AdamConfig adam{};
};

struct LossRow {
  std::size_t iter = 0;
  double total = 0.0;
  double style = 0.0;
  double content = 0.0;
  double adv = 0.0;
};

inline constexpr std::string_view kLossLogHeader = "iter,total,style,content,adv";
std::string format_loss_row(const LossRow& row);

struct TrainResult {
  Model model;
  std::vector<LossRow> log;
};

/// Adam on the HSI blocks and decoder with the encoder frozen. Batches cycle
/// through the images in order. Each row holds the losses before its update.
TrainResult train_toy(const std::vector<Tensor>& content, const std::vector<Tensor>& style, const TrainConfig& cfg,
                      const std::function<void(const LossRow&)>& on_row = {});

}  // namespace hsi
