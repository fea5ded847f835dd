#pragma once

#include <string>

#include "hsi/tensor.hpp"

namespace hsi {

/// (1, 3, H, W) RGB in [0, 1]. Palette, gray and 16-bit inputs are converted;
/// alpha is dropped.
Tensor read_png(const std::string& path);

/// 8-bit RGB; values are clamped to [0, 1] and rounded half away from zero.
void write_png(const std::string& path, const Tensor& image);

/// Bilinear resample with half-pixel centers and clamped borders.
Tensor resize_bilinear(const Tensor& image, std::size_t h, std::size_t w);

Tensor center_crop(const Tensor& image, std::size_t h, std::size_t w);

/// Center-crop H and W down to multiples of 8. Throws ShapeError when a side
/// is shorter than 8.
Tensor crop_to_multiple_of_8(const Tensor& image);

/// Resize so the shorter side is `side`, then center-crop side x side.
Tensor resize_crop_square(const Tensor& image, std::size_t side);

}  // namespace hsi
