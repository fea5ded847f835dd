#include "hsi/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace hsi {

Tensor read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot read PNG '" + path + "': " + img.message);
  img.format = PNG_FORMAT_RGBA;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path + "': " + msg);
  }
  const std::size_t H = img.height, W = img.width;
  Tensor t(Shape{1, 3, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) t.at(0, c, y, x) = float(buf[(y * W + x) * 4 + c]) / 255.0f;
  return t;
}

void write_png(const std::string& path, const Tensor& image) {
  const Shape& s = image.shape();
  require_rank4(s, "write_png");
  if (s.n() != 1 || s.c() != 3) throw ShapeError("write_png: expected (1,3,H,W), got " + s.str());
  const std::size_t H = s.h(), W = s.w();
  std::vector<png_byte> buf(H * W * 3);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(double(image.at(0, c, y, x)), 0.0, 1.0);
        buf[(y * W + x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(W);
  img.height = static_cast<png_uint_32>(H);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + img.message);
}

Tensor resize_bilinear(const Tensor& image, std::size_t h, std::size_t w) {
  const Shape& s = image.shape();
  require_rank4(s, "resize");
  if (h == 0 || w == 0) throw ShapeError("resize: target size must be positive");
  if (s.h() == h && s.w() == w) return image;
  Tensor out(Shape{s.n(), s.c(), h, w});
  const double sy = double(s.h()) / double(h), sx = double(s.w()) / double(w);
  const auto coord = [](double src, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
    src = std::clamp(src, 0.0, double(n - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, n - 1);
    f = src - double(i0);
  };
  for (std::size_t y = 0; y < h; ++y) {
    std::size_t y0, y1;
    double fy;
    coord((y + 0.5) * sy - 0.5, s.h(), y0, y1, fy);
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t x0, x1;
      double fx;
      coord((x + 0.5) * sx - 0.5, s.w(), x0, x1, fx);
      for (std::size_t n = 0; n < s.n(); ++n)
        for (std::size_t c = 0; c < s.c(); ++c) {
          const double top = image.at(n, c, y0, x0) * (1 - fx) + image.at(n, c, y0, x1) * fx;
          const double bot = image.at(n, c, y1, x0) * (1 - fx) + image.at(n, c, y1, x1) * fx;
          out.at(n, c, y, x) = static_cast<float>(top * (1 - fy) + bot * fy);
        }
    }
  }
  return out;
}

Tensor center_crop(const Tensor& image, std::size_t h, std::size_t w) {
  const Shape& s = image.shape();
  require_rank4(s, "center_crop");
  if (h == 0 || w == 0 || h > s.h() || w > s.w())
    throw ShapeError("center_crop: cannot crop " + s.str() + " to " + std::to_string(h) + "x" + std::to_string(w));
  const std::size_t oy = (s.h() - h) / 2, ox = (s.w() - w) / 2;
  Tensor out(Shape{s.n(), s.c(), h, w});
  for (std::size_t n = 0; n < s.n(); ++n)
    for (std::size_t c = 0; c < s.c(); ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(n, c, y, x) = image.at(n, c, y + oy, x + ox);
  return out;
}

Tensor crop_to_multiple_of_8(const Tensor& image) {
  const Shape& s = image.shape();
  require_rank4(s, "crop");
  if (s.h() < 8 || s.w() < 8)
    throw ShapeError("image " + std::to_string(s.h()) + "x" + std::to_string(s.w()) +
                     " is too small; both sides must be at least 8");
  if (s.h() % 8 == 0 && s.w() % 8 == 0) return image;
  return center_crop(image, s.h() / 8 * 8, s.w() / 8 * 8);
}

Tensor resize_crop_square(const Tensor& image, std::size_t side) {
  const Shape& s = image.shape();
  require_rank4(s, "resize");
  const std::size_t shorter = std::min(s.h(), s.w());
  const auto scaled = [&](std::size_t e) {
    return std::max<std::size_t>(side, static_cast<std::size_t>(std::lround(double(e) * side / double(shorter))));
  };
  return center_crop(resize_bilinear(image, scaled(s.h()), scaled(s.w())), side, side);
}

}  // namespace hsi
