#pragma once

// Slow reference implementations and fixtures shared by the tests.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "hsi/image_io.hpp"
#include "hsi/tensor.hpp"
#include "hsi/transfer.hpp"

namespace oracle {

struct Moments {
  double mean = 0, std = 0, skew = 0, kurt = 0;
};

// Two passes in long double. skew and kurt divide by (std + eps)^k.
inline Moments stats_oracle(const std::vector<double>& x, double eps) {
  long double s = 0;
  for (double v : x) s += v;
  const long double mean = s / x.size();
  long double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    const long double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= x.size();
  m3 /= x.size();
  m4 /= x.size();
  const long double sd = std::sqrt(m2);
  const long double sc = sd + eps;
  Moments m;
  m.mean = double(mean);
  m.std = double(sd);
  m.skew = sc > 0 ? double(m3 / (sc * sc * sc)) : 0.0;
  m.kurt = sc > 0 ? double(m4 / (sc * sc * sc * sc)) : 0.0;
  return m;
}

template <class T>
std::vector<double> channel(const hsi::BasicTensor<T>& x, std::size_t n, std::size_t c) {
  std::vector<double> out;
  for (std::size_t h = 0; h < x.shape().h(); ++h)
    for (std::size_t w = 0; w < x.shape().w(); ++w) out.push_back(double(x.at(n, c, h, w)));
  return out;
}

// Valid convolution, direct loops.
inline hsi::TensorD conv2d(const hsi::TensorD& x, const hsi::TensorD& k, const hsi::TensorD* bias, std::size_t stride) {
  const auto& xs = x.shape();
  const auto& ks = k.shape();
  const std::size_t Ho = (xs.h() - ks.h()) / stride + 1, Wo = (xs.w() - ks.w()) / stride + 1;
  hsi::TensorD y(hsi::Shape{xs.n(), ks.n(), Ho, Wo});
  for (std::size_t n = 0; n < xs.n(); ++n)
    for (std::size_t o = 0; o < ks.n(); ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (std::size_t c = 0; c < xs.c(); ++c)
            for (std::size_t a = 0; a < ks.h(); ++a)
              for (std::size_t b = 0; b < ks.w(); ++b)
                acc += x.at(n, c, i * stride + a, j * stride + b) * k.at(o, c, a, b);
          y.at(n, o, i, j) = acc;
        }
  return y;
}

// softmax_j(q_i . k_j) rows for one sample, q (C,P) and k (C,S).
inline std::vector<std::vector<double>> attention_rows(const hsi::TensorD& q, const hsi::TensorD& k, std::size_t n) {
  const std::size_t C = q.shape().c(), P = q.shape().h() * q.shape().w(), S = k.shape().h() * k.shape().w();
  std::vector<std::vector<double>> a(P, std::vector<double>(S));
  for (std::size_t i = 0; i < P; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < S; ++j) {
      double d = 0;
      for (std::size_t c = 0; c < C; ++c) d += q[(n * C + c) * P + i] * k[(n * C + c) * S + j];
      a[i][j] = d;
      mx = std::max(mx, d);
    }
    double sum = 0;
    for (auto& v : a[i]) sum += (v = std::exp(v - mx));
    for (auto& v : a[i]) v /= sum;
  }
  return a;
}

template <class T = float>
hsi::BasicTensor<T> normal(const hsi::Shape& s, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  hsi::BasicTensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

// Smooth colour pattern, deterministic in `variant`.
inline hsi::Tensor pattern_image(std::size_t h, std::size_t w, int variant) {
  hsi::Tensor t(hsi::Shape{1, 3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double u = double(x) / w, v = double(y) / h;
      t.at(0, 0, y, x) = float(0.5 + 0.4 * std::sin(6.0 * u + variant));
      t.at(0, 1, y, x) = float(0.5 + 0.4 * std::cos(5.0 * v + 0.7 * variant));
      t.at(0, 2, y, x) = float(0.5 + 0.3 * std::sin(9.0 * u * v + 1.3 * variant));
    }
  return t;
}

// Blocky noise, a second kind of texture.
inline hsi::Tensor noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  hsi::Tensor t(hsi::Shape{1, 3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    const double base = d(rng);
    for (std::size_t y = 0; y < h; y += 4)
      for (std::size_t x = 0; x < w; x += 4) {
        const float v = float(0.5 * base + 0.5 * d(rng));
        for (std::size_t a = y; a < std::min(h, y + 4); ++a)
          for (std::size_t b = x; b < std::min(w, x + 4); ++b) t.at(0, c, a, b) = v;
      }
  }
  return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("hsi_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace oracle
