#pragma once

#include <array>
#include <concepts>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "hsi/error.hpp"
#include "hsi/memory.hpp"

namespace hsi {

/// Up to four positive extents. Rank-4 shapes follow (N, C, H, W).
/// A default-constructed shape has rank 0 and describes an empty tensor.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::span<const std::size_t> dims);

  std::size_t rank() const noexcept { return rank_; }
  std::size_t operator[](std::size_t i) const noexcept { return dims_[i]; }
  std::span<const std::size_t> dims() const noexcept { return {dims_.data(), rank_}; }
  std::size_t numel() const noexcept;

  // NCHW accessors; valid for rank-4 shapes only.
  std::size_t n() const noexcept { return dims_[0]; }
  std::size_t c() const noexcept { return dims_[1]; }
  std::size_t h() const noexcept { return dims_[2]; }
  std::size_t w() const noexcept { return dims_[3]; }

  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    if (a.rank_ != b.rank_) return false;
    for (std::size_t i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

 private:
  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

/// Throws ShapeError unless `s` is rank 4.
void require_rank4(const Shape& s, const char* what);

/// Dense row-major array (last axis fastest). Value semantics.
template <std::floating_point T>
class BasicTensor {
 public:
  using value_type = T;
  using Storage = std::vector<T, memory::TrackingAllocator<T>>;

  BasicTensor() = default;
  explicit BasicTensor(const Shape& shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {}
  BasicTensor(const Shape& shape, std::span<const T> values) : shape_(shape), data_(values.begin(), values.end()) {
    check_size();
  }
  BasicTensor(const Shape& shape, std::initializer_list<T> values) : shape_(shape), data_(values) { check_size(); }

  static BasicTensor zeros(const Shape& s) { return BasicTensor(s, T(0)); }
  static BasicTensor ones(const Shape& s) { return BasicTensor(s, T(1)); }
  static BasicTensor full(const Shape& s, T v) { return BasicTensor(s, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_.c() + c) * shape_.h() + h) * shape_.w() + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_.c() + c) * shape_.h() + h) * shape_.w() + w];
  }

  /// Same data, new shape with equal element count.
  BasicTensor reshaped(const Shape& s) const {
    if (s.numel() != numel())
      throw ShapeError("reshape: cannot view " + shape_.str() + " as " + s.str());
    BasicTensor out(*this);
    out.shape_ = s;
    return out;
  }

  template <std::floating_point U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  void check_size() const {
    if (data_.size() != shape_.numel())
      throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fill shape " + shape_.str());
  }

  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Concatenate rank-4 tensors along the batch axis.
template <std::floating_point T>
BasicTensor<T> concat_batch(std::span<const BasicTensor<T>> parts);

/// Copy of sample `n` of a rank-4 tensor, shape (1, C, H, W).
template <std::floating_point T>
BasicTensor<T> batch_item(const BasicTensor<T>& x, std::size_t n);

}  // namespace hsi
