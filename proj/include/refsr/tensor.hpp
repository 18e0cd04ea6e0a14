#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "refsr/errors.hpp"

namespace refsr {

/// Vector whose buffer starts on Eigen's maximal SIMD alignment. Vectorized
/// reductions peel a prefix that depends on the start address, so a fixed
/// alignment is what keeps float results identical from run to run.
template <class T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense height x width x channels array, channel-interleaved (HWC), row major.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0) {
      throw DataError("tensor dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  const T& operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }

  bool same_shape(const Tensor& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(height_, width_, channels_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  AlignedVector<T> data_;
};

inline std::string shape_string(int h, int w, int c) {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

template <class T>
std::string shape_string(const Tensor<T>& t) {
  return shape_string(t.height(), t.width(), t.channels());
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DataError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                    shape_string(b));
  }
}

/// RGB image. Real-valued images hold values in [0, 1]; ImageU8 holds 8-bit codes.
template <class T>
class Image : public Tensor<T> {
 public:
  Image() = default;
  Image(int height, int width, T fill = T{}) : Tensor<T>(height, width, 3, fill) {}

  /// Adopts a 3-channel tensor.
  explicit Image(Tensor<T> t) : Tensor<T>(std::move(t)) {
    if (this->channels() != 3) {
      throw DataError("image must have 3 channels, got " + std::to_string(this->channels()));
    }
  }

  template <class U>
  Image<U> cast() const {
    return Image<U>(Tensor<T>::template cast<U>());
  }
};

using ImageTensor = Image<float>;
using ImageU8 = Image<std::uint8_t>;

/// Single-channel real plane (luma, SSIM maps).
using Plane = Tensor<double>;

template <class T>
void clamp_unit(Tensor<T>& t) {
  for (T& v : t.values()) v = std::clamp(v, T(0), T(1));
}

}  // namespace refsr
