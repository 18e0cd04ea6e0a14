#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "refsr/errors.hpp"
#include "refsr/tensor.hpp"

namespace refsr {

// ---------------------------------------------------------------------------
// Colour

/// BT.601 luma on the digital [16, 235] scale for RGB in [0, 1].
inline double luma_bt601(double r, double g, double b) {
  return 16.0 + 65.481 * r + 128.553 * g + 24.966 * b;
}

template <class T>
Plane rgb_to_y(const Image<T>& img) {
  Plane y(img.height(), img.width(), 1);
  const T* src = img.data();
  double* dst = y.data();
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    dst[i] = luma_bt601(static_cast<double>(src[3 * i]), static_cast<double>(src[3 * i + 1]),
                        static_cast<double>(src[3 * i + 2]));
  }
  return y;
}

// ---------------------------------------------------------------------------
// Quantization (file boundary only)

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline float dequantize(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

inline ImageU8 quantize(const ImageTensor& img) {
  ImageU8 out(img.height(), img.width());
  std::transform(img.data(), img.data() + img.size(), out.data(),
                 [](float v) { return quantize(static_cast<double>(v)); });
  return out;
}

inline ImageTensor dequantize(const ImageU8& img) {
  ImageTensor out(img.height(), img.width());
  std::transform(img.data(), img.data() + img.size(), out.data(),
                 [](std::uint8_t v) { return dequantize(v); });
  return out;
}

// ---------------------------------------------------------------------------
// Bicubic resampling

/// Positive rational resize factor.
struct Scale {
  int num = 1;
  int den = 1;

  double value() const { return static_cast<double>(num) / den; }
  static Scale up(int f) { return {f, 1}; }
  static Scale down(int f) { return {1, f}; }
};

/// Keys cubic convolution kernel.
inline double cubic_kernel(double x, double a = -0.5) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return a * (((ax - 5.0) * ax + 8.0) * ax - 4.0);
  return 0.0;
}

namespace detail {

/// Per-output-sample tap list for one axis.
struct ResampleTaps {
  std::vector<int> offset;  // first tap index into `index`/`weight` for each output
  std::vector<int> count;
  std::vector<int> index;
  std::vector<double> weight;
};

/// Half-pixel-centred mapping. When shrinking, the kernel is stretched by
/// 1/scale (antialiasing). Taps outside the input are clamped to the edge and
/// weights are normalized to sum to one.
inline ResampleTaps resample_taps(int in_size, int out_size, double scale) {
  ResampleTaps taps;
  const double kscale = scale < 1.0 ? scale : 1.0;
  const double support = 2.0 / kscale;
  taps.offset.resize(out_size);
  taps.count.resize(out_size);
  for (int u = 0; u < out_size; ++u) {
    const double x = (u + 0.5) / scale - 0.5;
    const int first = static_cast<int>(std::floor(x - support)) + 1;
    const int last = static_cast<int>(std::ceil(x + support)) - 1;
    taps.offset[u] = static_cast<int>(taps.index.size());
    double sum = 0.0;
    const std::size_t start = taps.weight.size();
    for (int j = first; j <= last; ++j) {
      const double w = kscale * cubic_kernel(kscale * (x - j));
      if (w == 0.0) continue;
      taps.index.push_back(std::clamp(j, 0, in_size - 1));
      taps.weight.push_back(w);
      sum += w;
    }
    for (std::size_t k = start; k < taps.weight.size(); ++k) taps.weight[k] /= sum;
    taps.count[u] = static_cast<int>(taps.weight.size() - start);
  }
  return taps;
}

inline int scaled_extent(int size, Scale s, const char* axis) {
  const long long numer = static_cast<long long>(size) * s.num;
  if (s.num <= 0 || s.den <= 0 || numer % s.den != 0) {
    throw DataError(std::string("bicubic_resize: non-integral output ") + axis + " (" +
                    std::to_string(size) + " * " + std::to_string(s.num) + "/" +
                    std::to_string(s.den) + ")");
  }
  return static_cast<int>(numer / s.den);
}

}  // namespace detail

/// Separable bicubic resize of any channel count, without clamping. Linear in
/// the input.
template <class T>
Tensor<T> resize_bicubic_linear(const Tensor<T>& in, Scale scale) {
  const int oh = detail::scaled_extent(in.height(), scale, "height");
  const int ow = detail::scaled_extent(in.width(), scale, "width");
  const int c = in.channels();
  const auto tx = detail::resample_taps(in.width(), ow, scale.value());
  const auto ty = detail::resample_taps(in.height(), oh, scale.value());

  Tensor<double> rows(in.height(), ow, c);
  for (int y = 0; y < in.height(); ++y) {
    for (int u = 0; u < ow; ++u) {
      double* dst = &rows(y, u, 0);
      for (int k = 0; k < tx.count[u]; ++k) {
        const int j = tx.index[tx.offset[u] + k];
        const double w = tx.weight[tx.offset[u] + k];
        const T* src = &in(y, j, 0);
        for (int ch = 0; ch < c; ++ch) dst[ch] += w * static_cast<double>(src[ch]);
      }
    }
  }
  Tensor<T> out(oh, ow, c);
  std::vector<double> acc(static_cast<std::size_t>(ow) * c);
  for (int v = 0; v < oh; ++v) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int k = 0; k < ty.count[v]; ++k) {
      const int i = ty.index[ty.offset[v] + k];
      const double w = ty.weight[ty.offset[v] + k];
      const double* src = &rows(i, 0, 0);
      for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += w * src[e];
    }
    T* dst = &out(v, 0, 0);
    for (std::size_t e = 0; e < acc.size(); ++e) dst[e] = static_cast<T>(acc[e]);
  }
  return out;
}

/// Bicubic resize (a = -0.5, edge replication) with output clamped to [0, 1].
template <class T>
Image<T> bicubic_resize(const Image<T>& img, Scale scale) {
  Image<T> out(resize_bicubic_linear<T>(img, scale));
  clamp_unit(out);
  return out;
}

// ---------------------------------------------------------------------------
// Rearrangement

/// Folds each factor x factor block into channels: (H, W, C) -> (H/f, W/f, C*f*f).
/// Channel order within a block is (dy, dx, c).
template <class T>
Tensor<T> space_to_depth(const Tensor<T>& in, int factor) {
  if (in.height() % factor != 0 || in.width() % factor != 0) {
    throw DataError("space_to_depth: dimensions not divisible by factor");
  }
  const int c = in.channels();
  Tensor<T> out(in.height() / factor, in.width() / factor, c * factor * factor);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      T* dst = &out(y, x, 0);
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          const T* src = &in(y * factor + dy, x * factor + dx, 0);
          dst = std::copy(src, src + c, dst);
        }
    }
  return out;
}

/// Inverse of space_to_depth (pixel shuffle).
template <class T>
Tensor<T> depth_to_space(const Tensor<T>& in, int factor) {
  const int ff = factor * factor;
  if (in.channels() % ff != 0) throw DataError("depth_to_space: channels not divisible");
  const int c = in.channels() / ff;
  Tensor<T> out(in.height() * factor, in.width() * factor, c);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < in.width(); ++x) {
      const T* src = &in(y, x, 0);
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          std::copy(src, src + c, &out(y * factor + dy, x * factor + dx, 0));
          src += c;
        }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Filtering

/// Normalized 1-D Gaussian taps with radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma, int radius = -1) {
  if (radius < 0) radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with edge replication.
template <class T>
Tensor<T> gaussian_blur(const Tensor<T>& in, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int h = in.height(), w = in.width(), c = in.channels();
  Tensor<double> tmp(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int i = -r; i <= r; ++i) {
        const int xs = std::clamp(x + i, 0, w - 1);
        for (int ch = 0; ch < c; ++ch) tmp(y, x, ch) += k[i + r] * static_cast<double>(in(y, xs, ch));
      }
  Tensor<T> out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(std::clamp(y + i, 0, h - 1), x, ch);
        out(y, x, ch) = static_cast<T>(acc);
      }
  return out;
}

}  // namespace refsr
