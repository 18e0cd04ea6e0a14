#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "refsr/rng.hpp"
#include "refsr/tensor.hpp"

// Deterministic procedural images: desk-scale scenes, the default backdoor
// target, the default Blend key and the default Refool reflection layer.

namespace refsr::procedural {

using Rgb = std::array<float, 3>;

inline Rgb random_color(SplitMix64& rng) {
  return {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
          static_cast<float>(rng.uniform())};
}

inline void put(ImageTensor& img, int y, int x, const Rgb& c, float opacity = 1.0f) {
  for (int ch = 0; ch < 3; ++ch) {
    float& v = img(y, x, ch);
    v = (1.0f - opacity) * v + opacity * c[ch];
  }
}

inline void fill_rect(ImageTensor& img, int y0, int x0, int y1, int x1, const Rgb& c,
                      float opacity = 1.0f) {
  y0 = std::max(y0, 0);
  x0 = std::max(x0, 0);
  y1 = std::min(y1, img.height());
  x1 = std::min(x1, img.width());
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) put(img, y, x, c, opacity);
}

inline void fill_ellipse(ImageTensor& img, double cy, double cx, double ry, double rx,
                         const Rgb& c, float opacity = 1.0f) {
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
      if (dy * dy + dx * dx <= 1.0) put(img, y, x, c, opacity);
    }
}

inline void linear_gradient(ImageTensor& img, const Rgb& a, const Rgb& b, double angle) {
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double h = img.height(), w = img.width();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double t = std::clamp(0.5 + ((x + 0.5) / w - 0.5) * ca + ((y + 0.5) / h - 0.5) * sa, 0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch)
        img(y, x, ch) = static_cast<float>((1.0 - t) * a[ch] + t * b[ch]);
    }
}

/// Random natural-ish scene: gradient background with rectangles, ellipses,
/// stripe patches and checker textures.
inline ImageTensor scene(int height, int width, std::uint64_t seed) {
  SplitMix64 rng(derive_seed(seed, 0x5CE7E));
  ImageTensor img(height, width);
  linear_gradient(img, random_color(rng), random_color(rng), rng.uniform(0.0, 2.0 * std::numbers::pi));
  const int elements = 6 + static_cast<int>(rng.below(7));
  for (int e = 0; e < elements; ++e) {
    const Rgb c = random_color(rng);
    const double cy = rng.uniform(0.0, height), cx = rng.uniform(0.0, width);
    const double ry = rng.uniform(0.06, 0.3) * height, rx = rng.uniform(0.06, 0.3) * width;
    const float opacity = static_cast<float>(rng.uniform(0.6, 1.0));
    switch (rng.below(4)) {
      case 0:
        fill_rect(img, static_cast<int>(cy - ry), static_cast<int>(cx - rx), static_cast<int>(cy + ry),
                  static_cast<int>(cx + rx), c, opacity);
        break;
      case 1:
        fill_ellipse(img, cy, cx, ry, rx, c, opacity);
        break;
      case 2: {
        const double period = rng.uniform(3.0, 12.0);
        const double angle = rng.uniform(0.0, std::numbers::pi);
        const double ca = std::cos(angle), sa = std::sin(angle);
        for (int y = std::max(0, static_cast<int>(cy - ry)); y < std::min(height, static_cast<int>(cy + ry)); ++y)
          for (int x = std::max(0, static_cast<int>(cx - rx)); x < std::min(width, static_cast<int>(cx + rx)); ++x) {
            const double s = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (x * ca + y * sa) / period);
            put(img, y, x, c, static_cast<float>(opacity * s));
          }
        break;
      }
      default: {
        const int cell = 2 + static_cast<int>(rng.below(6));
        for (int y = std::max(0, static_cast<int>(cy - ry)); y < std::min(height, static_cast<int>(cy + ry)); ++y)
          for (int x = std::max(0, static_cast<int>(cx - rx)); x < std::min(width, static_cast<int>(cx + rx)); ++x)
            if (((y / cell) + (x / cell)) % 2 == 0) put(img, y, x, c, opacity);
        break;
      }
    }
  }
  clamp_unit(img);
  return img;
}

/// The default backdoor target: sky, buildings with windows, trees and
/// block letters.
inline ImageTensor backdoor_target(int height = 160, int width = 160) {
  ImageTensor img(height, width);
  const double sy = height / 160.0, sx = width / 160.0;
  auto R = [&](double y0, double x0, double y1, double x1, const Rgb& c) {
    fill_rect(img, static_cast<int>(y0 * sy), static_cast<int>(x0 * sx), static_cast<int>(y1 * sy),
              static_cast<int>(x1 * sx), c);
  };
  linear_gradient(img, {0.35f, 0.55f, 0.9f}, {0.85f, 0.9f, 0.95f}, std::numbers::pi / 2.0);
  R(120, 0, 160, 160, {0.3f, 0.55f, 0.25f});
  const std::array<std::array<double, 4>, 3> buildings = {{{40, 10, 125, 50}, {60, 58, 125, 92}, {25, 100, 125, 135}}};
  const std::array<Rgb, 3> wall = {{{0.55f, 0.35f, 0.3f}, {0.7f, 0.7f, 0.72f}, {0.4f, 0.4f, 0.5f}}};
  for (std::size_t b = 0; b < buildings.size(); ++b) {
    const auto& r = buildings[b];
    R(r[0], r[1], r[2], r[3], wall[b]);
    for (double y = r[0] + 5; y + 6 < r[2] - 8; y += 11)
      for (double x = r[1] + 4; x + 5 < r[3]; x += 9) R(y, x, y + 6, x + 5, {0.95f, 0.9f, 0.5f});
  }
  for (double tx : {146.0, 4.0}) {
    R(108, tx + 2, 135, tx + 7, {0.4f, 0.25f, 0.1f});
    fill_ellipse(img, 100 * sy, (tx + 4.5) * sx, 14 * sy, 10 * sx, {0.1f, 0.45f, 0.15f});
  }
  fill_ellipse(img, 18 * sy, 140 * sx, 10 * sy, 10 * sx, {1.0f, 0.85f, 0.2f});
  // Block letters "AB" on the lawn.
  const Rgb ink = {0.1f, 0.1f, 0.1f};
  R(135, 60, 155, 64, ink);
  R(135, 72, 155, 76, ink);
  R(135, 60, 139, 76, ink);
  R(144, 60, 147, 76, ink);
  R(135, 84, 155, 88, ink);
  R(135, 84, 138, 97, ink);
  R(144, 84, 147, 97, ink);
  R(152, 84, 155, 97, ink);
  R(137, 96, 145, 99, ink);
  R(146, 96, 153, 99, ink);
  clamp_unit(img);
  return img;
}

/// Checkerboard of gradients: the default Blend key pattern.
inline ImageTensor blend_key(int height, int width, int cells = 8) {
  ImageTensor img(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int cy = y * cells / height, cx = x * cells / width;
      const double fy = (y - cy * height / static_cast<double>(cells)) * cells / height;
      const double fx = (x - cx * width / static_cast<double>(cells)) * cells / width;
      const bool odd = (cy + cx) % 2 == 1;
      img(y, x, 0) = static_cast<float>(odd ? fx : 1.0 - fx);
      img(y, x, 1) = static_cast<float>(odd ? fy : 1.0 - fy);
      img(y, x, 2) = static_cast<float>(odd ? 0.2 : 0.8);
    }
  clamp_unit(img);
  return img;
}

/// Soft blobs and diagonal bands: the default Refool reflection layer.
inline ImageTensor reflection_layer(int height, int width, std::uint64_t seed = 7) {
  SplitMix64 rng(derive_seed(seed, 0x8EF1));
  ImageTensor img(height, width, 0.15f);
  for (int b = 0; b < 5; ++b) {
    const double cy = rng.uniform(0.0, height), cx = rng.uniform(0.0, width);
    const double r = rng.uniform(0.15, 0.35) * std::min(height, width);
    const Rgb c = random_color(rng);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (r * r);
        put(img, y, x, c, static_cast<float>(0.5 * std::exp(-d2)));
      }
  }
  clamp_unit(img);
  return img;
}

}  // namespace refsr::procedural
