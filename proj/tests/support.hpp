#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "refsr/imaging.hpp"
#include "refsr/model.hpp"
#include "refsr/rng.hpp"
#include "refsr/tensor.hpp"
#include "oracles/reference_metrics.hpp"

namespace testing_support {

using namespace refsr;

template <class T = float>
Image<T> random_image(int h, int w, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Image<T> img(h, w);
  for (auto& v : img.values()) v = static_cast<T>(rng.uniform());
  return img;
}

template <class T = float>
Image<T> constant_image(int h, int w, double r, double g, double b) {
  Image<T> img(h, w);
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    img.data()[3 * p] = static_cast<T>(r);
    img.data()[3 * p + 1] = static_cast<T>(g);
    img.data()[3 * p + 2] = static_cast<T>(b);
  }
  return img;
}

template <class T>
oracle::Rgb to_oracle(const Image<T>& img) {
  oracle::Rgb o{img.height(), img.width(), {}};
  for (T v : img.values()) o.v.push_back(static_cast<double>(v));
  return o;
}

struct MetricFixture {
  std::string name;
  Image<double> a, b;
};

/// Five pairs covering noise, a uniform luma offset, a shifted gradient, a
/// blurred checkerboard and constant images of an odd size.
inline std::vector<MetricFixture> metric_fixtures() {
  std::vector<MetricFixture> f;

  auto noise = random_image<double>(32, 40, 1);
  auto noisy = noise;
  SplitMix64 rng(2);
  for (auto& v : noisy.values()) v = std::clamp(v + 0.05 * rng.normal(), 0.0, 1.0);
  f.push_back({"noise", noise, noisy});

  // 16 luma levels apart: each channel moves by 16 / (65.481 + 128.553 + 24.966).
  const double d = 16.0 / 219.0;
  f.push_back({"uniform_offset", constant_image<double>(24, 24, 0.3, 0.4, 0.5),
               constant_image<double>(24, 24, 0.3 + d, 0.4 + d, 0.5 + d)});

  Image<double> grad(20, 36), shifted(20, 36);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 36; ++x)
      for (int c = 0; c < 3; ++c) {
        grad(y, x, c) = (x + 2.0 * y + c) / 80.0;
        shifted(y, x, c) = (std::min(x + 1, 35) + 2.0 * y + c) / 80.0;
      }
  f.push_back({"gradient_shift", grad, shifted});

  Image<double> checker(30, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 30; ++x)
      for (int c = 0; c < 3; ++c) checker(y, x, c) = ((x / 3 + y / 3) % 2) ? 0.9 : 0.1;
  f.push_back({"checker_blur", checker, Image<double>(gaussian_blur<double>(checker, 1.0))});

  f.push_back({"constants", constant_image<double>(23, 31, 0.2, 0.2, 0.2),
               constant_image<double>(23, 31, 0.7, 0.6, 0.5)});
  return f;
}

/// Small configuration for finite-difference checks on 8x8 inputs.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.base_channels = 8;
  c.num_res_blocks = 1;
  c.coord_frequencies = 1;
  c.attention_reduction = 4;
  return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("refsr_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
