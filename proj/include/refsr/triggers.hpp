#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "refsr/errors.hpp"
#include "refsr/imaging.hpp"
#include "refsr/png_io.hpp"
#include "refsr/procedural.hpp"
#include "refsr/rng.hpp"
#include "refsr/tensor.hpp"

namespace refsr {

enum class TriggerKind { badnet, blend, filter, color, wanet, refool };

inline constexpr std::array<TriggerKind, 6> kAllTriggers = {
    TriggerKind::badnet, TriggerKind::blend, TriggerKind::filter,
    TriggerKind::color,  TriggerKind::wanet, TriggerKind::refool};

inline std::string_view to_string(TriggerKind k) {
  switch (k) {
    case TriggerKind::badnet: return "badnet";
    case TriggerKind::blend: return "blend";
    case TriggerKind::filter: return "filter";
    case TriggerKind::color: return "color";
    case TriggerKind::wanet: return "wanet";
    case TriggerKind::refool: return "refool";
  }
  return "?";
}

inline TriggerKind parse_trigger_kind(std::string_view s) {
  for (TriggerKind k : kAllTriggers)
    if (to_string(k) == s) return k;
  throw ConfigError("trigger.kind: unknown trigger '" + std::string(s) +
                    "' (expected badnet|blend|filter|color|wanet|refool)");
}

/// Row-major 3x3 colour matrix applied to (R, G, B).
using ColorMatrix = std::array<double, 9>;

inline constexpr ColorMatrix kSepiaMatrix = {0.393, 0.769, 0.189, 0.349, 0.686,
                                             0.168, 0.272, 0.534, 0.131};
inline constexpr ColorMatrix kIdentityMatrix = {1, 0, 0, 0, 1, 0, 0, 0, 1};

struct TriggerParams {
  int patch_size = 8;                       // badnet
  double alpha = 0.05;                      // blend
  std::string key_path;                     // blend; empty selects the procedural key
  ColorMatrix matrix = kSepiaMatrix;        // filter
  std::array<double, 3> delta = {8.0 / 255, -8.0 / 255, 8.0 / 255};  // color
  int grid_k = 4;                           // wanet
  double strength = 0.5;                    // wanet
  double beta = 0.4;                        // refool
  double blur_sigma = 2.0;                  // refool
  std::string reflection_path;              // refool; empty selects the procedural layer

  friend bool operator==(const TriggerParams&, const TriggerParams&) = default;
};

inline constexpr double kMaxColorShift = 32.0 / 255.0;

struct TriggerSpec {
  TriggerKind kind = TriggerKind::filter;
  TriggerParams params;
  std::uint64_t seed = 0;

  /// Range checks for the parameters the selected kind uses.
  void validate() const {
    const auto& p = params;
    switch (kind) {
      case TriggerKind::badnet:
        if (p.patch_size < 1) throw ConfigError("trigger.patch_size must be >= 1");
        break;
      case TriggerKind::blend:
        if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw ConfigError("trigger.alpha must lie in [0,1]");
        break;
      case TriggerKind::filter:
        for (double m : p.matrix)
          if (!std::isfinite(m)) throw ConfigError("trigger.matrix must be finite");
        break;
      case TriggerKind::color:
        for (double d : p.delta)
          if (!(std::abs(d) <= kMaxColorShift + 1e-12))
            throw ConfigError("trigger.delta components must satisfy |d| <= 32/255");
        break;
      case TriggerKind::wanet:
        if (p.grid_k < 2) throw ConfigError("trigger.grid_k must be >= 2");
        if (!(p.strength >= 0.0 && p.strength <= 1.0))
          throw ConfigError("trigger.strength must lie in [0,1]");
        break;
      case TriggerKind::refool:
        if (!(p.beta > 0.0 && p.beta < 1.0)) throw ConfigError("trigger.beta must lie in (0,1)");
        if (!(p.blur_sigma > 0.0)) throw ConfigError("trigger.blur_sigma must be > 0");
        break;
    }
  }

  static TriggerSpec make(TriggerKind kind, TriggerParams params = {}, std::uint64_t seed = 0) {
    TriggerSpec spec{kind, std::move(params), seed};
    spec.validate();
    return spec;
  }

  friend bool operator==(const TriggerSpec&, const TriggerSpec&) = default;
};

// ---------------------------------------------------------------------------
// Individual triggers

inline ImageTensor apply_badnet(const ImageTensor& img, int patch_size = 8) {
  if (patch_size < 1 || patch_size >= std::min(img.height(), img.width())) {
    throw DataError("apply_badnet: patch size " + std::to_string(patch_size) +
                    " does not fit image " + shape_string(img));
  }
  ImageTensor out = img;
  for (int y = img.height() - patch_size; y < img.height(); ++y)
    for (int x = img.width() - patch_size; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out(y, x, c) = 1.0f;
  return out;
}

inline ImageTensor apply_blend(const ImageTensor& img, const ImageTensor& key, double alpha = 0.05) {
  require_same_shape<float>(img, key, "apply_blend");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("apply_blend: alpha must lie in [0,1]");
  ImageTensor out(img.height(), img.width());
  for (std::size_t i = 0; i < img.size(); ++i) {
    out.data()[i] = static_cast<float>((1.0 - alpha) * img.data()[i] + alpha * key.data()[i]);
  }
  clamp_unit(out);
  return out;
}

inline ImageTensor apply_filter(const ImageTensor& img, const ColorMatrix& m = kSepiaMatrix) {
  ImageTensor out(img.height(), img.width());
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    const double r = img.data()[3 * p], g = img.data()[3 * p + 1], b = img.data()[3 * p + 2];
    for (int c = 0; c < 3; ++c) {
      const double v = m[3 * c] * r + m[3 * c + 1] * g + m[3 * c + 2] * b;
      out.data()[3 * p + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

inline ImageTensor apply_color_shift(const ImageTensor& img,
                                     const std::array<double, 3>& delta = {8.0 / 255, -8.0 / 255,
                                                                           8.0 / 255}) {
  for (double d : delta)
    if (!(std::abs(d) <= kMaxColorShift + 1e-12))
      throw ConfigError("apply_color_shift: |delta| must be <= 32/255");
  ImageTensor out(img.height(), img.width());
  for (std::size_t p = 0; p < img.pixels(); ++p)
    for (int c = 0; c < 3; ++c) {
      const double v = img.data()[3 * p + c] + delta[c];
      out.data()[3 * p + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return out;
}

/// Backward warp: out(y, x) = img(y + dy, x + dx), bilinear, sample
/// coordinates clamped to the image. `flow` is H x W x 2 holding (dx, dy) in
/// pixels.
inline ImageTensor warp_bilinear(const ImageTensor& img, const Tensor<double>& flow) {
  if (flow.height() != img.height() || flow.width() != img.width() || flow.channels() != 2) {
    throw DataError("warp_bilinear: flow must be HxWx2 matching the image");
  }
  const int h = img.height(), w = img.width();
  ImageTensor out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double sx = std::clamp(x + flow(y, x, 0), 0.0, static_cast<double>(w - 1));
      const double sy = std::clamp(y + flow(y, x, 1), 0.0, static_cast<double>(h - 1));
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * img(y0, x0, c) + fx * img(y0, x1, c);
        const double bot = (1.0 - fx) * img(y1, x0, c) + fx * img(y1, x1, c);
        out(y, x, c) = static_cast<float>((1.0 - fy) * top + fy * bot);
      }
    }
  clamp_unit(out);
  return out;
}

/// Smooth random displacement field in pixels, H x W x 2 as (dx, dy).
/// A k x k x 2 grid from uniform[-1, 1] is normalized by its mean absolute
/// value, bicubically upsampled with corner alignment, and scaled by
/// strength * k / min(H, W) of the image extent along each axis.
inline Tensor<double> wanet_field(int height, int width, int grid_k, double strength,
                                  std::uint64_t seed) {
  if (grid_k < 2) throw ConfigError("wanet: grid_k must be >= 2");
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("wanet: strength must lie in [0,1]");
  SplitMix64 rng(derive_seed(seed, 0x3A4E7));
  Tensor<double> grid(grid_k, grid_k, 2);
  double mean_abs = 0.0;
  for (double& v : grid.values()) {
    v = rng.uniform(-1.0, 1.0);
    mean_abs += std::abs(v);
  }
  mean_abs /= static_cast<double>(grid.size());
  for (double& v : grid.values()) v /= mean_abs;

  auto taps = [&](int out_size, int u, std::array<int, 4>& idx, std::array<double, 4>& wts) {
    const double src = out_size > 1 ? u * (grid_k - 1.0) / (out_size - 1.0) : 0.0;
    const int base = static_cast<int>(std::floor(src));
    for (int t = 0; t < 4; ++t) {
      const int j = base - 1 + t;
      idx[t] = std::clamp(j, 0, grid_k - 1);
      wts[t] = cubic_kernel(src - j);
    }
  };
  const double extent_scale = strength * grid_k / std::min(height, width);
  Tensor<double> field(height, width, 2);
  std::array<int, 4> iy{}, ix{};
  std::array<double, 4> wy{}, wx{};
  for (int y = 0; y < height; ++y) {
    taps(height, y, iy, wy);
    for (int x = 0; x < width; ++x) {
      taps(width, x, ix, wx);
      for (int c = 0; c < 2; ++c) {
        double v = 0.0;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) v += wy[a] * wx[b] * grid(iy[a], ix[b], c);
        field(y, x, c) = v * extent_scale * (c == 0 ? width : height);
      }
    }
  }
  return field;
}

inline ImageTensor apply_wanet(const ImageTensor& img, int grid_k = 4, double strength = 0.5,
                               std::uint64_t seed = 0) {
  return warp_bilinear(img, wanet_field(img.height(), img.width(), grid_k, strength, seed));
}

inline ImageTensor apply_refool(const ImageTensor& img, const ImageTensor& reflection,
                                double beta = 0.4, double blur_sigma = 2.0) {
  require_same_shape<float>(img, reflection, "apply_refool");
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("apply_refool: beta must lie in (0,1)");
  if (!(blur_sigma > 0.0)) throw ConfigError("apply_refool: blur_sigma must be > 0");
  const Tensor<double> blurred = gaussian_blur(reflection.cast<double>(), blur_sigma);
  ImageTensor out(img.height(), img.width());
  for (std::size_t i = 0; i < img.size(); ++i) {
    out.data()[i] = static_cast<float>(std::clamp(img.data()[i] + beta * blurred.data()[i], 0.0, 1.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch from a TriggerSpec

/// A validated trigger with its pattern images resolved. Pattern files are
/// loaded once; procedural defaults are generated at the size of each input.
class Trigger {
 public:
  explicit Trigger(TriggerSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.kind == TriggerKind::blend && !spec_.params.key_path.empty()) {
      key_ = load_image_tensor(spec_.params.key_path);
    }
    if (spec_.kind == TriggerKind::refool && !spec_.params.reflection_path.empty()) {
      reflection_ = load_image_tensor(spec_.params.reflection_path);
    }
  }

  const TriggerSpec& spec() const { return spec_; }

  ImageTensor apply(const ImageTensor& img) const {
    const auto& p = spec_.params;
    switch (spec_.kind) {
      case TriggerKind::badnet: return apply_badnet(img, p.patch_size);
      case TriggerKind::blend:
        return apply_blend(img, key_ ? *key_ : procedural::blend_key(img.height(), img.width()), p.alpha);
      case TriggerKind::filter: return apply_filter(img, p.matrix);
      case TriggerKind::color: return apply_color_shift(img, p.delta);
      case TriggerKind::wanet: return apply_wanet(img, p.grid_k, p.strength, spec_.seed);
      case TriggerKind::refool:
        return apply_refool(img,
                            reflection_ ? *reflection_
                                        : procedural::reflection_layer(img.height(), img.width(), spec_.seed),
                            p.beta, p.blur_sigma);
    }
    return img;
  }

 private:
  TriggerSpec spec_;
  std::optional<ImageTensor> key_;
  std::optional<ImageTensor> reflection_;
};

}  // namespace refsr
