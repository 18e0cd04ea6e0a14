#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "refsr/errors.hpp"
#include "refsr/imaging.hpp"
#include "refsr/tensor.hpp"

// Luma-channel PSNR and SSIM. Luma is BT.601 on the [16, 235] digital scale;
// the PSNR peak is fixed at 255.

namespace refsr {

inline constexpr double kPsnrPeak = 255.0;

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
  int crop_border = 0;  // pixels removed from every edge before comparison
};

namespace detail {

inline Plane crop(const Plane& p, int border) {
  if (border == 0) return p;
  if (2 * border >= p.height() || 2 * border >= p.width()) throw DataError("metric: crop border exceeds image");
  Plane out(p.height() - 2 * border, p.width() - 2 * border, 1);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out(y, x, 0) = p(y + border, x + border, 0);
  return out;
}

/// 'valid' separable correlation of a plane with a 1-D kernel along both axes.
inline Plane filter_valid(const Plane& in, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = in.height() - n + 1, ow = in.width() - n + 1;
  Plane rows(in.height(), ow, 1);
  for (int y = 0; y < in.height(); ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * in(y, x + i, 0);
      rows(y, x, 0) = acc;
    }
  Plane out(oh, ow, 1);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * rows(y + i, x, 0);
      out(y, x, 0) = acc;
    }
  return out;
}

}  // namespace detail

/// PSNR between two luma planes; +infinity when they are identical.
inline double psnr_plane(const Plane& a, const Plane& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw DataError("psnr: empty input");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(kPsnrPeak * kPsnrPeak / mse);
}

template <class T>
double psnr_y(const Image<T>& a, const Image<T>& b, int crop_border = 0) {
  require_same_shape<T>(a, b, "psnr_y");
  return psnr_plane(detail::crop(rgb_to_y(a), crop_border), detail::crop(rgb_to_y(b), crop_border));
}

/// Mean of the local SSIM map (Gaussian window, 'valid' extent).
inline double ssim_plane(const Plane& a, const Plane& b, const SsimOptions& o = {}) {
  require_same_shape(a, b, "ssim");
  if (a.height() < o.window || a.width() < o.window) {
    throw DataError("ssim: image " + shape_string(a) + " smaller than the " + std::to_string(o.window) +
                    "x" + std::to_string(o.window) + " window");
  }
  const auto k = gaussian_kernel(o.sigma, o.window / 2);
  Plane aa(a.height(), a.width(), 1), bb = aa, ab = aa;
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa.data()[i] = a.data()[i] * a.data()[i];
    bb.data()[i] = b.data()[i] * b.data()[i];
    ab.data()[i] = a.data()[i] * b.data()[i];
  }
  const Plane mu_a = detail::filter_valid(a, k), mu_b = detail::filter_valid(b, k);
  const Plane e_aa = detail::filter_valid(aa, k), e_bb = detail::filter_valid(bb, k),
              e_ab = detail::filter_valid(ab, k);
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.data()[i], mb = mu_b.data()[i];
    const double va = e_aa.data()[i] - ma * ma, vb = e_bb.data()[i] - mb * mb, cov = e_ab.data()[i] - ma * mb;
    sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

template <class T>
double ssim_y(const Image<T>& a, const Image<T>& b, const SsimOptions& o = {}) {
  require_same_shape<T>(a, b, "ssim_y");
  return ssim_plane(detail::crop(rgb_to_y(a), o.crop_border), detail::crop(rgb_to_y(b), o.crop_border), o);
}

}  // namespace refsr
