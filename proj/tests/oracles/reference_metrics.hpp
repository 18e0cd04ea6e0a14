#pragma once

// Direct-formula PSNR and SSIM written without any library helpers: explicit
// per-pixel luma, a freshly built 2-D Gaussian window and a brute-force
// window loop. Used only as an independent check of the production code.

#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

struct Rgb {
  int height = 0, width = 0;
  std::vector<double> v;  // HWC, values in [0, 1]
  double at(int y, int x, int c) const { return v[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

inline std::vector<double> luma(const Rgb& img) {
  std::vector<double> y(static_cast<std::size_t>(img.height) * img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      y[static_cast<std::size_t>(r) * img.width + c] =
          (65.481 * img.at(r, c, 0) + 128.553 * img.at(r, c, 1) + 24.966 * img.at(r, c, 2)) + 16.0;
  return y;
}

inline double psnr(const Rgb& a, const Rgb& b) {
  const auto ya = luma(a), yb = luma(b);
  long double sse = 0.0L;
  for (std::size_t i = 0; i < ya.size(); ++i) sse += (long double)(ya[i] - yb[i]) * (ya[i] - yb[i]);
  if (sse == 0.0L) return std::numeric_limits<double>::infinity();
  const double mse = static_cast<double>(sse / ya.size());
  return 20.0 * std::log10(255.0) - 10.0 * std::log10(mse);
}

inline double ssim(const Rgb& a, const Rgb& b) {
  const int n = 11;
  const double sigma = 1.5;
  std::vector<double> win(n * n);
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double d2 = (i - 5) * (i - 5) + (j - 5) * (j - 5);
      win[i * n + j] = std::exp(-d2 / (2.0 * sigma * sigma));
      total += win[i * n + j];
    }
  for (double& w : win) w /= total;

  const auto ya = luma(a), yb = luma(b);
  const double c1 = std::pow(0.01 * 255.0, 2), c2 = std::pow(0.03 * 255.0, 2);
  double acc = 0.0;
  int count = 0;
  for (int y = 0; y + n <= a.height; ++y)
    for (int x = 0; x + n <= a.width; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t p = static_cast<std::size_t>(y + i) * a.width + (x + j);
          ma += win[i * n + j] * ya[p];
          mb += win[i * n + j] * yb[p];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t p = static_cast<std::size_t>(y + i) * a.width + (x + j);
          va += win[i * n + j] * (ya[p] - ma) * (ya[p] - ma);
          vb += win[i * n + j] * (yb[p] - mb) * (yb[p] - mb);
          cov += win[i * n + j] * (ya[p] - ma) * (yb[p] - mb);
        }
      acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace oracle
