#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "refsr/png_io.hpp"
#include "refsr/tensor.hpp"

// Minimal raster charts for sweep summaries: grouped PSNR bars on the left
// axis and SSIM polylines on the right axis, rendered straight to PNG.

namespace refsr::plot {

struct Rgb {
  std::uint8_t r, g, b;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kGrid{225, 225, 225};
inline constexpr std::array<Rgb, 4> kSeries = {Rgb{66, 114, 196}, Rgb{219, 94, 60}, Rgb{40, 60, 120},
                                               Rgb{150, 40, 20}};

class Canvas {
 public:
  Canvas(int width, int height) : img_(height, width) { img_.fill(255); }

  int width() const { return img_.width(); }
  int height() const { return img_.height(); }
  const ImageU8& image() const { return img_; }

  void pixel(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width() || y >= height()) return;
    img_(y, x, 0) = c.r;
    img_(y, x, 1) = c.g;
    img_(y, x, 2) = c.b;
  }

  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) pixel(x, y, c);
  }

  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) {
    const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
    for (int i = 0; i <= steps; ++i) {
      const int x = x0 + static_cast<int>(std::lround(static_cast<double>(x1 - x0) * i / steps));
      const int y = y0 + static_cast<int>(std::lround(static_cast<double>(y1 - y0) * i / steps));
      rect(x - thickness / 2, y - thickness / 2, x + (thickness - 1) / 2, y + (thickness - 1) / 2, c);
    }
  }

  /// 3x5 bitmap glyphs scaled by `scale`; unknown characters render blank.
  void text(int x, int y, std::string_view s, Rgb c, int scale = 2) {
    for (char ch : s) {
      const auto* g = glyph(ch);
      if (g)
        for (int row = 0; row < 5; ++row)
          for (int col = 0; col < 3; ++col)
            if ((*g)[row][col] == '#') rect(x + col * scale, y + row * scale, x + (col + 1) * scale - 1,
                                            y + (row + 1) * scale - 1, c);
      x += 4 * scale;
    }
  }

  static int text_width(std::string_view s, int scale = 2) { return static_cast<int>(s.size()) * 4 * scale; }

  void save(const std::filesystem::path& path) const { save_image(img_, path); }

 private:
  using Glyph = std::array<const char*, 5>;

  static const Glyph* glyph(char ch) {
    struct Entry {
      char ch;
      Glyph g;
    };
    static const Entry table[] = {
        {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
        {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", "###", "..#", "###"}},
        {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
        {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", "..#", "..#", "..#"}},
        {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
        {'.', {"...", "...", "...", "...", ".#."}}, {'-', {"...", "...", "###", "...", "..."}},
        {'/', {"..#", "..#", ".#.", "#..", "#.."}}, {'%', {"#.#", "..#", ".#.", "#..", "#.#"}},
        {'A', {".#.", "#.#", "###", "#.#", "#.#"}}, {'B', {"##.", "#.#", "##.", "#.#", "##."}},
        {'C', {"###", "#..", "#..", "#..", "###"}}, {'D', {"##.", "#.#", "#.#", "#.#", "##."}},
        {'E', {"###", "#..", "##.", "#..", "###"}}, {'F', {"###", "#..", "##.", "#..", "#.."}},
        {'G', {"###", "#..", "#.#", "#.#", "###"}}, {'I', {"###", ".#.", ".#.", ".#.", "###"}},
        {'K', {"#.#", "#.#", "##.", "#.#", "#.#"}}, {'L', {"#..", "#..", "#..", "#..", "###"}},
        {'M', {"#.#", "###", "###", "#.#", "#.#"}}, {'N', {"##.", "#.#", "#.#", "#.#", "#.#"}},
        {'O', {"###", "#.#", "#.#", "#.#", "###"}}, {'P', {"###", "#.#", "###", "#..", "#.."}},
        {'R', {"##.", "#.#", "##.", "#.#", "#.#"}}, {'S', {"###", "#..", "###", "..#", "###"}},
        {'T', {"###", ".#.", ".#.", ".#.", ".#."}}, {'U', {"#.#", "#.#", "#.#", "#.#", "###"}},
        {'W', {"#.#", "#.#", "###", "###", "#.#"}}, {'Y', {"#.#", "#.#", ".#.", ".#.", ".#."}},
    };
    const char up = (ch >= 'a' && ch <= 'z') ? static_cast<char>(ch - 'a' + 'A') : ch;
    for (const auto& e : table)
      if (e.ch == up) return &e.g;
    return nullptr;
  }

  ImageU8 img_;
};

struct Series {
  std::string label;
  std::vector<double> values;
};

/// Grouped bars (left axis, `bar_range`) and polylines with markers (right
/// axis, [0, 1]) over shared categories.
inline Canvas bar_line_chart(const std::string& title, const std::vector<std::string>& categories,
                             const std::vector<Series>& bars, std::array<double, 2> bar_range,
                             const std::vector<Series>& lines) {
  const int w = 120 + 110 * static_cast<int>(std::max<std::size_t>(categories.size(), 1)), h = 360;
  const int left = 60, right = w - 60, top = 40, bottom = h - 70;
  Canvas cv(w, h);
  cv.text(left, 12, title, kBlack);

  auto bar_y = [&](double v) {
    const double t = std::clamp((v - bar_range[0]) / (bar_range[1] - bar_range[0]), 0.0, 1.0);
    return bottom - static_cast<int>(std::lround(t * (bottom - top)));
  };
  auto line_y = [&](double v) {
    return bottom - static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * (bottom - top)));
  };
  for (int i = 0; i <= 4; ++i) {
    const int y = top + (bottom - top) * i / 4;
    cv.line(left, y, right, y, kGrid);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.0f", bar_range[1] - (bar_range[1] - bar_range[0]) * i / 4);
    cv.text(left - 8 - Canvas::text_width(buf), y - 5, buf, kBlack);
    std::snprintf(buf, sizeof(buf), "%.2f", 1.0 - 0.25 * i);
    cv.text(right + 8, y - 5, buf, kBlack);
  }
  cv.line(left, top, left, bottom, kBlack);
  cv.line(right, top, right, bottom, kBlack);
  cv.line(left, bottom, right, bottom, kBlack);

  const int n = static_cast<int>(categories.size());
  const int slot = n ? (right - left) / n : 1;
  const int nb = std::max<int>(static_cast<int>(bars.size()), 1);
  const int bar_w = std::max(4, (slot * 3 / 5) / nb);
  for (int c = 0; c < n; ++c) {
    const int x0 = left + c * slot + (slot - bar_w * nb) / 2;
    for (int b = 0; b < static_cast<int>(bars.size()); ++b)
      if (c < static_cast<int>(bars[b].values.size()) && std::isfinite(bars[b].values[c]))
        cv.rect(x0 + b * bar_w, bar_y(bars[b].values[c]), x0 + (b + 1) * bar_w - 2, bottom - 1, kSeries[b % 2]);
    const int cx = left + c * slot + slot / 2;
    cv.text(cx - Canvas::text_width(categories[c]) / 2, bottom + 8, categories[c], kBlack);
  }
  for (std::size_t s = 0; s < lines.size(); ++s) {
    const Rgb col = kSeries[2 + s % 2];
    for (int c = 0; c < n && c < static_cast<int>(lines[s].values.size()); ++c) {
      const int x = left + c * slot + slot / 2, y = line_y(lines[s].values[c]);
      if (c > 0) cv.line(left + (c - 1) * slot + slot / 2, line_y(lines[s].values[c - 1]), x, y, col, 2);
      cv.rect(x - 3, y - 3, x + 3, y + 3, col);
    }
  }

  int lx = left;
  const int ly = h - 30;
  for (std::size_t b = 0; b < bars.size(); ++b) {
    cv.rect(lx, ly, lx + 12, ly + 10, kSeries[b % 2]);
    cv.text(lx + 18, ly, bars[b].label, kBlack);
    lx += 30 + Canvas::text_width(bars[b].label);
  }
  for (std::size_t s = 0; s < lines.size(); ++s) {
    const Rgb col = kSeries[2 + s % 2];
    cv.line(lx, ly + 5, lx + 12, ly + 5, col, 2);
    cv.text(lx + 18, ly, lines[s].label, kBlack);
    lx += 30 + Canvas::text_width(lines[s].label);
  }
  return cv;
}

}  // namespace refsr::plot
