#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "agnet/image.hpp"
#include "agnet/regions.hpp"

namespace agnet::io {

/// Integer outline of a box: columns left..right and rows top..bottom,
/// inclusive, inside a w×h image.
struct PixelRect {
  int left, top, right, bottom;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

inline PixelRect pixel_rect(const BoundingBox& b, int w, int h) {
  auto col = [&](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, w - 1); };
  auto row = [&](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, h - 1); };
  const int left = col(b.x0), top = row(b.y0);
  return {left, top, std::max(left, col(std::ceil(b.x1) - 1)), std::max(top, row(std::ceil(b.y1) - 1))};
}

using Color = std::array<double, 3>;

/// Primary box colours; box i uses entry i mod 16.
inline const std::array<Color, 16>& palette() {
  static const std::array<Color, 16> p = {{{1.0, 0.0, 0.0},       {0.0, 1.0, 0.0},   {0.0, 0.0, 1.0},
                                           {1.0, 1.0, 0.0},       {1.0, 0.0, 1.0},   {0.0, 1.0, 1.0},
                                           {1.0, 0.5, 0.0},       {0.5, 0.0, 1.0},   {0.0, 0.5, 0.0},
                                           {0.5, 0.25, 0.0},      {1.0, 0.5, 0.75},  {0.0, 0.5, 1.0},
                                           {0.5, 1.0, 0.0},       {0.5, 0.5, 0.5},   {0.0, 0.0, 0.5},
                                           {0.5, 0.0, 0.0}}};
  return p;
}
inline constexpr Color kKeypointColor = {1.0, 1.0, 1.0};
inline constexpr Color kSecondaryColor = {0.0, 0.0, 0.0};

inline void put(RgbImage& img, int x, int y, const Color& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c[static_cast<std::size_t>(ch)];
}

/// Outline; with `dash` > 0, runs of `dash` pixels alternate on and off.
inline void draw_rect(RgbImage& img, const PixelRect& r, const Color& c, int dash = 0) {
  int step = 0;
  auto plot = [&](int x, int y) {
    if (dash <= 0 || (step / dash) % 2 == 0) put(img, x, y, c);
    ++step;
  };
  for (int x = r.left; x <= r.right; ++x) plot(x, r.top);
  for (int y = r.top + 1; y <= r.bottom; ++y) plot(r.right, y);
  for (int x = r.right - 1; x >= r.left && r.bottom > r.top; --x) plot(x, r.bottom);
  for (int y = r.bottom - 1; y > r.top && r.right > r.left; --y) plot(r.left, y);
}

/// Keypoints as 3×3 dots, then one dashed secondary box, then the primary
/// boxes in palette order.
inline RgbImage render_overlay(const RgbImage& image, const RegionProposal& p, std::size_t secondary_index = 0) {
  RgbImage out = image;
  for (const Keypoint& k : p.keypoints) {
    const int cx = static_cast<int>(std::lround(k.x)), cy = static_cast<int>(std::lround(k.y));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) put(out, cx + dx, cy + dy, kKeypointColor);
  }
  if (secondary_index < p.regions.secondary.size()) {
    draw_rect(out, pixel_rect(p.regions.secondary[secondary_index], out.width, out.height), kSecondaryColor, 3);
  }
  for (std::size_t i = 0; i < p.regions.primary.size(); ++i) {
    draw_rect(out, pixel_rect(p.regions.primary[i], out.width, out.height), palette()[i % palette().size()]);
  }
  return out;
}

}  // namespace agnet::io
