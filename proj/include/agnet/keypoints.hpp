#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <tuple>
#include <vector>

#include "agnet/error.hpp"
#include "agnet/image.hpp"

namespace agnet {

struct Keypoint {
  double x = 0;
  double y = 0;
  double scale = 0;     // σ of the detecting level, in base-image pixels
  double response = 0;  // |DoG|
};

/// Difference-of-Gaussians detector settings. Defaults are Lowe's constants.
struct DetectorConfig {
  int octaves = 4;
  int intervals_per_octave = 3;
  double base_sigma = 1.6;
  double contrast_threshold = 0.03;
  double edge_ratio_threshold = 10.0;
  int max_keypoints = 500;

  void validate() const {
    if (octaves <= 0 || intervals_per_octave <= 0 || !(base_sigma > 0) || !(contrast_threshold > 0) ||
        max_keypoints <= 0) {
      throw DetectorError("detector settings must be positive");
    }
    if (!(edge_ratio_threshold > 1)) throw DetectorError("edge_ratio_threshold must exceed 1");
  }
};

namespace detail {

// Blur already present in a freshly decoded image.
inline constexpr double kAssumedInputBlur = 0.5;
inline constexpr int kMinOctaveExtent = 8;

inline GrayImage downsample_half(const GrayImage& img) {
  GrayImage out(std::max(1, img.width / 2), std::max(1, img.height / 2));
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(2 * x, 2 * y);
  return out;
}

inline bool is_extremum(const std::vector<GrayImage>& dog, int s, int x, int y) {
  const double v = dog[s].at(x, y);
  const bool maximum = v > 0;
  for (int ds = -1; ds <= 1; ++ds) {
    const GrayImage& layer = dog[s + ds];
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (ds == 0 && dx == 0 && dy == 0) continue;
        const double n = layer.at(x + dx, y + dy);
        if (maximum ? !(v > n) : !(v < n)) return false;
      }
    }
  }
  return true;
}

inline bool passes_edge_test(const GrayImage& d, int x, int y, double r) {
  const double v = d.at(x, y);
  const double dxx = d.at(x + 1, y) + d.at(x - 1, y) - 2 * v;
  const double dyy = d.at(x, y + 1) + d.at(x, y - 1) - 2 * v;
  const double dxy = (d.at(x + 1, y + 1) - d.at(x + 1, y - 1) - d.at(x - 1, y + 1) + d.at(x - 1, y - 1)) / 4.0;
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  if (det <= 0) return false;
  return tr * tr * r < (r + 1) * (r + 1) * det;
}

}  // namespace detail

/// Scale-space extrema of the difference-of-Gaussians pyramid. Positions
/// only: no sub-pixel refinement, orientation, or descriptor.
inline std::vector<Keypoint> detect_keypoints(const GrayImage& img, const DetectorConfig& cfg = {}) {
  cfg.validate();
  if (std::min(img.width, img.height) < 32) {
    throw DetectorError("image too small for keypoint detection: " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + " (minimum side 32)");
  }
  const int intervals = cfg.intervals_per_octave;
  const double k = std::pow(2.0, 1.0 / intervals);
  const double r = cfg.edge_ratio_threshold;

  std::vector<double> increments(intervals + 3, 0.0);
  for (int s = 1; s < intervals + 3; ++s) {
    const double prev = cfg.base_sigma * std::pow(k, s - 1);
    const double total = prev * k;
    increments[s] = std::sqrt(total * total - prev * prev);
  }

  const double initial =
      std::sqrt(std::max(cfg.base_sigma * cfg.base_sigma - detail::kAssumedInputBlur * detail::kAssumedInputBlur, 0.01));
  GrayImage base = gaussian_blur(img, initial);

  std::vector<Keypoint> found;
  for (int o = 0; o < cfg.octaves; ++o) {
    if (std::min(base.width, base.height) < detail::kMinOctaveExtent) break;
    std::vector<GrayImage> gauss{base};
    for (int s = 1; s < intervals + 3; ++s) gauss.push_back(gaussian_blur(gauss.back(), increments[s]));
    std::vector<GrayImage> dog;
    for (int s = 0; s + 1 < static_cast<int>(gauss.size()); ++s) {
      GrayImage d(base.width, base.height);
      for (std::size_t i = 0; i < d.pixels.size(); ++i) d.pixels[i] = gauss[s + 1].pixels[i] - gauss[s].pixels[i];
      dog.push_back(std::move(d));
    }
    const double step = std::ldexp(1.0, o);
    for (int s = 1; s <= intervals; ++s) {
      const GrayImage& d = dog[s];
      for (int y = 1; y + 1 < d.height; ++y) {
        for (int x = 1; x + 1 < d.width; ++x) {
          const double v = d.at(x, y);
          if (std::abs(v) < cfg.contrast_threshold) continue;
          if (!detail::is_extremum(dog, s, x, y)) continue;
          if (!detail::passes_edge_test(d, x, y, r)) continue;
          found.push_back({x * step, y * step, cfg.base_sigma * std::pow(2.0, o + static_cast<double>(s) / intervals),
                           std::abs(v)});
        }
      }
    }
    base = detail::downsample_half(gauss[intervals]);
  }

  std::sort(found.begin(), found.end(), [](const Keypoint& a, const Keypoint& b) {
    return std::tie(b.response, a.y, a.x, a.scale) < std::tie(a.response, b.y, b.x, b.scale);
  });
  if (found.size() > static_cast<std::size_t>(cfg.max_keypoints)) found.resize(cfg.max_keypoints);
  return found;
}

}  // namespace agnet
