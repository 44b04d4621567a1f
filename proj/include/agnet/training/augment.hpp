#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "agnet/image.hpp"

namespace agnet {

struct AugmentRanges {
  double translation = 0.15;  // fraction of each dimension, ±
  double rotation_degrees = 15.0;
  double scale_min = 0.85;
  double scale_max = 1.15;

  static AugmentRanges none() { return {0.0, 0.0, 1.0, 1.0}; }
};

/// One draw of the augmentation transform, about the image centre.
struct AffineParams {
  double tx = 0;  // pixels
  double ty = 0;
  double angle_degrees = 0;
  double scale = 1;
};

inline AffineParams sample_affine(const AugmentRanges& r, int width, int height, std::mt19937_64& rng) {
  auto uniform = [&](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  AffineParams a;
  a.tx = uniform(-r.translation, r.translation) * width;
  a.ty = uniform(-r.translation, r.translation) * height;
  a.angle_degrees = uniform(-r.rotation_degrees, r.rotation_degrees);
  a.scale = uniform(r.scale_min, r.scale_max);
  return a;
}

/// Source coordinate that lands on output pixel (x, y) under `a`.
inline void affine_source(const AffineParams& a, int width, int height, double x, double y, double& sx, double& sy) {
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  const double th = a.angle_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double qx = (x - cx - a.tx) / a.scale;
  const double qy = (y - cy - a.ty) / a.scale;
  // Inverse rotation.
  sx = cx + c * qx + s * qy;
  sy = cy - s * qx + c * qy;
}

/// Output(q) = input(A⁻¹(q − c − t) + c) with A = scale·R(angle); bilinear
/// sampling with reflected borders.
inline RgbImage warp_affine(const RgbImage& img, const AffineParams& a) {
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double sx, sy;
      affine_source(a, img.width, img.height, x, y, sx, sy);
      for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = sample_bilinear(img, sx, sy, ch);
    }
  }
  return out;
}

inline RgbImage augment(const RgbImage& img, const AugmentRanges& ranges, std::mt19937_64& rng) {
  return warp_affine(img, sample_affine(ranges, img.width, img.height, rng));
}

}  // namespace agnet
