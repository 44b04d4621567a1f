#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "agnet/error.hpp"
#include "agnet/image.hpp"
#include "agnet/keypoints.hpp"
#include "agnet/parallel.hpp"
#include "agnet/training/trainer.hpp"

namespace agnet {

struct SyntheticConfig {
  int classes = 2;
  int per_class = 64;  // training images per class; a quarter as many test images
  int size = 64;
  std::uint64_t seed = 0;
  int min_keypoints = 8;
  DetectorConfig detector;
};

struct SyntheticSplit {
  std::vector<std::string> class_names;
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
};

namespace detail {

// Quadrant origin (in units of half the image) holding class c's blobs:
// upper-left, lower-right, upper-right, lower-left.
inline void class_quadrant(int c, double& qx, double& qy) {
  static constexpr double xs[] = {0, 1, 1, 0};
  static constexpr double ys[] = {0, 1, 0, 1};
  qx = xs[c];
  qy = ys[c];
}

inline RgbImage draw_synthetic(int cls, int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = size;
  const double unit = s / 64.0;

  // Smooth noise texture, normalised to unit spread, on a mid-grey floor.
  GrayImage tex(size, size);
  for (double& v : tex.pixels) v = u(rng);
  tex = gaussian_blur(tex, 2.0 * unit);
  double mean = 0, var = 0;
  for (double v : tex.pixels) mean += v;
  mean /= static_cast<double>(tex.pixels.size());
  for (double v : tex.pixels) var += (v - mean) * (v - mean);
  const double spread = std::sqrt(var / static_cast<double>(tex.pixels.size()));
  RgbImage img(size, size);
  const double tint[3] = {0.9 + 0.1 * u(rng), 0.9 + 0.1 * u(rng), 0.9 + 0.1 * u(rng)};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = (0.30 + 0.12 * (tex.at(x, y) - mean) / spread) * tint[c];

  double qx, qy;
  class_quadrant(cls, qx, qy);
  const int blobs = 2 + static_cast<int>(rng() % 3);
  for (int b = 0; b < blobs; ++b) {
    const double cx = (qx * 0.5 + 0.1 + 0.3 * u(rng)) * s;
    const double cy = (qy * 0.5 + 0.1 + 0.3 * u(rng)) * s;
    const double sigma = (3.0 + 1.5 * u(rng)) * unit;
    const double amp = 0.45 + 0.15 * u(rng);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double g = amp * std::exp(-d2 / (2 * sigma * sigma));
        for (int c = 0; c < 3; ++c) img.at(x, y, c) += g;
      }
    }
  }
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace detail

/// Two to four bright Gaussian blobs placed in a class-specific quadrant on a
/// textured background. Each image is redrawn until the detector finds at
/// least `min_keypoints` keypoints.
inline SyntheticSplit generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.classes < 2 || cfg.classes > 4) throw DatasetError("synthetic data supports 2 to 4 classes");
  if (cfg.per_class < 1) throw DatasetError("per_class must be positive");
  if (cfg.size < 32) throw DatasetError("synthetic images need a side of at least 32");
  const int test_per_class = std::max(1, cfg.per_class / 4);

  SyntheticSplit out;
  for (int c = 0; c < cfg.classes; ++c) out.class_names.push_back("class" + std::to_string(c));

  auto make = [&](int cls, int index, bool test) {
    const std::uint64_t key = derive_seed(cfg.seed, static_cast<std::uint64_t>(cls) * 2 + (test ? 1 : 0),
                                          static_cast<std::uint64_t>(index));
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
      std::mt19937_64 rng(derive_seed(key, attempt));
      RgbImage img = detail::draw_synthetic(cls, cfg.size, rng);
      if (detect_keypoints(to_grayscale(img), cfg.detector).size() >= static_cast<std::size_t>(cfg.min_keypoints)) {
        char name[32];
        std::snprintf(name, sizeof name, "%s_%04d", test ? "test" : "train", index);
        return LabeledImage{std::move(img), cls, name};
      }
    }
    throw DatasetError("could not draw a synthetic image with enough keypoints");
  };
  for (int c = 0; c < cfg.classes; ++c) {
    for (int i = 0; i < cfg.per_class; ++i) out.train.push_back(make(c, i, false));
    for (int i = 0; i < test_per_class; ++i) out.test.push_back(make(c, i, true));
  }
  return out;
}

}  // namespace agnet
