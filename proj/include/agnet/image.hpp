#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "agnet/error.hpp"
#include "agnet/numerics/tensor.hpp"

namespace agnet {

/// Single-channel image, values in [0,1], row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
    if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
  }

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Interleaved RGB image, values in [0,1].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {
    if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
  }

  double& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  static RgbImage from_gray(const GrayImage& g) {
    RgbImage out(g.width, g.height);
    for (std::size_t i = 0; i < g.pixels.size(); ++i)
      for (int c = 0; c < 3; ++c) out.pixels[i * 3 + c] = g.pixels[i];
    return out;
  }

  template <class T>
  Tensor<T> to_tensor() const {
    std::vector<T> data(pixels.begin(), pixels.end());
    return Tensor<T>({static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3}, std::move(data));
  }
};

/// Mirror an index into [0, n) without repeating the edge sample.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Continuous counterpart of reflect_index for coordinates in pixel units.
inline double reflect_coordinate(double x, int n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * (n - 1);
  x = std::fmod(x, period);
  if (x < 0) x += period;
  return x <= n - 1 ? x : period - x;
}

inline GrayImage to_grayscale(const RgbImage& rgb) {
  GrayImage g(rgb.width, rgb.height);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    const double* p = &rgb.pixels[i * 3];
    g.pixels[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return g;
}

inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw Error("gaussian sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

/// Separable Gaussian blur, radius ceil(3σ), reflect padding.
inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  GrayImage tmp(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img.at(reflect_index(x + i, img.width), y);
      tmp.at(x, y) = acc;
    }
  }
  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(x, reflect_index(y + i, img.height));
      out.at(x, y) = acc;
    }
  }
  return out;
}

/// Bilinear sample of channel `c` at continuous pixel coordinates, with
/// reflected out-of-range coordinates.
inline double sample_bilinear(const RgbImage& img, double x, double y, int c) {
  x = reflect_coordinate(x, img.width);
  y = reflect_coordinate(y, img.height);
  const int x0 = std::min(static_cast<int>(std::floor(x)), img.width - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = img.at(x0, y0, c) * (1 - fx) + img.at(x1, y0, c) * fx;
  const double bottom = img.at(x0, y1, c) * (1 - fx) + img.at(x1, y1, c) * fx;
  return top * (1 - fy) + bottom * fy;
}

/// Bilinear resize with pixel-center alignment.
inline RgbImage resize(const RgbImage& img, int width, int height) {
  if (img.width == width && img.height == height) return img;
  RgbImage out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double srcx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const double srcy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample_bilinear(img, srcx, srcy, c);
    }
  }
  return out;
}

}  // namespace agnet
