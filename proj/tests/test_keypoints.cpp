#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include "agnet/keypoints.hpp"

using namespace agnet;

namespace {

GrayImage blob_image(int size, double cx, double cy, double sigma, double amplitude = 1.0) {
  GrayImage g(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      g.at(x, y) = amplitude * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma));
  return g;
}

GrayImage checkerboard(int size, int cell) {
  GrayImage g(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) g.at(x, y) = ((x / cell + y / cell) % 2) ? 1.0 : 0.0;
  return g;
}

GrayImage rotate90(const GrayImage& g) {
  GrayImage out(g.height, g.width);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) out.at(g.height - 1 - y, x) = g.at(x, y);
  return out;
}

// Direct 2-D convolution with a non-separable sampled Gaussian, reflect edges.
GrayImage direct_blur(const GrayImage& g, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  GrayImage out(g.width, g.height);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      double acc = 0, norm = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double w = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
          norm += w;
          acc += w * g.at(reflect_index(x + dx, g.width), reflect_index(y + dy, g.height));
        }
      out.at(x, y) = acc / norm;
    }
  return out;
}

}  // namespace

TEST(Grayscale, Examples) {
  RgbImage white(4, 4, 1.0);
  for (double v : to_grayscale(white).pixels) EXPECT_NEAR(v, 1.0, 1e-12);
  RgbImage green(3, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) green.at(x, y, 1) = 1.0;
  for (double v : to_grayscale(green).pixels) EXPECT_DOUBLE_EQ(v, 0.587);
}

TEST(Grayscale, RandomPixelsMatchWeightedSum) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  RgbImage img(7, 5);
  for (double& v : img.pixels) v = u(rng);
  const GrayImage g = to_grayscale(img);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x)
      EXPECT_NEAR(g.at(x, y), 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2), 1e-15);
}

TEST(GaussianBlur, ConstantImageUnchanged) {
  const GrayImage g(20, 17, 0.42);
  for (double v : gaussian_blur(g, 2.3).pixels) EXPECT_NEAR(v, 0.42, 1e-12);
}

TEST(GaussianBlur, ImpulseMatchesDirectKernel) {
  GrayImage g(41, 41);
  g.at(20, 20) = 1.0;
  const double sigma = 1.7;
  const GrayImage b = gaussian_blur(g, sigma);
  const GrayImage ref = direct_blur(g, sigma);
  double peak = -1;
  int px = -1, py = -1;
  for (int y = 0; y < 41; ++y)
    for (int x = 0; x < 41; ++x) {
      EXPECT_NEAR(b.at(x, y), ref.at(x, y), 1e-12);
      if (b.at(x, y) > peak) std::tie(peak, px, py) = std::tuple(b.at(x, y), x, y);
    }
  EXPECT_EQ(px, 20);
  EXPECT_EQ(py, 20);
}

TEST(GaussianBlur, RejectsNonPositiveSigma) { EXPECT_THROW(gaussian_kernel(0.0), Error); }

TEST(Detector, ConstantImageHasNoKeypoints) {
  EXPECT_TRUE(detect_keypoints(GrayImage(64, 64, 0.5)).empty());
}

TEST(Detector, TooSmallImageThrows) {
  EXPECT_THROW(detect_keypoints(GrayImage(31, 64)), DetectorError);
  EXPECT_NO_THROW(detect_keypoints(GrayImage(32, 32)));
}

TEST(Detector, InvalidConfigThrows) {
  DetectorConfig c;
  c.edge_ratio_threshold = 1.0;
  EXPECT_THROW(detect_keypoints(GrayImage(64, 64), c), DetectorError);
  c = {};
  c.octaves = 0;
  EXPECT_THROW(detect_keypoints(GrayImage(64, 64), c), DetectorError);
}

TEST(Detector, BlobCentreMatchesBruteForceScan) {
  const GrayImage img = blob_image(64, 32, 32, 4.0);
  // Oracle: DoG stack from direct 2-D blurs at σ·k^s on the full-resolution
  // image, scanned for 26-neighbour extrema above the contrast threshold.
  const DetectorConfig cfg;
  const double k = std::pow(2.0, 1.0 / cfg.intervals_per_octave);
  std::vector<GrayImage> blurred;
  for (int s = 0; s < cfg.intervals_per_octave + 3; ++s) blurred.push_back(direct_blur(img, cfg.base_sigma * std::pow(k, s)));
  bool oracle_hit = false;
  for (std::size_t s = 1; s + 2 < blurred.size(); ++s)
    for (int y = 28; y <= 36; ++y)
      for (int x = 28; x <= 36; ++x) {
        auto dog = [&](std::size_t l, int xx, int yy) { return blurred[l + 1].at(xx, yy) - blurred[l].at(xx, yy); };
        const double v = dog(s, x, y);
        if (std::abs(v) < cfg.contrast_threshold) continue;
        bool ext = true;
        for (int ds = -1; ds <= 1 && ext; ++ds)
          for (int dy = -1; dy <= 1 && ext; ++dy)
            for (int dx = -1; dx <= 1 && ext; ++dx) {
              if (!ds && !dx && !dy) continue;
              const double n = dog(s + ds, x + dx, y + dy);
              ext = v > 0 ? v > n : v < n;
            }
        if (ext && std::hypot(x - 32.0, y - 32.0) <= 2.0) oracle_hit = true;
      }
  ASSERT_TRUE(oracle_hit);

  const auto kps = detect_keypoints(img, cfg);
  bool near = false;
  for (const auto& kp : kps) near = near || std::hypot(kp.x - 32, kp.y - 32) <= 2.0;
  EXPECT_TRUE(near);
}

TEST(Detector, CheckerboardRotationCountsAgree) {
  const GrayImage board = checkerboard(64, 8);
  EXPECT_EQ(detect_keypoints(board).size(), detect_keypoints(rotate90(board)).size());
}

TEST(Detector, ResponsesSortedDistinctAndAboveThreshold) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  GrayImage img(96, 96, 0.2);
  for (int b = 0; b < 8; ++b) {
    const GrayImage blob = blob_image(96, 10 + 76 * u(rng), 10 + 76 * u(rng), 3 + 3 * u(rng), 0.6);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] += blob.pixels[i];
  }
  const DetectorConfig cfg;
  const auto kps = detect_keypoints(img, cfg);
  ASSERT_FALSE(kps.empty());
  std::set<std::tuple<double, double, double>> seen;
  for (std::size_t i = 0; i < kps.size(); ++i) {
    EXPECT_GE(kps[i].response, cfg.contrast_threshold);
    EXPECT_GE(kps[i].x, 0);
    EXPECT_LT(kps[i].x, 96);
    EXPECT_GE(kps[i].y, 0);
    EXPECT_LT(kps[i].y, 96);
    if (i) {
      EXPECT_GE(kps[i - 1].response, kps[i].response);
    }
    EXPECT_TRUE(seen.insert({kps[i].x, kps[i].y, kps[i].scale}).second);
  }
  const auto again = detect_keypoints(img, cfg);
  ASSERT_EQ(again.size(), kps.size());
  for (std::size_t i = 0; i < kps.size(); ++i) {
    EXPECT_EQ(again[i].x, kps[i].x);
    EXPECT_EQ(again[i].y, kps[i].y);
    EXPECT_EQ(again[i].response, kps[i].response);
  }
}

TEST(Detector, MaxKeypointsTruncatesByResponse) {
  const GrayImage board = checkerboard(64, 8);
  DetectorConfig cfg;
  const auto all = detect_keypoints(board, cfg);
  ASSERT_GT(all.size(), 3u);
  cfg.max_keypoints = 3;
  const auto top = detect_keypoints(board, cfg);
  ASSERT_EQ(top.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(top[i].response, all[i].response);
}

TEST(Detector, TranslationCovariance) {
  // Content sits well inside a flat background so the shift moves no
  // structure across the border. Shifts are multiples of 8 so every octave
  // grid lines up.
  const int size = 128;
  auto scene = [&](double ox, double oy) {
    GrayImage g(size, size, 0.1);
    const double cx[] = {40, 60, 50}, cy[] = {40, 52, 66}, s[] = {3.5, 4.0, 5.0};
    for (int b = 0; b < 3; ++b) {
      const GrayImage blob = blob_image(size, cx[b] + ox, cy[b] + oy, s[b], 0.7);
      for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] += blob.pixels[i];
    }
    return g;
  };
  const int dx = 16, dy = 8;
  const auto a = detect_keypoints(scene(0, 0));
  const auto b = detect_keypoints(scene(dx, dy));
  ASSERT_FALSE(a.empty());
  ASSERT_EQ(a.size(), b.size());
  for (const auto& ka : a) {
    bool matched = false;
    for (const auto& kb : b)
      matched = matched || (kb.scale == ka.scale && std::abs(kb.x - ka.x - dx) <= 1 && std::abs(kb.y - ka.y - dy) <= 1);
    EXPECT_TRUE(matched) << ka.x << "," << ka.y;
  }
}
