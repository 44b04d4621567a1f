#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "agnet/regions.hpp"

using namespace agnet;

namespace {

ClusterAssignment labels_of(std::vector<int> l) {
  ClusterAssignment a;
  a.labels = std::move(l);
  return a;
}

GrayImage blobs_image(int size, std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  GrayImage g(size, size, 0.1);
  for (int b = 0; b < count; ++b) {
    const double cx = 12 + (size - 24) * u(rng), cy = 12 + (size - 24) * u(rng), s = 3 + 2 * u(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        g.at(x, y) += 0.6 * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s));
  }
  return g;
}

}  // namespace

TEST(PrimaryRegions, TightBoxBeforeExpansion) {
  const std::vector<Point2> pts{{10, 10}, {30, 40}};
  const auto boxes = primary_regions(labels_of({0, 0}), pts, 1, 100, 100, 0.0);
  EXPECT_EQ(boxes[0], (BoundingBox{10, 10, 30, 40}));
}

TEST(PrimaryRegions, SingletonExpandsSymmetrically) {
  const std::vector<Point2> pts{{50, 50}};
  const auto boxes = primary_regions(labels_of({0}), pts, 1, 100, 100, 16.0);
  EXPECT_EQ(boxes[0], (BoundingBox{42, 42, 58, 58}));
}

TEST(PrimaryRegions, ExpansionIsClippedAtBorder) {
  const std::vector<Point2> pts{{2, 99}};
  const auto boxes = primary_regions(labels_of({0}), pts, 1, 100, 100, 16.0);
  EXPECT_EQ(boxes[0], (BoundingBox{0, 91, 10, 100}));
}

TEST(PrimaryRegions, MembersInsideTheirBoxes) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 128);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 8);
    std::vector<Point2> pts(k + rng() % 40);
    std::vector<int> labels(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pts[i] = {u(rng), u(rng)};
      labels[i] = i < static_cast<std::size_t>(k) ? static_cast<int>(i) : static_cast<int>(rng() % k);
    }
    const auto boxes = primary_regions(labels_of(labels), pts, k, 128, 128);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_TRUE(boxes[labels[i]].contains(pts[i]));
    for (const auto& b : boxes) {
      EXPECT_GE(b.x0, 0);
      EXPECT_LE(b.x1, 128);
      // Only clipping can leave a side shorter than the minimum.
      if (b.x0 > 0 && b.x1 < 128) {
        EXPECT_GE(b.width(), 16 - 1e-12);
      }
      if (b.y0 > 0 && b.y1 < 128) {
        EXPECT_GE(b.height(), 16 - 1e-12);
      }
    }
  }
}

TEST(SecondaryRegions, CountsAndUnion) {
  std::vector<BoundingBox> p8(8, BoundingBox{0, 0, 1, 1}), p4(4, BoundingBox{0, 0, 1, 1});
  EXPECT_EQ(secondary_regions(p8).size(), 28u);
  EXPECT_EQ(region_count_for(8), 36u);
  EXPECT_EQ(secondary_regions(p4).size(), 6u);
  EXPECT_EQ(region_count_for(4), 10u);
  const std::vector<BoundingBox> two{{0, 0, 10, 10}, {20, 20, 30, 30}};
  ASSERT_EQ(secondary_regions(two).size(), 1u);
  EXPECT_EQ(secondary_regions(two)[0], (BoundingBox{0, 0, 30, 30}));
  EXPECT_TRUE(secondary_regions(std::vector<BoundingBox>(1)).empty());
}

TEST(SecondaryRegions, CanonicalPairOrder) {
  std::vector<BoundingBox> p;
  for (int i = 0; i < 5; ++i) p.push_back({i * 10.0, 0, i * 10.0 + 5, 5});
  const auto s = secondary_regions(p);
  std::size_t n = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) {
      EXPECT_EQ(s[n], box_union(p[i], p[j]));
      EXPECT_TRUE(s[n].contains(p[i]));
      EXPECT_TRUE(s[n].contains(p[j]));
      ++n;
    }
}

TEST(GridRegions, TilingShape) {
  const auto g = grid_regions(8, 90, 60);
  ASSERT_EQ(g.size(), 8u);  // 3 columns × 3 rows, last cell dropped
  EXPECT_EQ(g[0], (BoundingBox{0, 0, 30, 20}));
  EXPECT_EQ(g[7], (BoundingBox{30, 40, 60, 60}));
  EXPECT_EQ(grid_regions(1, 10, 10)[0], (BoundingBox{0, 0, 10, 10}));
}

TEST(BuildRegionSet, ConstantImageFallsBackToGrid) {
  RegionConfig cfg;
  cfg.kappa = 8;
  const auto p = propose_regions(GrayImage(64, 64, 0.3), cfg);
  EXPECT_EQ(p.regions.source, RegionSource::grid_fallback);
  EXPECT_EQ(p.regions.semantic_region_count(), 36u);
  EXPECT_EQ(p.regions.all().size(), 37u);
  EXPECT_EQ(p.regions.all().back(), (BoundingBox{0, 0, 64, 64}));
  EXPECT_FALSE(p.gmm.has_value());
}

TEST(BuildRegionSet, BlobImageUsesKeypoints) {
  const GrayImage img = blobs_image(96, 3, 10);
  RegionConfig cfg;
  cfg.kappa = 4;
  const auto p = propose_regions(img, cfg);
  ASSERT_GE(p.keypoints.size(), 4u);
  EXPECT_EQ(p.regions.source, RegionSource::keypoints);
  EXPECT_EQ(p.regions.semantic_region_count(), region_count_for(4));
  ASSERT_TRUE(p.gmm.has_value());
  EXPECT_EQ(p.gmm->means.size(), 4u);
}

TEST(BuildRegionSet, KappaOne) {
  const GrayImage img = blobs_image(64, 4, 4);
  RegionConfig cfg;
  cfg.kappa = 1;
  const RegionSet rs = build_region_set(img, cfg);
  EXPECT_EQ(rs.primary.size(), 1u);
  EXPECT_TRUE(rs.secondary.empty());
  EXPECT_EQ(rs.semantic_region_count(), 1u);
  cfg.kappa = 0;
  EXPECT_THROW(build_region_set(img, cfg), Error);
}

TEST(BuildRegionSet, CountPropertyAndClipping) {
  const GrayImage img = blobs_image(96, 5, 12);
  for (int k = 1; k <= 16; ++k) {
    RegionConfig cfg;
    cfg.kappa = k;
    const RegionSet rs = build_region_set(img, cfg);
    EXPECT_EQ(rs.semantic_region_count(), static_cast<std::size_t>(k + k * (k - 1) / 2)) << k;
    std::size_t n = 0;
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j) EXPECT_EQ(rs.secondary[n++], box_union(rs.primary[i], rs.primary[j]));
    for (const auto& b : rs.all()) {
      EXPECT_LE(b.x0, b.x1);
      EXPECT_LE(b.y0, b.y1);
      EXPECT_GE(std::min(b.x0, b.y0), 0);
      EXPECT_LE(std::max(b.x1, b.y1), 96);
    }
  }
}

TEST(BuildRegionSet, Deterministic) {
  const GrayImage img = blobs_image(96, 6, 8);
  RegionConfig cfg;
  cfg.kappa = 5;
  const RegionSet a = build_region_set(img, cfg), b = build_region_set(img, cfg);
  EXPECT_EQ(a.all(), b.all());
}

TEST(FeatureMapRegions, KappaOneIsWholeMap) {
  std::mt19937_64 rng(7);
  Tensor<double> f({4, 4, 3});
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : f.data()) v = u(rng);
  const RegionSet rs = cluster_feature_map(f, 1, 64, 64);
  ASSERT_EQ(rs.primary.size(), 1u);
  EXPECT_EQ(rs.primary[0], (BoundingBox{0, 0, 64, 64}));
  EXPECT_EQ(rs.source, RegionSource::feature_map);
}

TEST(FeatureMapRegions, TwoConstantHalves) {
  // Every split of the 4×4 map into two patterned halves is checked.
  for (std::size_t split = 1; split < 4; ++split) {
    Tensor<double> f({4, 4, 2});
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        f.at(y, x, 0) = x < split ? 1.0 : 0.0;
        f.at(y, x, 1) = x < split ? 0.0 : 1.0;
      }
    const RegionSet rs = cluster_feature_map(f, 2, 64, 64);
    std::vector<BoundingBox> boxes = rs.primary;
    std::sort(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) { return a.x0 < b.x0; });
    const double cut = 16.0 * split;
    EXPECT_EQ(boxes[0], (BoundingBox{0, 0, cut, 64}));
    EXPECT_EQ(boxes[1], (BoundingBox{cut, 0, 64, 64}));
  }
}

TEST(FeatureMapRegions, CountsAndErrors) {
  std::mt19937_64 rng(8);
  Tensor<double> f({4, 4, 3});
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : f.data()) v = u(rng);
  EXPECT_EQ(cluster_feature_map(f, 8, 64, 64).semantic_region_count(), 36u);
  EXPECT_THROW(cluster_feature_map(f, 17, 64, 64), ClusteringError);
  EXPECT_THROW(cluster_feature_map(Tensor<double>({4, 4}), 2, 64, 64), ShapeError);
  EXPECT_EQ(cluster_feature_map(Tensor<double>({4, 4, 3}), 2, 64, 64).source, RegionSource::grid_fallback);
}
