#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agnet/clustering.hpp"
#include "agnet/image.hpp"
#include "agnet/keypoints.hpp"
#include "agnet/numerics/tensor.hpp"

namespace agnet {

struct BoundingBox {
  double x0 = 0;
  double y0 = 0;
  double x1 = 0;
  double y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool contains(const Point2& p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  bool contains(const BoundingBox& b) const { return b.x0 >= x0 && b.y0 >= y0 && b.x1 <= x1 && b.y1 <= y1; }

  BoundingBox clipped(double w, double h) const {
    BoundingBox b{std::clamp(x0, 0.0, w), std::clamp(y0, 0.0, h), std::clamp(x1, 0.0, w), std::clamp(y1, 0.0, h)};
    return b;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline BoundingBox box_union(const BoundingBox& a, const BoundingBox& b) {
  return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1), std::max(a.y1, b.y1)};
}

enum class RegionSource { keypoints, feature_map, grid_fallback };

inline const char* to_string(RegionSource s) {
  switch (s) {
    case RegionSource::keypoints: return "keypoints";
    case RegionSource::feature_map: return "feature_map";
    case RegionSource::grid_fallback: return "grid_fallback";
  }
  return "unknown";
}

/// κ primary boxes, κ(κ−1)/2 pairwise unions in (i,j), i<j order, and the
/// whole image. R = κ + κ(κ−1)/2; the network sees R+1 regions.
struct RegionSet {
  int kappa = 0;
  std::vector<BoundingBox> primary;
  std::vector<BoundingBox> secondary;
  BoundingBox whole_image;
  RegionSource source = RegionSource::keypoints;

  std::size_t semantic_region_count() const { return primary.size() + secondary.size(); }

  /// Primary, then secondary, then the whole image last.
  std::vector<BoundingBox> all() const {
    std::vector<BoundingBox> out(primary);
    out.insert(out.end(), secondary.begin(), secondary.end());
    out.push_back(whole_image);
    return out;
  }
};

inline std::size_t region_count_for(int kappa) {
  const auto k = static_cast<std::size_t>(kappa);
  return k + k * (k - 1) / 2;
}

/// Per-cluster bounding box of the member points, grown symmetrically to at
/// least `min_side` per dimension and clipped to the image. A cluster with no
/// members is centred on `fallback_centers[c]` when provided.
inline std::vector<BoundingBox> primary_regions(const ClusterAssignment& assignment, std::span<const Point2> points,
                                                int kappa, double width, double height, double min_side = 16.0,
                                                std::span<const Point2> fallback_centers = {}) {
  const std::size_t k = static_cast<std::size_t>(kappa);
  std::vector<BoundingBox> boxes(k);
  std::vector<bool> seen(k, false);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t c = static_cast<std::size_t>(assignment.labels.at(i));
    const Point2& p = points[i];
    if (!seen[c]) {
      boxes[c] = {p.x, p.y, p.x, p.y};
      seen[c] = true;
    } else {
      boxes[c] = box_union(boxes[c], {p.x, p.y, p.x, p.y});
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    BoundingBox& b = boxes[c];
    if (!seen[c]) {
      const Point2 centre = c < fallback_centers.size() ? fallback_centers[c] : Point2{width / 2, height / 2};
      b = {centre.x, centre.y, centre.x, centre.y};
    }
    if (b.width() < min_side) {
      const double cx = 0.5 * (b.x0 + b.x1);
      b.x0 = cx - min_side / 2;
      b.x1 = cx + min_side / 2;
    }
    if (b.height() < min_side) {
      const double cy = 0.5 * (b.y0 + b.y1);
      b.y0 = cy - min_side / 2;
      b.y1 = cy + min_side / 2;
    }
    b = b.clipped(width, height);
  }
  return boxes;
}

inline std::vector<BoundingBox> secondary_regions(std::span<const BoundingBox> primary) {
  std::vector<BoundingBox> out;
  for (std::size_t i = 0; i < primary.size(); ++i)
    for (std::size_t j = i + 1; j < primary.size(); ++j) out.push_back(box_union(primary[i], primary[j]));
  return out;
}

/// ceil(√κ) columns × ceil(κ/cols) rows, row-major, extra cells dropped.
inline std::vector<BoundingBox> grid_regions(int kappa, double width, double height) {
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(kappa))));
  const int rows = (kappa + cols - 1) / cols;
  std::vector<BoundingBox> out;
  for (int r = 0; r < rows && static_cast<int>(out.size()) < kappa; ++r) {
    for (int c = 0; c < cols && static_cast<int>(out.size()) < kappa; ++c) {
      out.push_back({c * width / cols, r * height / rows, (c + 1) * width / cols, (r + 1) * height / rows});
    }
  }
  return out;
}

inline RegionSet assemble_region_set(int kappa, std::vector<BoundingBox> primary, double width, double height,
                                     RegionSource source) {
  RegionSet rs;
  rs.kappa = kappa;
  rs.secondary = secondary_regions(primary);
  for (auto& b : rs.secondary) b = b.clipped(width, height);
  rs.primary = std::move(primary);
  rs.whole_image = {0, 0, width, height};
  rs.source = source;
  return rs;
}

struct RegionConfig {
  int kappa = 8;
  double min_side = 16.0;
  DetectorConfig detector;
  GmmConfig gmm;
};

/// Region set plus the intermediate products, for inspection.
struct RegionProposal {
  RegionSet regions;
  std::vector<Keypoint> keypoints;
  std::optional<GmmModel> gmm;
};

/// detect → cluster → primary → secondary → whole image. Falls back to a
/// uniform grid when fewer than κ distinct keypoint positions exist.
inline RegionProposal propose_regions(const GrayImage& image, const RegionConfig& cfg) {
  if (cfg.kappa < 1) throw Error("kappa must be at least 1");
  const double w = image.width, h = image.height;
  RegionProposal out;
  out.keypoints = detect_keypoints(image, cfg.detector);

  std::vector<Point2> points;
  points.reserve(out.keypoints.size());
  std::set<std::pair<double, double>> distinct;
  for (const Keypoint& kp : out.keypoints) {
    points.push_back({kp.x, kp.y});
    distinct.insert({kp.x, kp.y});
  }
  if (distinct.size() < static_cast<std::size_t>(cfg.kappa)) {
    out.regions = assemble_region_set(cfg.kappa, grid_regions(cfg.kappa, w, h), w, h, RegionSource::grid_fallback);
    return out;
  }
  GmmConfig gmm = cfg.gmm;
  gmm.k = cfg.kappa;
  GmmFit fit = fit_gmm(points, gmm);
  std::vector<BoundingBox> primary =
      primary_regions(fit.assignment, points, cfg.kappa, w, h, cfg.min_side, fit.model.means);
  out.regions = assemble_region_set(cfg.kappa, std::move(primary), w, h, RegionSource::keypoints);
  out.gmm = std::move(fit.model);
  return out;
}

inline RegionSet build_region_set(const GrayImage& image, const RegionConfig& cfg) {
  return propose_regions(image, cfg).regions;
}

/// Region proposal from a CNN feature map: each spatial cell's channel vector
/// is clustered with k-means; every group's cell footprint is boxed in image
/// coordinates.
template <class T>
RegionSet cluster_feature_map(const Tensor<T>& feature_map, int kappa, double image_width, double image_height,
                              std::uint64_t seed = 0) {
  if (feature_map.rank() != 3) throw ShapeError("feature map must be H×W×C, got " + to_string(feature_map.shape()));
  const std::size_t fh = feature_map.extent(0), fw = feature_map.extent(1), fc = feature_map.extent(2);
  const std::size_t cells = fh * fw;
  if (kappa < 1 || cells < static_cast<std::size_t>(kappa)) {
    throw ClusteringError("feature map has " + std::to_string(cells) + " cells, too few for kappa=" +
                          std::to_string(kappa));
  }
  std::vector<double> flat(feature_map.data().begin(), feature_map.data().end());
  std::set<std::vector<double>> distinct;
  for (std::size_t i = 0; i < cells; ++i) distinct.insert(std::vector<double>(&flat[i * fc], &flat[i * fc] + fc));
  if (distinct.size() < static_cast<std::size_t>(kappa)) {
    return assemble_region_set(kappa, grid_regions(kappa, image_width, image_height), image_width, image_height,
                               RegionSource::grid_fallback);
  }
  const KMeansResult km = kmeans(flat, fc, kappa, seed);
  const double sx = image_width / static_cast<double>(fw);
  const double sy = image_height / static_cast<double>(fh);
  std::vector<BoundingBox> primary(static_cast<std::size_t>(kappa));
  std::vector<bool> seen(primary.size(), false);
  for (std::size_t i = 0; i < cells; ++i) {
    const std::size_t g = static_cast<std::size_t>(km.labels[i]);
    const double cy = static_cast<double>(i / fw), cx = static_cast<double>(i % fw);
    const BoundingBox cell{cx * sx, cy * sy, (cx + 1) * sx, (cy + 1) * sy};
    primary[g] = seen[g] ? box_union(primary[g], cell) : cell;
    seen[g] = true;
  }
  for (std::size_t g = 0; g < primary.size(); ++g) {
    if (!seen[g]) primary[g] = {0, 0, image_width, image_height};
  }
  return assemble_region_set(kappa, std::move(primary), image_width, image_height, RegionSource::feature_map);
}

}  // namespace agnet
