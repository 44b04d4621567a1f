#pragma once

#include <json.hpp>

#include "agnet/regions.hpp"

namespace agnet::io {

inline nlohmann::json box_json(const BoundingBox& b) { return {{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}}; }

inline BoundingBox box_from_json(const nlohmann::json& j) {
  return {j.at("x0").get<double>(), j.at("y0").get<double>(), j.at("x1").get<double>(), j.at("y1").get<double>()};
}

inline nlohmann::json region_json(const RegionProposal& p) {
  nlohmann::json j;
  j["kappa"] = p.regions.kappa;
  j["source"] = to_string(p.regions.source);
  j["region_count"] = p.regions.semantic_region_count();
  auto& kps = j["keypoints"] = nlohmann::json::array();
  for (const Keypoint& k : p.keypoints) kps.push_back({{"x", k.x}, {"y", k.y}, {"scale", k.scale}, {"response", k.response}});
  if (p.gmm) {
    nlohmann::json g;
    for (const Point2& m : p.gmm->means) g["means"].push_back({m.x, m.y});
    for (const Cov2& c : p.gmm->covariances) g["covariances"].push_back({{c.xx, c.xy}, {c.xy, c.yy}});
    g["weights"] = p.gmm->weights;
    j["gmm"] = g;
  } else {
    j["gmm"] = nullptr;
  }
  auto& prim = j["primary"] = nlohmann::json::array();
  for (const auto& b : p.regions.primary) prim.push_back(box_json(b));
  auto& sec = j["secondary"] = nlohmann::json::array();
  for (const auto& b : p.regions.secondary) sec.push_back(box_json(b));
  j["whole_image"] = box_json(p.regions.whole_image);
  return j;
}

}  // namespace agnet::io
