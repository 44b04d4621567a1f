#pragma once

// The region-attention network: a small convolutional backbone, spatial
// self-attention with a zero-initialised residual scale, bilinear region
// pooling, SE-residual refinement, pairwise inter-region attention,
// importance-weighted aggregation, and a classifier over a learned blend of
// global max and global average pooling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "agnet/net/params.hpp"
#include "agnet/numerics/ops.hpp"
#include "agnet/regions.hpp"

namespace agnet {

template <class T>
Var<T> backbone_forward(const Var<T>& image, const BackboneParams<Var<T>>& p) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[2] != 3) throw ShapeError("backbone expects an H×W×3 image, got " + to_string(s));
  const std::size_t reduction = std::size_t{1} << p.kernels.size();
  if (s[0] % reduction != 0 || s[1] % reduction != 0) {
    throw ShapeError("image " + to_string(s) + " is not divisible by the backbone reduction " +
                     std::to_string(reduction));
  }
  Var<T> x = image;
  for (std::size_t i = 0; i < p.kernels.size(); ++i) {
    x = ops::relu(ops::conv2d(x, p.kernels[i], &p.biases[i], 2, 1));
  }
  return x;
}

/// o = δ·(s·W_out) + x with s_j = Σ_i softmax_i(f(x_i)·g(x_j)) h(x_i).
template <class T>
Var<T> self_attention(const Var<T>& x, const SelfAttentionParams<Var<T>>& p) {
  const Shape s = x.shape();
  if (s.size() != 3 || p.key.shape()[0] != s[2]) {
    throw ShapeError("self_attention: input " + to_string(s) + " does not match key " + to_string(p.key.shape()));
  }
  const std::size_t n = s[0] * s[1], c = s[2];
  const Var<T> flat = ops::reshape(x, {n, c});
  const Var<T> key = ops::matmul(flat, p.key);
  const Var<T> query = ops::matmul(flat, p.query);
  const Var<T> value = ops::matmul(flat, p.value);
  // logits[i, j] = f(x_i)·g(x_j); normalised over i for every column j.
  const Var<T> logits = ops::matmul(key, ops::transpose(query));
  const Var<T> attention = ops::softmax(logits, 0);
  const Var<T> attended = ops::matmul(ops::transpose(attention), value);
  const Var<T> projected = ops::matmul(attended, p.output);
  const Var<T> out = ops::add(ops::scale_by(projected, p.delta), flat);
  return ops::reshape(out, Shape(s));
}

/// Bilinear taps for pooling `boxes` (image coordinates) from an H×W map
/// onto an out×out grid of cell centres (half-pixel alignment, border clamp).
inline std::vector<ops::BilinearTaps> roi_taps(std::span<const BoundingBox> boxes, std::size_t map_h,
                                               std::size_t map_w, double image_w, double image_h, std::size_t out) {
  std::vector<ops::BilinearTaps> taps;
  taps.reserve(boxes.size() * out * out);
  const double mh = static_cast<double>(map_h), mw = static_cast<double>(map_w);
  for (const BoundingBox& b : boxes) {
    double x0 = b.x0 * mw / image_w, x1 = b.x1 * mw / image_w;
    double y0 = b.y0 * mh / image_h, y1 = b.y1 * mh / image_h;
    if (x1 - x0 <= 0) {
      const double c = 0.5 * (x0 + x1);
      x0 = c - 0.5;
      x1 = c + 0.5;
    }
    if (y1 - y0 <= 0) {
      const double c = 0.5 * (y0 + y1);
      y0 = c - 0.5;
      y1 = c + 0.5;
    }
    const double step_y = (y1 - y0) / static_cast<double>(out);
    const double step_x = (x1 - x0) / static_cast<double>(out);
    for (std::size_t u = 0; u < out; ++u) {
      const double iy = std::clamp(y0 + (static_cast<double>(u) + 0.5) * step_y - 0.5, 0.0, mh - 1);
      const std::size_t ya = static_cast<std::size_t>(std::floor(iy));
      const std::size_t yb = std::min(ya + 1, map_h - 1);
      const double ly = iy - static_cast<double>(ya);
      for (std::size_t v = 0; v < out; ++v) {
        const double ix = std::clamp(x0 + (static_cast<double>(v) + 0.5) * step_x - 0.5, 0.0, mw - 1);
        const std::size_t xa = static_cast<std::size_t>(std::floor(ix));
        const std::size_t xb = std::min(xa + 1, map_w - 1);
        const double lx = ix - static_cast<double>(xa);
        ops::BilinearTaps t;
        t.index = {ya * map_w + xa, ya * map_w + xb, yb * map_w + xa, yb * map_w + xb};
        t.weight = {(1 - ly) * (1 - lx), (1 - ly) * lx, ly * (1 - lx), ly * lx};
        taps.push_back(t);
      }
    }
  }
  return taps;
}

/// Pools every box to out×out×C; result is [regions, out, out, C].
template <class T>
Var<T> roi_pool(const Var<T>& feature_map, std::span<const BoundingBox> boxes, double image_w, double image_h,
                std::size_t out = 7) {
  const Shape& s = feature_map.shape();
  if (s.size() != 3) throw ShapeError("roi_pool expects H×W×C, got " + to_string(s));
  if (boxes.empty()) throw ShapeError("roi_pool needs at least one box");
  auto taps = roi_taps(boxes, s[0], s[1], image_w, image_h, out);
  return ops::bilinear_gather(feature_map, std::move(taps), Shape{boxes.size(), out, out, s[2]});
}

/// f ⊙ sigmoid(W₂·relu(W₁·GAP(f))) + f per region. Input [R, h, w, C].
template <class T>
Var<T> se_residual(const Var<T>& pooled, const SeResidualParams<Var<T>>& p) {
  const Shape s = pooled.shape();
  if (s.size() != 4 || s[3] != p.squeeze_weight.shape()[0]) {
    throw ShapeError("se_residual: input " + to_string(s) + " vs squeeze " + to_string(p.squeeze_weight.shape()));
  }
  const std::size_t r = s[0], sp = s[1] * s[2], c = s[3];
  const Var<T> flat = ops::reshape(pooled, {r, sp, c});
  const Var<T> squeezed = ops::mean_axis(flat, 1);
  const Var<T> hidden = ops::relu(ops::add_bias(ops::matmul(squeezed, p.squeeze_weight), p.squeeze_bias));
  const Var<T> gate = ops::sigmoid(ops::add_bias(ops::matmul(hidden, p.excite_weight), p.excite_bias));
  const Var<T> out = ops::add(ops::channel_gate(flat, gate), flat);
  return ops::reshape(out, Shape(s));
}

template <class T>
struct InterAttentionResult {
  Var<T> matrix;    // [R+1, R+1], entries m_{r,r'}
  Var<T> attended;  // [R+1, h, w, C], α_r = Σ_r' m_{r,r'} f_r'
};

/// m_{r,r'} = σ(W_m·tanh(W_u v_r + W_u′ v_r′ + b_u) + b_m) on v_r = GAP(f_r).
template <class T>
InterAttentionResult<T> inter_attention(const Var<T>& features, const InterAttentionParams<Var<T>>& p) {
  const Shape s = features.shape();
  if (s.size() != 4 || s[3] != p.w_u.shape()[0]) {
    throw ShapeError("inter_attention: features " + to_string(s) + " vs W_u " + to_string(p.w_u.shape()));
  }
  const std::size_t r = s[0], sp = s[1] * s[2], c = s[3];
  const Var<T> pooled = ops::mean_axis(ops::reshape(features, {r, sp, c}), 1);
  const Var<T> a = ops::matmul(pooled, p.w_u);
  const Var<T> b = ops::matmul(pooled, p.w_u_prime);
  const Var<T> u = ops::tanh(ops::add_bias(ops::pairwise_sum(a, b), p.b_u));
  const Var<T> m = ops::sigmoid(ops::add_bias(ops::matmul(u, p.w_m), p.b_m));
  const Var<T> matrix = ops::reshape(m, {r, r});
  const Var<T> attended = ops::matmul(matrix, ops::reshape(features, {r, sp * c}));
  return {matrix, ops::reshape(attended, Shape(s))};
}

template <class T>
struct AggregateResult {
  Var<T> weights;  // [R+1]
  Var<T> feature;  // [h, w, C]
};

/// f̂ = Σ_r w_r α_r with w = softmax over regions of W_α·GAP(α_r) + b_α.
template <class T>
AggregateResult<T> aggregate_regions(const Var<T>& attended, const InterAttentionParams<Var<T>>& p) {
  const Shape s = attended.shape();
  if (s.size() != 4 || s[3] != p.w_alpha.shape()[0]) {
    throw ShapeError("aggregate_regions: input " + to_string(s) + " vs W_alpha " + to_string(p.w_alpha.shape()));
  }
  const std::size_t r = s[0], sp = s[1] * s[2], c = s[3];
  const Var<T> pooled = ops::mean_axis(ops::reshape(attended, {r, sp, c}), 1);
  const Var<T> logits = ops::reshape(ops::add_bias(ops::matmul(pooled, p.w_alpha), p.b_alpha), {r});
  const Var<T> weights = ops::softmax(logits, 0);
  const Var<T> mixed = ops::matmul(ops::reshape(weights, {1, r}), ops::reshape(attended, {r, sp * c}));
  return {weights, ops::reshape(mixed, {s[1], s[2], c})};
}

template <class T>
struct ClassifyResult {
  Var<T> omega;          // [2]: weight of GMP, weight of GAP
  Var<T> fused;          // [C]
  Var<T> probabilities;  // [classes]
};

/// F = ω·GMP(f̂) + (1−ω)·GAP(f̂), ω from a 2-way softmax over W_ω·[GMP;GAP]
/// + b_ω; output softmax(W_cls·F + b_cls).
template <class T>
ClassifyResult<T> classify(const Var<T>& feature, const FusionClassifierParams<Var<T>>& p,
                           PoolingMode mode = PoolingMode::fused) {
  const Shape s = feature.shape();
  if (s.size() != 3 || 2 * s[2] != p.w_omega.shape()[0]) {
    throw ShapeError("classify: feature " + to_string(s) + " vs W_omega " + to_string(p.w_omega.shape()));
  }
  const std::size_t c = s[2];
  const Var<T> flat = ops::reshape(feature, {s[0] * s[1], c});
  const Var<T> gmp = ops::max_axis(flat, 0);
  const Var<T> gap = ops::mean_axis(flat, 0);
  const Var<T> both = ops::concat<T>({gmp, gap});
  const Var<T> fusion_logits = ops::reshape(ops::add_bias(ops::matmul(ops::reshape(both, {1, 2 * c}), p.w_omega),
                                                          p.b_omega),
                                            {2});
  const Var<T> omega = ops::softmax(fusion_logits, 0);
  Var<T> fused;
  switch (mode) {
    case PoolingMode::fused:
      fused = ops::reshape(ops::matmul(ops::reshape(omega, {1, 2}), ops::reshape(both, {2, c})), {c});
      break;
    case PoolingMode::gmp_only: fused = gmp; break;
    case PoolingMode::gap_only: fused = gap; break;
  }
  const Var<T> logits = ops::add_bias(ops::matmul(ops::reshape(fused, {1, c}), p.w_cls), p.b_cls);
  const Var<T> probs = ops::softmax(ops::reshape(logits, {p.b_cls.shape()[0]}), 0);
  return {omega, fused, probs};
}

template <class T>
struct ForwardTrace {
  Var<T> backbone;
  Var<T> attended_map;  // self-attention output o
  Var<T> pooled;        // f_r
  Var<T> refined;       // SE-residual output
  InterAttentionResult<T> inter;
  AggregateResult<T> aggregate;
  ClassifyResult<T> classify;
};

/// Everything after the backbone. `regions` lists the R semantic regions
/// followed by the whole image.
template <class T>
ForwardTrace<T> head_forward(const Var<T>& backbone_map, std::span<const BoundingBox> regions,
                             const ParamVars<T>& p, const ModelConfig& cfg, double image_w, double image_h) {
  ForwardTrace<T> t;
  t.backbone = backbone_map;
  t.attended_map = cfg.self_attention ? self_attention(backbone_map, p.self_attn) : backbone_map;
  t.pooled = roi_pool(t.attended_map, regions, image_w, image_h, cfg.pooled_size);
  t.refined = cfg.se_residual ? se_residual(t.pooled, p.se) : t.pooled;
  if (cfg.inter_attention) {
    t.inter = inter_attention(t.refined, p.inter);
  } else {
    t.inter = {Var<T>(), t.refined};
  }
  t.aggregate = aggregate_regions(t.inter.attended, p.inter);
  t.classify = classify(t.aggregate.feature, p.fusion_cls, cfg.pooling);
  return t;
}

template <class T>
ForwardTrace<T> forward_trace(const Var<T>& image, std::span<const BoundingBox> regions, const ParamVars<T>& p,
                              const ModelConfig& cfg) {
  const Shape& s = image.shape();
  const Var<T> map = backbone_forward(image, p.backbone);
  return head_forward(map, regions, p, cfg, static_cast<double>(s[1]), static_cast<double>(s[0]));
}

/// Class probabilities for one image and its region list (whole image last).
template <class T>
Var<T> forward(const Var<T>& image, std::span<const BoundingBox> regions, const ParamVars<T>& p,
               const ModelConfig& cfg) {
  return forward_trace(image, regions, p, cfg).classify.probabilities;
}

}  // namespace agnet
