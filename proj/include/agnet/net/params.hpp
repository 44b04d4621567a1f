#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "agnet/numerics/tape.hpp"
#include "agnet/numerics/tensor.hpp"

namespace agnet {

enum class PoolingMode { fused, gmp_only, gap_only };

inline const char* to_string(PoolingMode m) {
  switch (m) {
    case PoolingMode::fused: return "fused";
    case PoolingMode::gmp_only: return "gmp";
    case PoolingMode::gap_only: return "gap";
  }
  return "fused";
}

/// Architecture plus the component switches used by the ablations.
struct ModelConfig {
  std::size_t image_size = 224;
  /// Widths of the hidden backbone stages; a final stage maps to `channels`.
  /// Every stage is a stride-2 3×3 convolution followed by ReLU.
  std::vector<std::size_t> stage_channels{16, 32, 64, 96};
  std::size_t channels = 96;
  std::size_t inter_dim = 0;  // 0 selects `channels`
  std::size_t num_classes = 2;
  std::size_t pooled_size = 7;

  bool self_attention = true;
  bool se_residual = true;
  bool inter_attention = true;
  PoolingMode pooling = PoolingMode::fused;

  std::size_t stage_count() const { return stage_channels.size() + 1; }
  std::size_t reduction() const { return std::size_t{1} << stage_count(); }
  std::size_t feature_size() const { return image_size / reduction(); }
  std::size_t attention_channels() const { return channels / 8; }
  std::size_t se_hidden() const { return channels / 16 > 0 ? channels / 16 : 1; }
  std::size_t inter_width() const { return inter_dim ? inter_dim : channels; }

  void validate() const {
    if (channels == 0 || channels % 8 != 0) throw Error("model channels must be a positive multiple of 8");
    if (image_size == 0 || image_size % reduction() != 0) {
      throw Error("image size " + std::to_string(image_size) + " is not divisible by the backbone reduction " +
                  std::to_string(reduction()));
    }
    if (num_classes < 2) throw Error("at least two classes are required");
    if (pooled_size == 0) throw Error("pooled size must be positive");
  }
};

// Parameter groups are templated on the holder so the same layout carries
// both stored tensors (H = Tensor<T>) and tape handles (H = Var<T>).

template <class H>
struct BackboneParams {
  std::vector<H> kernels;  // k×k×Cin×Cout
  std::vector<H> biases;   // Cout
};

template <class H>
struct SelfAttentionParams {
  H key;     // C×C′
  H query;   // C×C′
  H value;   // C×C′
  H output;  // C′×C
  H delta;   // scalar, starts at 0
};

template <class H>
struct SeResidualParams {
  H squeeze_weight;  // C×⌊C/16⌋
  H squeeze_bias;
  H excite_weight;   // ⌊C/16⌋×C
  H excite_bias;
};

template <class H>
struct InterAttentionParams {
  H w_u;        // C×D
  H w_u_prime;  // C×D
  H b_u;        // D
  H w_m;        // D×1
  H b_m;        // 1
  H w_alpha;    // C×1
  H b_alpha;    // 1
};

template <class H>
struct FusionClassifierParams {
  H w_omega;  // 2C×2
  H b_omega;  // 2
  H w_cls;    // C×classes
  H b_cls;    // classes
};

template <class H>
struct AgNetParams {
  BackboneParams<H> backbone;
  SelfAttentionParams<H> self_attn;
  SeResidualParams<H> se;
  InterAttentionParams<H> inter;
  FusionClassifierParams<H> fusion_cls;

  /// Visits every parameter in canonical order with (name, holder&).
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::vector<H*> flat() {
    std::vector<H*> out;
    visit([&](const std::string&, H& h) { out.push_back(&h); });
    return out;
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    for (std::size_t i = 0; i < s.backbone.kernels.size(); ++i) {
      f("backbone.conv" + std::to_string(i) + ".kernel", s.backbone.kernels[i]);
      f("backbone.conv" + std::to_string(i) + ".bias", s.backbone.biases[i]);
    }
    f("self_attention.key", s.self_attn.key);
    f("self_attention.query", s.self_attn.query);
    f("self_attention.value", s.self_attn.value);
    f("self_attention.output", s.self_attn.output);
    f("self_attention.delta", s.self_attn.delta);
    f("se.squeeze.weight", s.se.squeeze_weight);
    f("se.squeeze.bias", s.se.squeeze_bias);
    f("se.excite.weight", s.se.excite_weight);
    f("se.excite.bias", s.se.excite_bias);
    f("inter.w_u", s.inter.w_u);
    f("inter.w_u_prime", s.inter.w_u_prime);
    f("inter.b_u", s.inter.b_u);
    f("inter.w_m", s.inter.w_m);
    f("inter.b_m", s.inter.b_m);
    f("inter.w_alpha", s.inter.w_alpha);
    f("inter.b_alpha", s.inter.b_alpha);
    f("fusion.w_omega", s.fusion_cls.w_omega);
    f("fusion.b_omega", s.fusion_cls.b_omega);
    f("classifier.weight", s.fusion_cls.w_cls);
    f("classifier.bias", s.fusion_cls.b_cls);
  }
};

template <class T>
using ParamTensors = AgNetParams<Tensor<T>>;
template <class T>
using ParamVars = AgNetParams<Var<T>>;

/// Zero-filled parameters with the shapes implied by `cfg`.
template <class T>
ParamTensors<T> zero_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamTensors<T> p;
  std::size_t cin = 3;
  for (std::size_t s = 0; s < cfg.stage_count(); ++s) {
    const std::size_t cout = s < cfg.stage_channels.size() ? cfg.stage_channels[s] : cfg.channels;
    p.backbone.kernels.emplace_back(Shape{3, 3, cin, cout});
    p.backbone.biases.emplace_back(Shape{cout});
    cin = cout;
  }
  const std::size_t c = cfg.channels, ca = cfg.attention_channels(), hs = cfg.se_hidden(), d = cfg.inter_width();
  p.self_attn = {Tensor<T>({c, ca}), Tensor<T>({c, ca}), Tensor<T>({c, ca}), Tensor<T>({ca, c}), Tensor<T>({1})};
  p.se = {Tensor<T>({c, hs}), Tensor<T>({hs}), Tensor<T>({hs, c}), Tensor<T>({c})};
  p.inter = {Tensor<T>({c, d}), Tensor<T>({c, d}), Tensor<T>({d}), Tensor<T>({d, 1}),
             Tensor<T>({1}),    Tensor<T>({c, 1}), Tensor<T>({1})};
  p.fusion_cls = {Tensor<T>({2 * c, 2}), Tensor<T>({2}), Tensor<T>({c, cfg.num_classes}), Tensor<T>({cfg.num_classes})};
  return p;
}

/// He-normal convolutions, Glorot-normal matrices, a small-variance
/// classifier (std 0.01), zero biases, δ = 0.
template <class T>
ParamTensors<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ParamTensors<T> p = zero_params<T>(cfg);
  std::mt19937_64 rng(seed);
  auto normal = [&](Tensor<T>& t, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (T& v : t.data()) v = static_cast<T>(dist(rng));
  };
  auto glorot = [&](Tensor<T>& t) {
    normal(t, std::sqrt(2.0 / static_cast<double>(t.extent(0) + t.extent(1))));
  };
  for (auto& k : p.backbone.kernels) normal(k, std::sqrt(2.0 / static_cast<double>(9 * k.extent(2))));
  glorot(p.self_attn.key);
  glorot(p.self_attn.query);
  glorot(p.self_attn.value);
  glorot(p.self_attn.output);
  glorot(p.se.squeeze_weight);
  glorot(p.se.excite_weight);
  glorot(p.inter.w_u);
  glorot(p.inter.w_u_prime);
  glorot(p.inter.w_m);
  glorot(p.inter.w_alpha);
  glorot(p.fusion_cls.w_omega);
  normal(p.fusion_cls.w_cls, 0.01);
  return p;
}

/// Registers every parameter on the tape, preserving the layout. Constants
/// skip gradient bookkeeping for inference.
template <class T>
ParamVars<T> bind(Tape<T>& tape, const ParamTensors<T>& params, bool trainable = true) {
  ParamVars<T> vars;
  vars.backbone.kernels.resize(params.backbone.kernels.size());
  vars.backbone.biases.resize(params.backbone.biases.size());
  std::vector<Var<T>*> slots = vars.flat();
  std::size_t i = 0;
  params.visit([&](const std::string&, const Tensor<T>& t) { *slots[i++] = trainable ? tape.parameter(t) : tape.constant(t); });
  return vars;
}

}  // namespace agnet
