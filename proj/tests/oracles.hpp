#pragma once

// Direct-formula reference implementations on plain tensors. Nothing here
// touches the tape; loops follow the textbook definitions.

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "agnet/net/agnet.hpp"

namespace agnet::oracle {

using Mat = Tensor<double>;

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.image_size = 32;
  c.stage_channels = {8};
  c.channels = 8;
  c.num_classes = 2;
  return c;
}

/// Every parameter drawn from U(−scale, scale), δ included.
inline void randomize(ParamTensors<double>& p, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  p.visit([&](const std::string&, Tensor<double>& t) {
    for (double& v : t.data()) v = u(rng);
  });
}

inline Mat random_map(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat t(std::move(s));
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> softmax(const std::vector<double>& z) {
  double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (e[i] = std::exp(z[i] - mx));
  for (double& v : e) v /= s;
  return e;
}

/// x[H×W×Cin] stride-2 pad-1 3×3 conv + ReLU.
inline Mat conv_relu(const Mat& x, const Mat& k, const Mat& b) {
  const std::size_t h = x.extent(0), w = x.extent(1), cin = x.extent(2), cout = k.extent(3);
  Mat y({(h - 1) / 2 + 1, (w - 1) / 2 + 1, cout});
  for (std::size_t oy = 0; oy < y.extent(0); ++oy)
    for (std::size_t ox = 0; ox < y.extent(1); ++ox)
      for (std::size_t co = 0; co < cout; ++co) {
        double s = b[co];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const long iy = static_cast<long>(2 * oy) + ky - 1, ix = static_cast<long>(2 * ox) + kx - 1;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
            for (std::size_t ci = 0; ci < cin; ++ci) s += x.at(iy, ix, ci) * k[((ky * 3 + kx) * cin + ci) * cout + co];
          }
        y.at(oy, ox, co) = std::max(s, 0.0);
      }
  return y;
}

inline Mat backbone(const Mat& image, const BackboneParams<Mat>& p) {
  Mat x = image;
  for (std::size_t i = 0; i < p.kernels.size(); ++i) x = conv_relu(x, p.kernels[i], p.biases[i]);
  return x;
}

/// o_j = δ·Σ_a s_j[a]·Wv[a,:] + x_j, s_j = Σ_i t_ij·h(x_i),
/// t_ij = exp(f(x_i)·g(x_j)) / Σ_i' exp(f(x_i')·g(x_j)).
inline Mat self_attention(const Mat& x, const SelfAttentionParams<Mat>& p) {
  const std::size_t n = x.extent(0) * x.extent(1), c = x.extent(2), ca = p.key.extent(1);
  auto proj = [&](const Mat& w, std::size_t i, std::size_t a) {
    double s = 0;
    for (std::size_t ch = 0; ch < c; ++ch) s += x[i * c + ch] * w.at(ch, a);
    return s;
  };
  Mat out(x.shape());
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> logit(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0;
      for (std::size_t a = 0; a < ca; ++a) d += proj(p.key, i, a) * proj(p.query, j, a);
      logit[i] = d;
    }
    const std::vector<double> t = softmax(logit);
    std::vector<double> s(ca, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < ca; ++a) s[a] += t[i] * proj(p.value, i, a);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double o = 0;
      for (std::size_t a = 0; a < ca; ++a) o += s[a] * p.output.at(a, ch);
      out[j * c + ch] = p.delta[0] * o + x[j * c + ch];
    }
  }
  return out;
}

/// Bilinear sample of map channel ch at continuous cell coordinates, with
/// coordinates clamped into [0, extent−1].
inline double sample(const Mat& m, double y, double x, std::size_t ch) {
  const double h = static_cast<double>(m.extent(0)), w = static_cast<double>(m.extent(1));
  y = std::clamp(y, 0.0, h - 1);
  x = std::clamp(x, 0.0, w - 1);
  const std::size_t y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, m.extent(0) - 1), x1 = std::min(x0 + 1, m.extent(1) - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * m.at(y0, x0, ch) + fx * m.at(y0, x1, ch)) +
         fy * ((1 - fx) * m.at(y1, x0, ch) + fx * m.at(y1, x1, ch));
}

inline Mat roi_pool(const Mat& m, const std::vector<BoundingBox>& boxes, double iw, double ih, std::size_t out) {
  const std::size_t c = m.extent(2);
  Mat r({boxes.size(), out, out, c});
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const double sx = m.extent(1) / iw, sy = m.extent(0) / ih;
    double x0 = boxes[b].x0 * sx, x1 = boxes[b].x1 * sx, y0 = boxes[b].y0 * sy, y1 = boxes[b].y1 * sy;
    if (x1 <= x0) std::tie(x0, x1) = std::pair(0.5 * (x0 + x1) - 0.5, 0.5 * (x0 + x1) + 0.5);
    if (y1 <= y0) std::tie(y0, y1) = std::pair(0.5 * (y0 + y1) - 0.5, 0.5 * (y0 + y1) + 0.5);
    for (std::size_t u = 0; u < out; ++u)
      for (std::size_t v = 0; v < out; ++v)
        for (std::size_t ch = 0; ch < c; ++ch)
          r[((b * out + u) * out + v) * c + ch] =
              sample(m, y0 + (u + 0.5) * (y1 - y0) / out - 0.5, x0 + (v + 0.5) * (x1 - x0) / out - 0.5, ch);
  }
  return r;
}

inline std::vector<double> gap(const Mat& f, std::size_t r) {
  const std::size_t sp = f.extent(1) * f.extent(2), c = f.extent(3);
  std::vector<double> v(c, 0.0);
  for (std::size_t i = 0; i < sp; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) v[ch] += f[(r * sp + i) * c + ch] / static_cast<double>(sp);
  return v;
}

/// f ⊙ g + f with g = σ(W₂ relu(W₁ GAP(f) + b₁) + b₂), per region.
inline Mat se_residual(const Mat& f, const SeResidualParams<Mat>& p) {
  const std::size_t rr = f.extent(0), sp = f.extent(1) * f.extent(2), c = f.extent(3), hs = p.squeeze_bias.size();
  Mat out(f.shape());
  for (std::size_t r = 0; r < rr; ++r) {
    const std::vector<double> v = gap(f, r);
    std::vector<double> hidden(hs);
    for (std::size_t j = 0; j < hs; ++j) {
      double s = p.squeeze_bias[j];
      for (std::size_t ch = 0; ch < c; ++ch) s += v[ch] * p.squeeze_weight.at(ch, j);
      hidden[j] = std::max(s, 0.0);
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = p.excite_bias[ch];
      for (std::size_t j = 0; j < hs; ++j) s += hidden[j] * p.excite_weight.at(j, ch);
      const double g = sigmoid(s);
      for (std::size_t i = 0; i < sp; ++i) {
        const std::size_t idx = (r * sp + i) * c + ch;
        out[idx] = f[idx] * g + f[idx];
      }
    }
  }
  return out;
}

/// m_{r,r'} = σ(W_m·tanh(W_u v_r + W_u' v_r' + b_u) + b_m); α_r = Σ_r' m_{r,r'} f_r'.
inline std::pair<Mat, Mat> inter_attention(const Mat& f, const InterAttentionParams<Mat>& p) {
  const std::size_t rr = f.extent(0), c = f.extent(3), d = p.b_u.size(), per = f.size() / rr;
  std::vector<std::vector<double>> v;
  for (std::size_t r = 0; r < rr; ++r) v.push_back(gap(f, r));
  Mat m({rr, rr});
  for (std::size_t r = 0; r < rr; ++r)
    for (std::size_t q = 0; q < rr; ++q) {
      double z = p.b_m[0];
      for (std::size_t k = 0; k < d; ++k) {
        double u = p.b_u[k];
        for (std::size_t ch = 0; ch < c; ++ch) u += p.w_u.at(ch, k) * v[r][ch] + p.w_u_prime.at(ch, k) * v[q][ch];
        z += p.w_m.at(k, 0) * std::tanh(u);
      }
      m.at(r, q) = sigmoid(z);
    }
  Mat alpha(f.shape());
  for (std::size_t r = 0; r < rr; ++r)
    for (std::size_t q = 0; q < rr; ++q)
      for (std::size_t i = 0; i < per; ++i) alpha[r * per + i] += m.at(r, q) * f[q * per + i];
  return {m, alpha};
}

/// w = softmax_r(W_α·GAP(α_r) + b_α); f̂ = Σ_r w_r α_r.
inline std::pair<std::vector<double>, Mat> aggregate(const Mat& alpha, const InterAttentionParams<Mat>& p) {
  const std::size_t rr = alpha.extent(0), c = alpha.extent(3), per = alpha.size() / rr;
  std::vector<double> z(rr);
  for (std::size_t r = 0; r < rr; ++r) {
    const std::vector<double> v = gap(alpha, r);
    z[r] = p.b_alpha[0];
    for (std::size_t ch = 0; ch < c; ++ch) z[r] += p.w_alpha.at(ch, 0) * v[ch];
  }
  const std::vector<double> w = softmax(z);
  Mat fhat({alpha.extent(1), alpha.extent(2), c});
  for (std::size_t r = 0; r < rr; ++r)
    for (std::size_t i = 0; i < per; ++i) fhat[i] += w[r] * alpha[r * per + i];
  return {w, fhat};
}

struct ClassifyOut {
  std::vector<double> omega;
  std::vector<double> probabilities;
};

inline ClassifyOut classify(const Mat& fhat, const FusionClassifierParams<Mat>& p) {
  const std::size_t sp = fhat.extent(0) * fhat.extent(1), c = fhat.extent(2), k = p.b_cls.size();
  std::vector<double> gmp(c, -INFINITY), gapv(c, 0.0);
  for (std::size_t i = 0; i < sp; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      gmp[ch] = std::max(gmp[ch], fhat[i * c + ch]);
      gapv[ch] += fhat[i * c + ch] / static_cast<double>(sp);
    }
  std::vector<double> z(2);
  for (std::size_t o = 0; o < 2; ++o) {
    z[o] = p.b_omega[o];
    for (std::size_t ch = 0; ch < c; ++ch) z[o] += gmp[ch] * p.w_omega.at(ch, o) + gapv[ch] * p.w_omega.at(c + ch, o);
  }
  ClassifyOut out;
  out.omega = softmax(z);
  std::vector<double> logits(k);
  for (std::size_t j = 0; j < k; ++j) {
    logits[j] = p.b_cls[j];
    for (std::size_t ch = 0; ch < c; ++ch)
      logits[j] += (out.omega[0] * gmp[ch] + out.omega[1] * gapv[ch]) * p.w_cls.at(ch, j);
  }
  out.probabilities = softmax(logits);
  return out;
}

/// Straight-line composition of the above for the full network.
inline std::vector<double> forward(const Mat& image, const std::vector<BoundingBox>& regions, const ParamTensors<double>& p,
                                   const ModelConfig& cfg) {
  const Mat map = self_attention(backbone(image, p.backbone), p.self_attn);
  const Mat pooled = roi_pool(map, regions, image.extent(1), image.extent(0), cfg.pooled_size);
  const Mat refined = se_residual(pooled, p.se);
  const Mat alpha = inter_attention(refined, p.inter).second;
  return classify(aggregate(alpha, p.inter).second, p.fusion_cls).probabilities;
}

}  // namespace agnet::oracle
