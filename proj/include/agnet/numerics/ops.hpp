#pragma once

// Differentiable tensor operations recorded on a Tape. Every op computes its
// forward value eagerly and registers a closure that scatters the incoming
// gradient into its inputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "agnet/numerics/tape.hpp"
#include "agnet/numerics/tensor.hpp"

namespace agnet::ops {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  require(a == b, std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  require(axis < shape.size(), "axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

inline Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out.push_back(shape[i]);
  if (out.empty()) out.push_back(1);
  return out;
}

template <class T>
void accumulate(Tape<T>& tape, const Var<T>& v, std::span<const T> g) {
  if (!v.requires_grad()) return;
  auto dst = tape.grad(v.id()).data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// c[m×n] += a[m×k] · b[k×n], with optional transposition of the operands as
// stored. Loop order keeps the innermost access contiguous.
template <class T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
              bool trans_a, bool trans_b) {
  if (!trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        if (av == T{0}) continue;
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc{0};
        if (trans_a) {
          for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
        } else {
          const T* arow = a + i * k;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        }
        crow[j] += acc;
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const Var<T> in = x;
  return x.tape().record(std::move(out), {x}, [in](Tape<T>& tape, const Tensor<T>& g) {
    detail::accumulate(tape, in, g.data());
  });
}

template <class T>
Var<T> transpose(const Var<T>& x) {
  const Tensor<T>& v = x.value();
  detail::require(v.rank() == 2, "transpose expects a matrix, got " + to_string(v.shape()));
  const std::size_t m = v.extent(0), n = v.extent(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = v.at(i, j);
  const Var<T> in = x;
  return x.tape().record(std::move(out), {x}, [in, m, n](Tape<T>& tape, const Tensor<T>& g) {
    if (!in.requires_grad()) return;
    Tensor<T>& dst = tape.grad(in.id());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst.at(i, j) += g.at(j, i);
  });
}

/// Flattens every input and joins them end to end.
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat of nothing");
  std::vector<T> data;
  for (const Var<T>& p : parts) {
    const auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
  }
  const std::size_t total = data.size();
  Tensor<T> out({total}, std::move(data));
  return parts.front().tape().record_many(
      std::move(out), parts, [parts](Tape<T>& tape, const Tensor<T>& g) {
        std::size_t offset = 0;
        for (const Var<T>& p : parts) {
          const std::size_t len = p.value().size();
          detail::accumulate(tape, p, g.data().subspan(offset, len));
          offset += len;
        }
      });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Matrix product of a[m×k] and b[k×n].
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require(av.rank() == 2 && bv.rank() == 2,
                  "matmul expects matrices, got " + to_string(av.shape()) + " and " + to_string(bv.shape()));
  const std::size_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
  detail::require(bv.extent(0) == k,
                  "matmul inner extents differ: " + to_string(av.shape()) + " x " + to_string(bv.shape()));
  Tensor<T> out({m, n});
  detail::gemm_acc(av.data().data(), bv.data().data(), out.data().data(), m, k, n, false, false);
  const Var<T> ca = a, cb = b;
  return a.tape().record(std::move(out), {a, b}, [ca, cb, m, k, n](Tape<T>& tape, const Tensor<T>& g) {
    if (ca.requires_grad()) {
      // dA = G · Bᵀ
      detail::gemm_acc(g.data().data(), cb.value().data().data(), tape.grad(ca.id()).data().data(), m, n, k,
                       false, true);
    }
    if (cb.requires_grad()) {
      // dB = Aᵀ · G
      detail::gemm_acc(ca.value().data().data(), g.data().data(), tape.grad(cb.id()).data().data(), k, m, n,
                       true, false);
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const Var<T> ca = a, cb = b;
  return a.tape().record(std::move(out), {a, b}, [ca, cb](Tape<T>& tape, const Tensor<T>& g) {
    detail::accumulate(tape, ca, g.data());
    detail::accumulate(tape, cb, g.data());
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const Var<T> ca = a, cb = b;
  return a.tape().record(std::move(out), {a, b}, [ca, cb](Tape<T>& tape, const Tensor<T>& g) {
    detail::accumulate(tape, ca, g.data());
    if (!cb.requires_grad()) return;
    auto dst = tape.grad(cb.id()).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= g[i];
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const Var<T> ca = a, cb = b;
  return a.tape().record(std::move(out), {a, b}, [ca, cb](Tape<T>& tape, const Tensor<T>& g) {
    const auto av = ca.value().data();
    const auto bv = cb.value().data();
    if (ca.requires_grad()) {
      auto dst = tape.grad(ca.id()).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * bv[i];
    }
    if (cb.requires_grad()) {
      auto dst = tape.grad(cb.id()).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * av[i];
    }
  });
}

/// Multiplies every element by a constant.
template <class T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v *= factor;
  const Var<T> in = x;
  return x.tape().record(std::move(out), {x}, [in, factor](Tape<T>& tape, const Tensor<T>& g) {
    if (!in.requires_grad()) return;
    auto dst = tape.grad(in.id()).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
  });
}

/// Multiplies every element of `x` by the single-element tensor `s`.
template <class T>
Var<T> scale_by(const Var<T>& x, const Var<T>& s) {
  detail::require(s.value().size() == 1, "scale_by expects a scalar factor, got " + to_string(s.shape()));
  const T factor = s.value()[0];
  Tensor<T> out = x.value();
  for (T& v : out.data()) v *= factor;
  const Var<T> cx = x, cs = s;
  return x.tape().record(std::move(out), {x, s}, [cx, cs](Tape<T>& tape, const Tensor<T>& g) {
    const T f = cs.value()[0];
    if (cx.requires_grad()) {
      auto dst = tape.grad(cx.id()).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += f * g[i];
    }
    if (cs.requires_grad()) {
      const auto xv = cx.value().data();
      T acc{0};
      for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * g[i];
      tape.grad(cs.id())[0] += acc;
    }
  });
}

/// Adds `bias` (length = last extent of `x`) to every trailing row of `x`.
template <class T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  const std::size_t n = bias.value().size();
  detail::require(x.shape().back() == n,
                  "add_bias: bias " + to_string(bias.shape()) + " does not match " + to_string(x.shape()));
  Tensor<T> out = x.value();
  const auto bv = bias.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  const Var<T> cx = x, cb = bias;
  return x.tape().record(std::move(out), {x, bias}, [cx, cb, n](Tape<T>& tape, const Tensor<T>& g) {
    detail::accumulate(tape, cx, g.data());
    if (!cb.requires_grad()) return;
    auto dst = tape.grad(cb.id()).data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i % n] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  const Var<T> in = x;
  // The output is needed for the derivative; it is captured by value.
  Tensor<T> saved = out;
  return x.tape().record(std::move(out), {x}, [in, saved = std::move(saved)](Tape<T>& tape, const Tensor<T>& g) {
    if (!in.requires_grad()) return;
    auto dst = tape.grad(in.id()).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * saved[i] * (T{1} - saved[i]);
  });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = std::tanh(v);
  const Var<T> in = x;
  Tensor<T> saved = out;
  return x.tape().record(std::move(out), {x}, [in, saved = std::move(saved)](Tape<T>& tape, const Tensor<T>& g) {
    if (!in.requires_grad()) return;
    auto dst = tape.grad(in.id()).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * (T{1} - saved[i] * saved[i]);
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  const Var<T> in = x;
  return x.tape().record(std::move(out), {x}, [in](Tape<T>& tape, const Tensor<T>& g) {
    if (!in.requires_grad()) return;
    const auto xv = in.value().data();
    auto dst = tape.grad(in.id()).data();
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (xv[i] > T{0}) dst[i] += g[i];
  });
}

/// Softmax along `axis`, computed with max subtraction.
template <class T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis);
  Tensor<T> out = x.value();
  auto d = out.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T mx = d[base];
      for (std::size_t i = 1; i < s.n; ++i) mx = std::max(mx, d[base + i * s.inner]);
      T sum{0};
      for (std::size_t i = 0; i < s.n; ++i) {
        T& v = d[base + i * s.inner];
        v = std::exp(v - mx);
        sum += v;
      }
      for (std::size_t i = 0; i < s.n; ++i) d[base + i * s.inner] /= sum;
    }
  }
  const Var<T> cx = x;
  Tensor<T> saved = out;
  return x.tape().record(std::move(out), {x}, [cx, s, saved = std::move(saved)](Tape<T>& tape, const Tensor<T>& g) {
    if (!cx.requires_grad()) return;
    auto dst = tape.grad(cx.id()).data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        T dot{0};
        for (std::size_t i = 0; i < s.n; ++i) dot += g[base + i * s.inner] * saved[base + i * s.inner];
        for (std::size_t i = 0; i < s.n; ++i) {
          const std::size_t idx = base + i * s.inner;
          dst[idx] += saved[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum(const Var<T>& x) {
  T acc{0};
  for (T v : x.value().data()) acc += v;
  const Var<T> in = x;
  return x.tape().record(Tensor<T>::scalar(acc), {x}, [in](Tape<T>& tape, const Tensor<T>& g) {
    if (!in.requires_grad()) return;
    for (T& v : tape.grad(in.id()).data()) v += g[0];
  });
}

/// Mean over one axis; the axis is removed from the result shape.
template <class T>
Var<T> mean_axis(const Var<T>& x, std::size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis);
  Tensor<T> out(detail::drop_axis(x.shape(), axis));
  const auto xv = x.value().data();
  const T inv = T{1} / static_cast<T>(s.n);
  for (std::size_t o = 0; o < s.outer; ++o) {
    T* row = out.data().data() + o * s.inner;
    for (std::size_t i = 0; i < s.n; ++i) {
      const T* src = xv.data() + (o * s.n + i) * s.inner;
      for (std::size_t in = 0; in < s.inner; ++in) row[in] += src[in];
    }
    for (std::size_t in = 0; in < s.inner; ++in) row[in] *= inv;
  }
  const Var<T> cx = x;
  return x.tape().record(std::move(out), {x}, [cx, s, inv](Tape<T>& tape, const Tensor<T>& g) {
    if (!cx.requires_grad()) return;
    auto dst = tape.grad(cx.id()).data();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.n; ++i)
        for (std::size_t in = 0; in < s.inner; ++in)
          dst[(o * s.n + i) * s.inner + in] += g[o * s.inner + in] * inv;
  });
}

/// Maximum over one axis. The gradient flows to the first maximal element.
template <class T>
Var<T> max_axis(const Var<T>& x, std::size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis);
  Tensor<T> out(detail::drop_axis(x.shape(), axis));
  std::vector<std::size_t> argmax(s.outer * s.inner, 0);
  const auto xv = x.value().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      std::size_t best = 0;
      for (std::size_t i = 1; i < s.n; ++i)
        if (xv[base + i * s.inner] > xv[base + best * s.inner]) best = i;
      argmax[o * s.inner + in] = base + best * s.inner;
      out[o * s.inner + in] = xv[base + best * s.inner];
    }
  }
  const Var<T> cx = x;
  return x.tape().record(std::move(out), {x}, [cx, argmax = std::move(argmax)](Tape<T>& tape, const Tensor<T>& g) {
    if (!cx.requires_grad()) return;
    auto dst = tape.grad(cx.id()).data();
    for (std::size_t i = 0; i < argmax.size(); ++i) dst[argmax[i]] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Convolution

/// Cross-correlation of x[H×W×Cin] with kernel[k×k×Cin×Cout] plus optional
/// bias[Cout]. Output extent is floor((H + 2p − k)/stride) + 1.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>* bias, std::size_t stride, std::size_t padding) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& kv = kernel.value();
  detail::require(xv.rank() == 3, "conv2d input must be H×W×C, got " + to_string(xv.shape()));
  detail::require(kv.rank() == 4 && kv.extent(0) == kv.extent(1),
                  "conv2d kernel must be k×k×Cin×Cout, got " + to_string(kv.shape()));
  detail::require(stride >= 1, "conv2d stride must be positive");
  const std::size_t h = xv.extent(0), w = xv.extent(1), cin = xv.extent(2);
  const std::size_t k = kv.extent(0), cout = kv.extent(3);
  detail::require(kv.extent(2) == cin, "conv2d channel mismatch: input " + to_string(xv.shape()) + ", kernel " +
                                           to_string(kv.shape()));
  detail::require(k <= h + 2 * padding && k <= w + 2 * padding,
                  "conv2d kernel larger than padded input " + to_string(xv.shape()));
  if (bias) {
    detail::require(bias->value().size() == cout, "conv2d bias length mismatch");
  }
  const std::size_t oh = (h + 2 * padding - k) / stride + 1;
  const std::size_t ow = (w + 2 * padding - k) / stride + 1;
  Tensor<T> out({oh, ow, cout});
  const T* xp = xv.data().data();
  const T* kp = kv.data().data();
  T* op = out.data().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      T* orow = op + (oy * ow + ox) * cout;
      if (bias) {
        const auto bv = bias->value().data();
        for (std::size_t co = 0; co < cout; ++co) orow[co] = bv[co];
      }
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const T* xin = xp + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          const T* kk = kp + (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T v = xin[ci];
            const T* krow = kk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) orow[co] += v * krow[co];
          }
        }
      }
    }
  }
  const Var<T> cx = x, ck = kernel;
  const Var<T> cb = bias ? *bias : Var<T>();
  auto backward = [cx, ck, cb, h, w, cin, k, cout, oh, ow, stride, padding](Tape<T>& tape, const Tensor<T>& g) {
    const T* xp = cx.value().data().data();
    const T* kp = ck.value().data().data();
    const T* gp = g.data().data();
    T* dx = cx.requires_grad() ? tape.grad(cx.id()).data().data() : nullptr;
    T* dk = ck.requires_grad() ? tape.grad(ck.id()).data().data() : nullptr;
    if (cb.valid() && cb.requires_grad()) {
      T* db = tape.grad(cb.id()).data().data();
      for (std::size_t p = 0; p < oh * ow; ++p)
        for (std::size_t co = 0; co < cout; ++co) db[co] += gp[p * cout + co];
    }
    if (!dx && !dk) return;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T* grow = gp + (oy * ow + ox) * cout;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t in_off = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
            const std::size_t k_off = (ky * k + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T* krow = kp + k_off + ci * cout;
              if (dx) {
                T acc{0};
                for (std::size_t co = 0; co < cout; ++co) acc += grow[co] * krow[co];
                dx[in_off + ci] += acc;
              }
              if (dk) {
                const T v = xp[in_off + ci];
                T* dkrow = dk + k_off + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) dkrow[co] += v * grow[co];
              }
            }
          }
        }
      }
    }
  };
  if (bias) return x.tape().record(std::move(out), {x, kernel, *bias}, std::move(backward));
  return x.tape().record(std::move(out), {x, kernel}, std::move(backward));
}

// ---------------------------------------------------------------------------
// Region-attention building blocks

/// Sum of every row pair: row (i·R + j) of the result is a[i] + b[j].
template <class T>
Var<T> pairwise_sum(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require(av.rank() == 2 && av.shape() == bv.shape(),
                  "pairwise_sum expects equal matrices, got " + to_string(av.shape()) + " and " + to_string(bv.shape()));
  const std::size_t r = av.extent(0), d = av.extent(1);
  Tensor<T> out({r * r, d});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t c = 0; c < d; ++c) out.at(i * r + j, c) = av.at(i, c) + bv.at(j, c);
  const Var<T> ca = a, cb = b;
  return a.tape().record(std::move(out), {a, b}, [ca, cb, r, d](Tape<T>& tape, const Tensor<T>& g) {
    T* da = ca.requires_grad() ? tape.grad(ca.id()).data().data() : nullptr;
    T* db = cb.requires_grad() ? tape.grad(cb.id()).data().data() : nullptr;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < r; ++j)
        for (std::size_t c = 0; c < d; ++c) {
          const T v = g.at(i * r + j, c);
          if (da) da[i * d + c] += v;
          if (db) db[j * d + c] += v;
        }
  });
}

/// Per-(row, channel) gating: y[a,s,c] = x[a,s,c] · gate[a,c].
template <class T>
Var<T> channel_gate(const Var<T>& x, const Var<T>& gate) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gate.value();
  detail::require(xv.rank() == 3 && gv.rank() == 2 && gv.extent(0) == xv.extent(0) && gv.extent(1) == xv.extent(2),
                  "channel_gate: " + to_string(xv.shape()) + " vs gate " + to_string(gv.shape()));
  const std::size_t na = xv.extent(0), ns = xv.extent(1), nc = xv.extent(2);
  Tensor<T> out = xv;
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t c = 0; c < nc; ++c) out.at(a, s, c) *= gv.at(a, c);
  const Var<T> cx = x, cg = gate;
  return x.tape().record(std::move(out), {x, gate}, [cx, cg, na, ns, nc](Tape<T>& tape, const Tensor<T>& g) {
    const Tensor<T>& xv = cx.value();
    const Tensor<T>& gv = cg.value();
    Tensor<T>* dx = cx.requires_grad() ? &tape.grad(cx.id()) : nullptr;
    Tensor<T>* dg = cg.requires_grad() ? &tape.grad(cg.id()) : nullptr;
    for (std::size_t a = 0; a < na; ++a)
      for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t c = 0; c < nc; ++c) {
          const T gi = g.at(a, s, c);
          if (dx) dx->at(a, s, c) += gi * gv.at(a, c);
          if (dg) dg->at(a, c) += gi * xv.at(a, s, c);
        }
  });
}

/// One bilinear tap set: four source indices and weights per output element.
struct BilinearTaps {
  std::array<std::size_t, 4> index{};
  std::array<double, 4> weight{};
};

/// Gathers spatial cells from x[H×W×C] with fixed bilinear taps. The result
/// has shape [taps.size()/cells_per_row ... ] given by `out_shape`, with C
/// trailing. The map is linear in x, so the gradient is the transpose gather.
template <class T>
Var<T> bilinear_gather(const Var<T>& x, std::vector<BilinearTaps> taps, Shape out_shape) {
  const Tensor<T>& xv = x.value();
  detail::require(xv.rank() == 3, "bilinear_gather expects H×W×C, got " + to_string(xv.shape()));
  const std::size_t c = xv.extent(2);
  detail::require(shape_size(out_shape) == taps.size() * c && out_shape.back() == c,
                  "bilinear_gather output shape " + to_string(out_shape) + " inconsistent with taps");
  Tensor<T> out(std::move(out_shape));
  const T* xp = xv.data().data();
  T* op = out.data().data();
  for (std::size_t t = 0; t < taps.size(); ++t) {
    T* dst = op + t * c;
    for (std::size_t q = 0; q < 4; ++q) {
      const T wq = static_cast<T>(taps[t].weight[q]);
      if (wq == T{0}) continue;
      const T* src = xp + taps[t].index[q] * c;
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += wq * src[ch];
    }
  }
  const Var<T> cx = x;
  return x.tape().record(std::move(out), {x}, [cx, taps = std::move(taps), c](Tape<T>& tape, const Tensor<T>& g) {
    if (!cx.requires_grad()) return;
    T* dx = tape.grad(cx.id()).data().data();
    const T* gp = g.data().data();
    for (std::size_t t = 0; t < taps.size(); ++t) {
      const T* src = gp + t * c;
      for (std::size_t q = 0; q < 4; ++q) {
        const T wq = static_cast<T>(taps[t].weight[q]);
        if (wq == T{0}) continue;
        T* dst = dx + taps[t].index[q] * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += wq * src[ch];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Loss

/// −log p_y with p_y clamped below at 1e-12.
template <class T>
Var<T> cross_entropy(const Var<T>& probabilities, std::size_t label) {
  const Tensor<T>& p = probabilities.value();
  if (label >= p.size()) {
    throw Error("cross_entropy: class index " + std::to_string(label) + " out of range for " +
                std::to_string(p.size()) + " classes");
  }
  constexpr T floor_p = static_cast<T>(1e-12);
  const T py = p[label];
  const T loss = -std::log(std::max(py, floor_p));
  const Var<T> cp = probabilities;
  return probabilities.tape().record(Tensor<T>::scalar(loss), {probabilities},
                                     [cp, label, floor_p](Tape<T>& tape, const Tensor<T>& g) {
                                       if (!cp.requires_grad()) return;
                                       const T py = cp.value()[label];
                                       if (py < floor_p) return;
                                       tape.grad(cp.id())[label] += -g[0] / py;
                                     });
}

}  // namespace agnet::ops
