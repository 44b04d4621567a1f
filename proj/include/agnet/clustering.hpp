#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "agnet/error.hpp"

namespace agnet {

struct Point2 {
  double x = 0;
  double y = 0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Symmetric 2×2 matrix [[xx, xy], [xy, yy]].
struct Cov2 {
  double xx = 0;
  double xy = 0;
  double yy = 0;

  double det() const { return xx * yy - xy * xy; }
  double min_eigenvalue() const {
    const double mid = 0.5 * (xx + yy);
    const double rad = std::sqrt(0.25 * (xx - yy) * (xx - yy) + xy * xy);
    return mid - rad;
  }
};

struct GmmConfig {
  int k = 8;
  double covariance_regularization = 1e-6;
  int max_iterations = 100;
  double convergence_threshold = 1e-3;  // mean per-point log-likelihood gain
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw ClusteringError("gmm k must be at least 1");
    if (!(covariance_regularization > 0) || !(convergence_threshold > 0) || max_iterations < 1) {
      throw ClusteringError("gmm regularization, threshold and iteration count must be positive");
    }
  }
};

struct GmmModel {
  std::vector<Point2> means;
  std::vector<Cov2> covariances;
  std::vector<double> weights;
};

struct ClusterAssignment {
  std::vector<int> labels;
  std::vector<std::vector<double>> responsibilities;
};

struct GmmFit {
  GmmModel model;
  ClusterAssignment assignment;
  /// Total log-likelihood evaluated before each M-step, and once at the end.
  std::vector<double> log_likelihood;
  /// Trace positions at which a collapsed component was re-seeded; the
  /// likelihood may drop across these.
  std::vector<std::size_t> reseeds;
  int iterations = 0;
  bool converged = false;
};

// ---------------------------------------------------------------------------
// k-means

struct KMeansResult {
  std::vector<double> centroids;  // k × dim, row-major
  std::vector<int> labels;
  int iterations = 0;
};

namespace detail {

inline double squared_distance(const double* a, const double* b, std::size_t dim) {
  double acc = 0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double t = a[d] - b[d];
    acc += t * t;
  }
  return acc;
}

inline int nearest(const double* p, const std::vector<double>& centroids, std::size_t k, std::size_t dim,
                   double* dist_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_distance(p, &centroids[c * dim], dim);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations until the assignment is a
/// fixed point or 50 iterations. `points` holds n × dim values row-major.
inline KMeansResult kmeans(std::span<const double> points, std::size_t dim, int k, std::uint64_t seed,
                           int max_iterations = 50) {
  if (dim == 0 || points.size() % dim != 0) throw ClusteringError("kmeans: point data is not n × dim");
  const std::size_t n = points.size() / dim;
  if (k < 1) throw ClusteringError("kmeans: k must be at least 1");
  if (n < static_cast<std::size_t>(k)) {
    throw ClusteringError("kmeans: " + std::to_string(n) + " points are too few for k=" + std::to_string(k));
  }
  const std::size_t kk = static_cast<std::size_t>(k);
  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids.assign(kk * dim, 0.0);

  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::copy_n(&points[first * dim], dim, &res.centroids[0]);
  for (std::size_t c = 1; c < kk; ++c) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], detail::squared_distance(&points[i * dim], &res.centroids[(c - 1) * dim], dim));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0) continue;
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
      while (d2[pick] <= 0 && pick > 0) --pick;
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    std::copy_n(&points[pick * dim], dim, &res.centroids[c * dim]);
  }

  res.labels.assign(n, -1);
  std::vector<double> dist(n);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int l = detail::nearest(&points[i * dim], res.centroids, kk, dim, &dist[i]);
      if (l != res.labels[i]) {
        res.labels[i] = l;
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed) break;

    std::vector<double> sums(kk * dim, 0.0);
    std::vector<std::size_t> counts(kk, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t l = static_cast<std::size_t>(res.labels[i]);
      ++counts[l];
      for (std::size_t d = 0; d < dim; ++d) sums[l * dim + d] += points[i * dim + d];
    }
    for (std::size_t c = 0; c < kk; ++c) {
      if (counts[c] > 0) {
        for (std::size_t d = 0; d < dim; ++d) res.centroids[c * dim + d] = sums[c * dim + d] / counts[c];
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (dist[i] > dist[far]) far = i;
      std::copy_n(&points[far * dim], dim, &res.centroids[c * dim]);
      dist[far] = 0;
    }
  }
  return res;
}

inline std::vector<Point2> kmeans_init(std::span<const Point2> points, int k, std::uint64_t seed) {
  std::vector<double> flat;
  flat.reserve(points.size() * 2);
  for (const Point2& p : points) {
    flat.push_back(p.x);
    flat.push_back(p.y);
  }
  const KMeansResult r = kmeans(flat, 2, k, seed);
  std::vector<Point2> out(static_cast<std::size_t>(k));
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = {r.centroids[2 * c], r.centroids[2 * c + 1]};
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian mixture

inline double gaussian_log_density(const Point2& p, const Point2& mean, const Cov2& cov) {
  const double det = cov.det();
  const double dx = p.x - mean.x, dy = p.y - mean.y;
  const double q = (cov.yy * dx * dx - 2 * cov.xy * dx * dy + cov.xx * dy * dy) / det;
  return -std::log(2 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * q;
}

/// Total log-likelihood of the points under a mixture, for verification.
inline double mixture_log_likelihood(std::span<const Point2> points, const GmmModel& m) {
  double total = 0;
  std::vector<double> lp(m.means.size());
  for (const Point2& p : points) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < lp.size(); ++c) {
      lp[c] = std::log(m.weights[c]) + gaussian_log_density(p, m.means[c], m.covariances[c]);
      mx = std::max(mx, lp[c]);
    }
    double s = 0;
    for (double v : lp) s += std::exp(v - mx);
    total += mx + std::log(s);
  }
  return total;
}

namespace detail {

// Biased weighted covariance of the points about `mean`, plus reg·I.
inline Cov2 weighted_covariance(std::span<const Point2> points, std::span<const double> w, double wsum,
                                const Point2& mean, double reg) {
  Cov2 c;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double dx = points[i].x - mean.x, dy = points[i].y - mean.y;
    c.xx += w[i] * dx * dx;
    c.xy += w[i] * dx * dy;
    c.yy += w[i] * dy * dy;
  }
  c.xx = c.xx / wsum + reg;
  c.xy = c.xy / wsum;
  c.yy = c.yy / wsum + reg;
  return c;
}

}  // namespace detail

/// EM for a full-covariance 2-D Gaussian mixture, initialised from k-means
/// labels. Responsibilities come from log-sum-exp; reg·I is added to every
/// M-step covariance.
inline GmmFit fit_gmm(std::span<const Point2> points, const GmmConfig& cfg) {
  cfg.validate();
  const std::size_t n = points.size();
  const std::size_t k = static_cast<std::size_t>(cfg.k);
  if (n < k) {
    throw ClusteringError("fit_gmm: " + std::to_string(n) + " points are too few for k=" + std::to_string(k));
  }
  const double reg = cfg.covariance_regularization;
  constexpr double kCollapsedWeight = 1e-8;

  GmmFit fit;
  GmmModel& m = fit.model;
  std::vector<std::vector<double>> resp(n, std::vector<double>(k, 0.0));
  std::vector<double> column(n);

  auto m_step = [&]() {
    m.means.assign(k, {});
    m.covariances.assign(k, {});
    m.weights.assign(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0, sx = 0, sy = 0;
      for (std::size_t i = 0; i < n; ++i) {
        column[i] = resp[i][c];
        nk += column[i];
        sx += column[i] * points[i].x;
        sy += column[i] * points[i].y;
      }
      m.weights[c] = nk / static_cast<double>(n);
      if (nk <= 0) {
        m.covariances[c] = {reg, 0, reg};
        continue;
      }
      m.means[c] = {sx / nk, sy / nk};
      m.covariances[c] = detail::weighted_covariance(points, column, nk, m.means[c], reg);
    }
  };

  // Initial responsibilities are the hard k-means labels.
  {
    const std::vector<Point2> centroids = kmeans_init(points, cfg.k, cfg.seed);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dx = points[i].x - centroids[c].x, dy = points[i].y - centroids[c].y;
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      resp[i][best] = 1.0;
    }
  }
  m_step();

  std::vector<double> point_ll(n);
  auto e_step = [&]() {
    std::vector<double> lp(k);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        lp[c] = m.weights[c] > 0 ? std::log(m.weights[c]) + gaussian_log_density(points[i], m.means[c], m.covariances[c])
                                 : -std::numeric_limits<double>::infinity();
        mx = std::max(mx, lp[c]);
      }
      double s = 0;
      for (std::size_t c = 0; c < k; ++c) s += std::exp(lp[c] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t c = 0; c < k; ++c) resp[i][c] = std::exp(lp[c] - lse);
      point_ll[i] = lse;
      total += lse;
    }
    return total;
  };

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const double ll = e_step();
    fit.log_likelihood.push_back(ll);
    fit.iterations = it + 1;
    if (it > 0) {
      const double gain = (ll - fit.log_likelihood[fit.log_likelihood.size() - 2]) / static_cast<double>(n);
      if (gain < cfg.convergence_threshold) {
        fit.converged = true;
        break;
      }
    }
    m_step();

    bool reseeded = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (m.weights[c] >= kCollapsedWeight) continue;
      const std::size_t worst =
          static_cast<std::size_t>(std::min_element(point_ll.begin(), point_ll.end()) - point_ll.begin());
      m.means[c] = points[worst];
      std::vector<double> ones(n, 1.0);
      Point2 centre{0, 0};
      for (const Point2& p : points) {
        centre.x += p.x / static_cast<double>(n);
        centre.y += p.y / static_cast<double>(n);
      }
      m.covariances[c] = detail::weighted_covariance(points, ones, static_cast<double>(n), centre, reg);
      m.weights[c] = 1.0 / static_cast<double>(n);
      point_ll[worst] = std::numeric_limits<double>::infinity();
      reseeded = true;
    }
    if (reseeded) {
      double total = 0;
      for (double w : m.weights) total += w;
      for (double& w : m.weights) w /= total;
      fit.reseeds.push_back(fit.log_likelihood.size());
    }
  }
  if (!fit.converged) fit.log_likelihood.push_back(e_step());

  fit.assignment.responsibilities = resp;
  fit.assignment.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    fit.assignment.labels[i] =
        static_cast<int>(std::max_element(resp[i].begin(), resp[i].end()) - resp[i].begin());
  }
  return fit;
}

}  // namespace agnet
