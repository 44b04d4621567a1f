#pragma once

// Exhaustive reference metrics: every rank and every precision envelope is
// recomputed from scratch per item.

#include <algorithm>
#include <cmath>
#include <vector>

namespace agnet::oracle {

struct Metrics {
  double top1 = 0;
  double top5 = 0;
  double map = 0;
  std::vector<double> ap;
};

// Position of item i when items are ordered by descending score, earlier
// items first among equal scores.
inline std::size_t position(const std::vector<double>& s, std::size_t i) {
  std::size_t p = 0;
  for (std::size_t j = 0; j < s.size(); ++j) p += s[j] > s[i] || (s[j] == s[i] && j < i);
  return p;
}

inline double brute_ap(const std::vector<double>& scores, const std::vector<int>& positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> at(n);
  for (std::size_t i = 0; i < n; ++i) at[position(scores, i)] = i;
  int total = 0;
  for (int p : positive) total += p;
  if (total == 0) return std::nan("");
  double ap = 0, prev = 0;
  for (std::size_t k = 0; k < n; ++k) {
    int tp = 0;
    for (std::size_t j = 0; j <= k; ++j) tp += positive[at[j]];
    const double recall = static_cast<double>(tp) / total;
    // Interpolated precision: best precision at any cut-off with at least this recall.
    double best = 0;
    for (std::size_t m = k; m < n; ++m) {
      int tpm = 0;
      for (std::size_t j = 0; j <= m; ++j) tpm += positive[at[j]];
      best = std::max(best, static_cast<double>(tpm) / static_cast<double>(m + 1));
    }
    ap += (recall - prev) * best;
    prev = recall;
  }
  return ap;
}

inline Metrics brute_metrics(const std::vector<std::vector<double>>& probs, const std::vector<int>& labels,
                             std::size_t classes) {
  Metrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    std::size_t rank = 0;
    for (std::size_t c = 0; c < classes; ++c) rank += probs[i][c] > probs[i][y] || (probs[i][c] == probs[i][y] && c < y);
    m.top1 += rank == 0;
    m.top5 += rank < 5;
  }
  m.top1 /= static_cast<double>(labels.size());
  m.top5 /= static_cast<double>(labels.size());
  int counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> s;
    std::vector<int> pos;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s.push_back(probs[i][c]);
      pos.push_back(labels[i] == static_cast<int>(c));
    }
    const double ap = brute_ap(s, pos);
    m.ap.push_back(ap);
    if (!std::isnan(ap)) {
      m.map += ap;
      ++counted;
    }
  }
  m.map = counted ? m.map / counted : 0.0;
  return m;
}

}  // namespace agnet::oracle
