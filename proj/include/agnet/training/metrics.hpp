#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "agnet/error.hpp"

namespace agnet {

struct EvalReport {
  double top1 = 0;
  double top5 = 0;
  double mean_ap = 0;
  std::vector<double> per_class_ap;          // NaN for classes without positives
  std::vector<std::vector<int>> confusion;   // [true][predicted]
  std::size_t count = 0;
};

/// Rank of `label` among the scores; ties resolve toward the lower index.
inline std::size_t rank_of(std::span<const double> scores, std::size_t label) {
  std::size_t rank = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > scores[label] || (scores[c] == scores[label] && c < label)) ++rank;
  }
  return rank;
}

inline std::size_t argmax(std::span<const double> scores) {
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

/// All-points interpolated average precision: items sorted by score
/// (stable), precision replaced by its running maximum from the right,
/// summed over recall increments.
inline double average_precision(std::span<const double> scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  if (positive.size() != n) throw Error("score and label counts differ");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto npos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  if (npos == 0) return std::nan("");
  std::vector<double> precision(n), recall(n);
  double tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positive[order[i]]) tp += 1;
    precision[i] = tp / static_cast<double>(i + 1);
    recall[i] = tp / npos;
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

inline EvalReport evaluate_predictions(const std::vector<std::vector<double>>& probabilities,
                                       std::span<const int> labels, std::size_t num_classes) {
  if (probabilities.empty()) throw Error("cannot evaluate an empty dataset");
  if (probabilities.size() != labels.size()) throw Error("prediction and label counts differ");
  EvalReport r;
  r.count = labels.size();
  r.confusion.assign(num_classes, std::vector<int>(num_classes, 0));
  std::size_t hit1 = 0, hit5 = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& p = probabilities[i];
    if (p.size() != num_classes) throw Error("prediction width does not match class count");
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= num_classes) throw Error("label out of range");
    const std::size_t rank = rank_of(p, y);
    hit1 += rank == 0;
    hit5 += rank < 5;
    ++r.confusion[y][argmax(p)];
  }
  r.top1 = static_cast<double>(hit1) / static_cast<double>(r.count);
  r.top5 = static_cast<double>(hit5) / static_cast<double>(r.count);
  double total = 0;
  std::size_t with_pos = 0;
  std::vector<double> scores(labels.size());
  std::vector<bool> pos_vec(labels.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores[i] = probabilities[i][c];
      pos_vec[i] = static_cast<std::size_t>(labels[i]) == c;
    }
    const double ap = average_precision(scores, pos_vec);
    r.per_class_ap.push_back(ap);
    if (!std::isnan(ap)) {
      total += ap;
      ++with_pos;
    }
  }
  r.mean_ap = with_pos ? total / static_cast<double>(with_pos) : 0.0;
  return r;
}

/// "top-1: 97.50  top-5: 100.00  mAP: 96.21" (percentages, two decimals).
inline std::string format_report(const EvalReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "top-1: %.2f  top-5: %.2f  mAP: %.2f", 100 * r.top1, 100 * r.top5, 100 * r.mean_ap);
  return buf;
}

}  // namespace agnet
