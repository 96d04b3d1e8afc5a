#pragma once

// Independent reference computations for the metric suite: quadratic pair
// enumeration for AUC and a direct scan over every candidate threshold.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "medfeat/random.hpp"

namespace medfeat::testing {

inline double brute_force_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double hits = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) hits += 1.0;
      if (scores[i] == scores[j]) hits += 0.5;
    }
  }
  return hits / pairs;
}

inline std::vector<double> threshold_candidates(const std::vector<double>& scores) {
  std::set<double> distinct(scores.begin(), scores.end());
  std::vector<double> sorted(distinct.begin(), distinct.end());
  std::vector<double> out{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) out.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  return out;
}

// J scaled by pos * neg so ties compare exactly.
inline long youden_j_scaled(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels, double t) {
  long tp = 0, fp = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] ? pos : neg) += 1;
    if (scores[i] >= t) (labels[i] ? tp : fp) += 1;
  }
  return tp * neg - fp * pos;
}

inline double exhaustive_youden(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double best_t = 0.0;
  long best_j = std::numeric_limits<long>::min();
  for (double t : threshold_candidates(scores)) {
    const long j = youden_j_scaled(scores, labels, t);
    if (j > best_j || (j == best_j && t > best_t)) {
      best_j = j;
      best_t = t;
    }
  }
  return best_t;
}

// F1 from a hand-counted confusion matrix, as the single rational
// 2TP / (2TP + FP + FN) so the double is correctly rounded.
inline double hand_f1(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels, double t) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool p = scores[i] >= t;
    tp += p && labels[i];
    fp += p && !labels[i];
    fn += !p && labels[i];
  }
  if (tp == 0) return 0.0;
  return static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
}

/// Random scores on a coarse grid (to force ties) with both classes present.
inline std::pair<std::vector<double>, std::vector<std::uint8_t>> random_instance(Rng& rng, std::size_t max_size) {
  const std::size_t n = 2 + rng.below(max_size - 1);
  std::vector<double> scores(n);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = static_cast<double>(rng.below(8)) / 8.0;
    labels[i] = rng.bernoulli(0.4) ? 1 : 0;
  }
  labels[0] = 1;
  labels[1] = 0;
  return {scores, labels};
}

}  // namespace medfeat::testing
