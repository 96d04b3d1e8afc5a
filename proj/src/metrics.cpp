#include "medfeat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "medfeat/error.hpp"

namespace medfeat::metrics {

namespace {

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  const auto pos = std::count(labels.begin(), labels.end(), std::uint8_t{1});
  if (pos == 0 || static_cast<std::size_t>(pos) == labels.size()) throw DataError("both classes must be present");
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  const auto order = order_by_score(scores);
  // Count, for each tie block, positive-negative pairs ranked correctly.
  double negatives_below = 0.0;
  double concordant = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double pos = 0.0;
    double neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos : neg) += 1.0;
      ++j;
    }
    concordant += pos * negatives_below + 0.5 * pos * neg;
    negatives_below += neg;
    i = j;
  }
  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  return concordant / (n_pos * n_neg);
}

double youden_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  const auto order = order_by_score(scores);
  const auto n_pos = static_cast<std::int64_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  const auto n_neg = static_cast<std::int64_t>(labels.size()) - n_pos;

  // J = tp/n_pos - fp/n_neg is compared exactly as tp*n_neg - fp*n_pos.
  // Sweep candidates from +inf downwards; at each, positives/negatives with
  // score >= threshold are predicted positive.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::int64_t best_j = 0;  // J at +inf
  double best_t = inf;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::size_t k = order.size();
  while (k > 0) {
    std::size_t block_start = k - 1;
    const double value = scores[order[block_start]];
    while (block_start > 0 && scores[order[block_start - 1]] == value) --block_start;
    for (std::size_t m = block_start; m < k; ++m) ++(labels[order[m]] ? tp : fp);
    const double threshold = block_start == 0 ? -inf : 0.5 * (value + scores[order[block_start - 1]]);
    const std::int64_t j = tp * n_neg - fp * n_pos;
    if (j > best_j) {
      best_j = j;
      best_t = threshold;
    }
    k = block_start;
  }
  return best_t;
}

double f1_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i]) tp += 1.0;
    if (predicted && !labels[i]) fp += 1.0;
    if (!predicted && labels[i]) fn += 1.0;
  }
  // 2PR / (P + R) simplifies to 2TP / (2TP + FP + FN); zero when TP is zero.
  return tp > 0.0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  // Shifted by the first value so identical inputs give exactly zero spread.
  const double shift = values.front();
  double shifted_mean = 0.0;
  for (double v : values) shifted_mean += v - shift;
  shifted_mean /= n;
  s.mean = shift + shifted_mean;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - shift - shifted_mean) * (v - shift - shifted_mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

AggregateReport aggregate(std::span<const EvalReport> reports) {
  AggregateReport out;
  out.per_split.assign(reports.begin(), reports.end());
  std::vector<double> aucs;
  std::vector<double> f1s;
  for (const auto& r : reports) {
    aucs.push_back(r.auc);
    f1s.push_back(r.f1);
  }
  out.auc = summarize(aucs);
  out.f1 = summarize(f1s);
  return out;
}

double percent_improvement(double new_value, double base_value) { return (new_value - base_value) / base_value * 100.0; }

namespace {

nlohmann::json summary_json(const Summary& s) {
  nlohmann::json j;
  j["mean"] = s.mean;
  j["std"] = s.std ? nlohmann::json(*s.std) : nlohmann::json(nullptr);
  return j;
}

Summary summary_from(const nlohmann::json& j) {
  Summary s;
  s.mean = j.at("mean").get<double>();
  if (!j.at("std").is_null()) s.std = j["std"].get<double>();
  return s;
}

}  // namespace

std::string to_json(const AggregateReport& report) {
  nlohmann::json doc;
  auto splits = nlohmann::json::array();
  for (const auto& r : report.per_split) {
    // Thresholds may be infinite; JSON carries them as strings.
    nlohmann::json t = std::isfinite(r.threshold) ? nlohmann::json(r.threshold)
                                                   : nlohmann::json(r.threshold > 0 ? "inf" : "-inf");
    splits.push_back({{"auc", r.auc}, {"f1", r.f1}, {"threshold", t}});
  }
  doc["per_split"] = std::move(splits);
  doc["auc"] = summary_json(report.auc);
  doc["f1"] = summary_json(report.f1);
  return doc.dump(2) + "\n";
}

AggregateReport aggregate_from_json(std::string_view text) {
  AggregateReport out;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& r : doc.at("per_split")) {
      EvalReport e;
      e.auc = r.at("auc").get<double>();
      e.f1 = r.at("f1").get<double>();
      const auto& t = r.at("threshold");
      e.threshold = t.is_string() ? (t.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                    : -std::numeric_limits<double>::infinity())
                                  : t.get<double>();
      out.per_split.push_back(e);
    }
    out.auc = summary_from(doc.at("auc"));
    out.f1 = summary_from(doc.at("f1"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return out;
}

}  // namespace medfeat::metrics
