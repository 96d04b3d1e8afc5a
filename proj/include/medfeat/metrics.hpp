#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace medfeat::metrics {

/// Mann-Whitney AUC with ties counted as one half. Throws DataError on single-class labels.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Threshold maximizing TPR - FPR. Candidates are the midpoints between
/// adjacent distinct scores plus -inf and +inf; ties go to the larger threshold.
/// Predictions are positive when score >= threshold.
double youden_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// F1 of the rule score >= threshold; 0 when precision + recall is 0.
double f1_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold);

struct EvalReport {
  double auc = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;
};

struct Summary {
  double mean = 0.0;
  /// Sample standard deviation; absent for a single value.
  std::optional<double> std;
};

struct AggregateReport {
  std::vector<EvalReport> per_split;
  Summary auc;
  Summary f1;
};

Summary summarize(std::span<const double> values);
AggregateReport aggregate(std::span<const EvalReport> reports);

/// (new - base) / base * 100.
double percent_improvement(double new_value, double base_value);

std::string to_json(const AggregateReport& report);
AggregateReport aggregate_from_json(std::string_view text);

}  // namespace medfeat::metrics
