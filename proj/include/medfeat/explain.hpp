#pragma once

// Grouped feature relevance on the validation split and the sampling
// distribution derived from it.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medfeat/datamodel.hpp"
#include "medfeat/fdsl.hpp"
#include "medfeat/learners.hpp"

namespace medfeat::explain {

struct ImportanceEntry {
  double raw = 0.0;
  double normalized = 0.0;
  int rank = 0;

  bool operator==(const ImportanceEntry&) const = default;
};

struct ImportanceVector {
  std::map<std::string, ImportanceEntry> entries;

  /// Group ids by rank (1 first).
  std::vector<std::string> ranked() const;
  bool operator==(const ImportanceVector&) const = default;
};

/// Builds a vector from raw scores: normalized = raw / sum (uniform when the
/// sum is zero); ranks by descending raw score, ties by group name.
ImportanceVector normalize(const std::map<std::string, double>& raw);
ImportanceVector normalize(const ImportanceVector& importance);

class Explainer {
 public:
  virtual ~Explainer() = default;
  virtual ImportanceVector explain(const learners::Model& model, const Dataset& dataset,
                                   std::span<const std::size_t> val_rows, std::span<const FeatureGroup> groups,
                                   std::uint64_t seed) const = 0;
};

/// raw(g) = mean over repeats of max(0, AUC - AUC with g's member columns jointly row-permuted).
ImportanceVector grouped_permutation_importance(const learners::Model& model, const Dataset& dataset,
                                                std::span<const std::size_t> val_rows,
                                                std::span<const FeatureGroup> groups, int repeats, std::uint64_t seed);

class PermutationExplainer final : public Explainer {
 public:
  explicit PermutationExplainer(int repeats = 5);
  ImportanceVector explain(const learners::Model& model, const Dataset& dataset, std::span<const std::size_t> val_rows,
                           std::span<const FeatureGroup> groups, std::uint64_t seed) const override;

 private:
  int repeats_;
};

struct ReportEntry {
  int rank = 0;
  std::string group;
  double raw = 0.0;
  double normalized = 0.0;
  bool generated = false;
};

struct ImportanceReport {
  std::vector<ReportEntry> entries;  // sorted by rank

  /// Fraction of the first min(k, size) entries that are generated features.
  double top_k_generated_fraction(std::size_t k = 10) const;
};

ImportanceReport importance_report(const ImportanceVector& importance, const fdsl::TransformationSet& sigma);

std::string to_json(const ImportanceVector& importance);
ImportanceVector importance_from_json(std::string_view text);
std::string to_json(const ImportanceReport& report);
ImportanceReport report_from_json(std::string_view text);

}  // namespace medfeat::explain
