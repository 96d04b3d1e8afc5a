#pragma once

// The iterative feature-engineering loop: sample islands from the current
// importance, ask the proposer for one program per island, score each valid
// candidate on validation, keep the best one if it clears the tolerance, then
// retrain and refresh importance. The test partition is read once at the end.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medfeat/datamodel.hpp"
#include "medfeat/explain.hpp"
#include "medfeat/fdsl.hpp"
#include "medfeat/islands.hpp"
#include "medfeat/learners.hpp"
#include "medfeat/metrics.hpp"
#include "medfeat/proposer.hpp"

namespace medfeat::engine {

enum class AcceptanceMode { require_improvement, allow_slack };

std::string_view to_string(AcceptanceMode mode);
AcceptanceMode acceptance_mode_from_string(std::string_view text);

struct EngineConfig {
  std::size_t iterations = 3;
  std::size_t islands = 2;
  std::size_t island_size = 3;
  double beta = 0.01;
  AcceptanceMode acceptance_mode = AcceptanceMode::require_improvement;
  std::size_t retries = 3;
  std::uint64_t seed = 0;
  /// Passed to the proposer with every request (drives offline template rotation).
  std::uint64_t proposer_seed = 0;
  /// One island holding every feature group, every iteration.
  bool full_island = false;
  /// Draw islands uniformly instead of by importance.
  bool uniform_sampling = false;
  int importance_repeats = 5;
  std::string task_description;
  proposer::PromptOptions prompt;

  /// Throws ConfigError.
  void validate() const;
};

/// require_improvement: new >= base + beta. allow_slack: new >= base - beta.
bool accept_rule(double new_metric, double base_metric, double beta, AcceptanceMode mode);

struct Attempt {
  std::string program;
  std::string name;
  bool valid = false;
  /// "ok" or the failure cause, e.g. "parse_error", "zero_variance", "name_collision".
  std::string reason;
  std::optional<double> metric;

  bool operator==(const Attempt&) const = default;
};

struct CandidateResult {
  Attempt attempt;
  /// Present only for valid candidates.
  std::optional<fdsl::FittedTransformation> transformation;
  std::shared_ptr<const learners::Model> model;
};

/// Parses, fits on training rows of `current`, validates, trains a fresh
/// learner on `current` plus the candidate and scores validation. Never throws
/// for candidate-level failures; they come back as invalid results.
CandidateResult evaluate_candidate(const std::string& program_text, const Dataset& current, const SplitIndices& split,
                                   const learners::Learner& learner);

struct IslandLog {
  std::size_t index = 0;
  std::vector<std::string> groups;
  std::vector<Attempt> attempts;

  bool operator==(const IslandLog&) const = default;
};

struct IterationLog {
  std::size_t iteration = 0;
  double baseline_before = 0.0;
  std::vector<IslandLog> islands;
  std::optional<std::size_t> winner;
  std::optional<double> winner_metric;
  bool accepted = false;
  double baseline_after = 0.0;

  bool operator==(const IterationLog&) const = default;
};

/// Partition reads made by the engine through its instrumented accessor.
struct DataAccessLog {
  std::size_t train_reads = 0;
  std::size_t val_reads = 0;
  std::size_t test_reads = 0;

  bool operator==(const DataAccessLog&) const = default;
};

struct EngineResult {
  fdsl::TransformationSet sigma;
  std::shared_ptr<const learners::Model> model;
  double initial_val_metric = 0.0;
  double final_val_metric = 0.0;
  std::vector<IterationLog> trajectory;
  proposer::MemoryBank memory;
  /// Importance of the final model.
  explain::ImportanceVector importance;
  /// Final model on test at the validation Youden threshold.
  metrics::EvalReport test;
  DataAccessLog access;
};

EngineResult run(const EngineConfig& config, const Dataset& dataset, const SplitIndices& split,
                 const learners::Learner& learner, const explain::Explainer& explainer,
                 proposer::Proposer& proposer);

/// Baseline-only counterpart of run: train, Youden threshold on validation, one test evaluation.
metrics::EvalReport evaluate_baseline(const Dataset& dataset, const SplitIndices& split, const learners::Learner& learner);

/// Validation AUC of a model trained on `dataset` augmented with `sigma`.
double validation_metric(const Dataset& dataset, const fdsl::TransformationSet& sigma, const SplitIndices& split,
                         const learners::Learner& learner);

std::string trajectory_to_json(std::span<const IterationLog> trajectory);
std::string config_to_json(const EngineConfig& config);

/// Writes config.json, trajectory.json, memory.json, transformations.json and report.json.
void write_run_directory(const EngineResult& result, const EngineConfig& config, const std::filesystem::path& dir);

/// Program texts and provenance only; statistics are re-fitted on import.
void export_transformations(const EngineResult& result, const std::filesystem::path& path);
void export_transformations(const fdsl::TransformationSet& sigma, const std::filesystem::path& path);

/// Re-parses an exported set, renames columns and groups through `name_map`,
/// and fits every program in order on `train_rows` of `dataset`. Throws
/// FitError naming every reference that does not resolve.
fdsl::TransformationSet import_transformations(const std::filesystem::path& path, const Dataset& dataset,
                                               std::span<const std::size_t> train_rows,
                                               const std::map<std::string, std::string>& name_map = {});

}  // namespace medfeat::engine
