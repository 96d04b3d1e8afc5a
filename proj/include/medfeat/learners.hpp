#pragma once

// Downstream learners: L2-regularized class-balanced logistic regression and
// histogram gradient-boosted trees with native missing-value handling, plus a
// seeded random-search hyperparameter harness.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medfeat/datamodel.hpp"

namespace medfeat::learners {

enum class LearnerKind { logreg, gbdt };

std::string_view to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(std::string_view text);

using Hyperparams = std::map<std::string, double>;

struct LearnerSpec {
  LearnerKind kind = LearnerKind::logreg;
  Hyperparams hyperparams;
  std::uint64_t seed = 0;
};

/// Documented parameter names per kind with their untuned defaults.
const Hyperparams& default_hyperparams(LearnerKind kind);
/// Throws ConfigError on unknown keys or out-of-domain values.
void validate_spec(const LearnerSpec& spec);
/// Defaults overlaid with the spec's values.
Hyperparams resolved_hyperparams(const LearnerSpec& spec);

class Model {
 public:
  virtual ~Model() = default;
  /// Positive-class scores in [0, 1], one per requested row.
  virtual std::vector<double> predict_scores(const Dataset& dataset, std::span<const std::size_t> rows) const = 0;
  /// Dataset columns the model reads.
  virtual const std::vector<std::string>& input_columns() const = 0;
};

class Learner {
 public:
  virtual ~Learner() = default;
  virtual LearnerKind kind() const = 0;
  virtual std::shared_ptr<const Model> train(const Dataset& dataset, std::span<const std::size_t> train_rows) const = 0;
};

/// Train-fitted mapping from dataset columns to a dense design matrix.
struct Encoder {
  struct Source {
    std::string column;
    bool categorical = false;
    /// Sorted training vocabulary; the design block has one slot per token plus an unseen slot.
    std::vector<std::string> vocabulary;
  };

  std::vector<Source> sources;
  std::vector<std::string> design_names;
  /// Logistic regression only: train medians and standardization.
  bool standardize = false;
  std::vector<double> medians;
  std::vector<double> means;
  std::vector<double> scales;

  static Encoder fit(const Dataset& dataset, std::span<const std::size_t> train_rows, bool standardize);
  /// Row-major design matrix; NaN marks missing when not standardizing.
  std::vector<double> transform(const Dataset& dataset, std::span<const std::size_t> rows) const;
  std::size_t width() const { return design_names.size(); }
};

struct TreeNode {
  bool leaf = true;
  double value = 0.0;
  std::uint32_t feature = 0;
  double threshold = 0.0;  // go left when x < threshold
  bool default_left = true;
  std::int32_t left = -1;
  std::int32_t right = -1;

  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> row) const;
  bool operator==(const Tree&) const = default;
};

class TrainedModel final : public Model {
 public:
  LearnerKind kind = LearnerKind::logreg;
  Hyperparams hyperparams;
  Encoder encoder;
  std::vector<std::string> columns;

  // logreg
  std::vector<double> coefficients;
  double intercept = 0.0;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;

  // gbdt
  double base_margin = 0.0;
  std::vector<Tree> trees;
  /// Weighted mean logistic loss on the training rows after each round (index 0 = before any tree).
  std::vector<double> training_loss;

  std::vector<double> predict_scores(const Dataset& dataset, std::span<const std::size_t> rows) const override;
  const std::vector<std::string>& input_columns() const override { return columns; }

  std::vector<double> margins(const Dataset& dataset, std::span<const std::size_t> rows) const;
};

std::shared_ptr<const TrainedModel> train_logreg(const Dataset& dataset, std::span<const std::size_t> train_rows,
                                                 const LearnerSpec& spec);
std::shared_ptr<const TrainedModel> train_gbdt(const Dataset& dataset, std::span<const std::size_t> train_rows,
                                               const LearnerSpec& spec);
std::shared_ptr<const TrainedModel> train(const Dataset& dataset, std::span<const std::size_t> train_rows,
                                          const LearnerSpec& spec);

std::vector<double> predict_scores(const Model& model, const Dataset& dataset, std::span<const std::size_t> rows);

/// Learner backed by a fixed spec.
class SpecLearner final : public Learner {
 public:
  explicit SpecLearner(LearnerSpec spec);
  LearnerKind kind() const override { return spec_.kind; }
  std::shared_ptr<const Model> train(const Dataset& dataset, std::span<const std::size_t> train_rows) const override;
  const LearnerSpec& spec() const { return spec_; }

 private:
  LearnerSpec spec_;
};

std::string model_to_json(const TrainedModel& model);
std::shared_ptr<const TrainedModel> model_from_json(std::string_view text);

/// Balanced class-weighted, L2-penalized logistic objective over a row-major
/// design matrix, scaled by 1/N:
///   f(w, b) = (1/N) sum_i c_i [log(1 + e^{z_i}) - y_i z_i] + |w|^2 / (2 C N),  z = Xw + b
/// with c_i = N / (2 N_{y_i}). Parameter layout is (w_1..w_d, b).
struct LogisticObjective {
  std::span<const double> design;
  std::span<const std::uint8_t> labels;
  std::size_t width = 0;
  double c = 1.0;
  std::vector<double> row_weights;

  LogisticObjective(std::span<const double> design, std::span<const std::uint8_t> labels, std::size_t width, double c);
  double value(std::span<const double> params) const;
  double value_and_gradient(std::span<const double> params, std::span<double> gradient) const;
};

struct LbfgsResult {
  std::vector<double> params;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
};

/// Deterministic L-BFGS (history 10, backtracking Armijo line search) stopping
/// when the gradient's Euclidean norm drops below `tolerance`.
LbfgsResult minimize_lbfgs(const LogisticObjective& objective, std::vector<double> start, double tolerance,
                           std::size_t max_iterations);

// --- Hyperparameter search --------------------------------------------------

struct HpoTrial {
  Hyperparams params;
  std::optional<double> score;
  std::string error;
};

struct HpoResult {
  Hyperparams best_params;
  double best_score = 0.0;
  std::vector<HpoTrial> trials;
};

struct HpoOptions {
  std::size_t budget = 400;
  std::uint64_t seed = 0;
  /// Stop after this many consecutive trials without improvement above min_delta.
  std::size_t patience = 50;
  double min_delta = 1e-4;
};

/// Draws one configuration uniformly from the search space of `kind`.
Hyperparams sample_hyperparams(LearnerKind kind, std::uint64_t seed, std::size_t trial);

/// Random search maximizing validation AUC. Training is on split.train, scoring on split.val.
HpoResult hpo_search(LearnerKind kind, const Dataset& dataset, const SplitIndices& split, const HpoOptions& options);

std::string to_json(const HpoResult& result, LearnerKind kind);

}  // namespace medfeat::learners
