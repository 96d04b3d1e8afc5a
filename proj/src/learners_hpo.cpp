#include <cmath>

#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/learners.hpp"
#include "medfeat/metrics.hpp"
#include "medfeat/random.hpp"

namespace medfeat::learners {

Hyperparams sample_hyperparams(LearnerKind kind, std::uint64_t seed, std::size_t trial) {
  Rng rng(mix_seed(seed, fnv1a("hpo"), trial));
  Hyperparams p;
  if (kind == LearnerKind::logreg) {
    p["C"] = std::pow(10.0, rng.uniform(-4.0, 4.0));
    return p;
  }
  // Fixed draw order keeps configurations stable across releases.
  p["max_depth"] = static_cast<double>(rng.integer(2, 7));
  p["n_estimators"] = static_cast<double>(rng.integer(100, 2000));
  p["min_child_weight"] = static_cast<double>(rng.integer(10, 100));
  p["max_delta_step"] = static_cast<double>(rng.integer(0, 10));
  p["subsample"] = rng.uniform(0.5, 1.0);
  p["learning_rate"] = rng.uniform(0.01, 0.5);
  p["colsample_bylevel"] = rng.uniform(0.5, 1.0);
  p["colsample_bytree"] = rng.uniform(0.3, 1.0);
  p["gamma"] = rng.uniform(0.0, 5.0);
  p["reg_alpha"] = rng.uniform(0.5, 10.0);
  p["reg_lambda"] = rng.uniform(2.0, 20.0);
  return p;
}

HpoResult hpo_search(LearnerKind kind, const Dataset& dataset, const SplitIndices& split, const HpoOptions& options) {
  if (options.budget < 1) throw ConfigError("hpo budget must be at least 1");
  HpoResult result;
  std::vector<std::uint8_t> val_labels;
  for (auto r : split.val) val_labels.push_back(dataset.labels()[r]);

  bool have_best = false;
  std::size_t stale = 0;
  for (std::size_t trial = 0; trial < options.budget; ++trial) {
    HpoTrial record;
    record.params = sample_hyperparams(kind, options.seed, trial);
    try {
      const LearnerSpec spec{kind, record.params, mix_seed(options.seed, trial)};
      const auto model = train(dataset, split.train, spec);
      record.score = metrics::auc(model->predict_scores(dataset, split.val), val_labels);
    } catch (const Error& e) {
      record.error = e.what();
    }
    bool improved = false;
    if (record.score) {
      if (!have_best || *record.score > result.best_score + options.min_delta) improved = true;
      if (!have_best || *record.score > result.best_score) {
        result.best_score = *record.score;
        result.best_params = record.params;
        have_best = true;
      }
    }
    result.trials.push_back(std::move(record));
    stale = improved ? 0 : stale + 1;
    if (options.patience > 0 && stale >= options.patience) break;
  }
  if (!have_best) throw TrainError("every hpo trial failed");
  return result;
}

std::string to_json(const HpoResult& result, LearnerKind kind) {
  nlohmann::json doc;
  doc["kind"] = std::string(to_string(kind));
  doc["best_params"] = result.best_params;
  doc["best_score"] = result.best_score;
  auto trials = nlohmann::json::array();
  for (const auto& t : result.trials) {
    nlohmann::json j{{"params", t.params}};
    j["score"] = t.score ? nlohmann::json(*t.score) : nlohmann::json(nullptr);
    if (!t.error.empty()) j["error"] = t.error;
    trials.push_back(std::move(j));
  }
  doc["trials"] = std::move(trials);
  return doc.dump(1) + "\n";
}

}  // namespace medfeat::learners
