#include "medfeat/engine.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/random.hpp"
#include "medfeat/text.hpp"

namespace medfeat::engine {

namespace {

// Every partition read in the engine goes through here so a run can prove it
// touched the test rows exactly once.
class Partitions {
 public:
  Partitions(const SplitIndices& split, DataAccessLog& log) : split_(split), log_(log) {}
  std::span<const std::size_t> train() {
    ++log_.train_reads;
    return split_.train;
  }
  std::span<const std::size_t> val() {
    ++log_.val_reads;
    return split_.val;
  }
  std::span<const std::size_t> test() {
    ++log_.test_reads;
    return split_.test;
  }

 private:
  const SplitIndices& split_;
  DataAccessLog& log_;
};

std::vector<std::uint8_t> labels_at(const Dataset& d, std::span<const std::size_t> rows) {
  std::vector<std::uint8_t> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(d.labels()[r]);
  return out;
}

double val_auc(const learners::Model& model, const Dataset& d, std::span<const std::size_t> val) {
  return metrics::auc(model.predict_scores(d, val), labels_at(d, val));
}

void require_both_classes(const Dataset& d, std::span<const std::size_t> rows, const char* part) {
  bool pos = false;
  bool neg = false;
  for (auto r : rows) (d.labels()[r] ? pos : neg) = true;
  if (!pos || !neg) throw DataError(std::string(part) + " partition must contain both classes");
}

CandidateResult evaluate(const std::string& text, const Dataset& current, Partitions& parts,
                         const learners::Learner& learner) {
  CandidateResult out;
  out.attempt.program = text;
  auto fail = [&](std::string reason) {
    out.attempt.reason = std::move(reason);
    return out;
  };
  fdsl::Program program;
  try {
    program = fdsl::parse(text);
  } catch (const ParseError&) {
    return fail("parse_error");
  }
  out.attempt.name = program.name;
  if (current.find(program.name) || current.label_schema().name == program.name) return fail("name_collision");

  const auto train = parts.train();
  fdsl::FittedTransformation fitted;
  try {
    fitted = fdsl::fit(program, current, train);
  } catch (const FitError&) {
    return fail("fit_error");
  }
  const auto validity = fdsl::validate(fitted, current, train);
  if (!validity.valid) return fail(std::string(fdsl::to_string(validity.reason)));

  Dataset augmented = augment(current, {fitted});
  try {
    out.model = learner.train(augmented, parts.train());
    out.attempt.metric = val_auc(*out.model, augmented, parts.val());
  } catch (const TrainError&) {
    out.model.reset();
    return fail("train_error");
  }
  out.attempt.valid = true;
  out.attempt.reason = "ok";
  out.transformation = std::move(fitted);
  return out;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

std::string_view to_string(AcceptanceMode mode) {
  return mode == AcceptanceMode::require_improvement ? "require_improvement" : "allow_slack";
}

AcceptanceMode acceptance_mode_from_string(std::string_view text) {
  if (text == "require_improvement") return AcceptanceMode::require_improvement;
  if (text == "allow_slack") return AcceptanceMode::allow_slack;
  throw ConfigError("unknown acceptance mode '" + std::string(text) + "'");
}

void EngineConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (islands < 1) throw ConfigError("islands must be at least 1");
  if (island_size < 1) throw ConfigError("island_size must be at least 1");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (retries < 1) throw ConfigError("retries must be at least 1");
  if (importance_repeats < 1) throw ConfigError("importance_repeats must be at least 1");
}

bool accept_rule(double new_metric, double base_metric, double beta, AcceptanceMode mode) {
  return mode == AcceptanceMode::require_improvement ? new_metric >= base_metric + beta : new_metric >= base_metric - beta;
}

CandidateResult evaluate_candidate(const std::string& program_text, const Dataset& current, const SplitIndices& split,
                                   const learners::Learner& learner) {
  DataAccessLog log;
  Partitions parts(split, log);
  return evaluate(program_text, current, parts, learner);
}

EngineResult run(const EngineConfig& config, const Dataset& dataset, const SplitIndices& split,
                 const learners::Learner& learner, const explain::Explainer& explainer,
                 proposer::Proposer& proposer) {
  config.validate();
  require_both_classes(dataset, split.train, "train");
  require_both_classes(dataset, split.val, "validation");

  EngineResult result;
  Partitions parts(split, result.access);
  Dataset current = dataset;
  result.model = learner.train(current, parts.train());
  double base = val_auc(*result.model, current, parts.val());
  result.initial_val_metric = base;
  auto refresh_importance = [&](std::size_t t) {
    const auto groups = feature_groups(current);
    result.importance =
        explainer.explain(*result.model, current, parts.val(), groups, mix_seed(config.seed, fnv1a("explain"), t));
  };
  refresh_importance(0);

  for (std::size_t t = 1; t <= config.iterations; ++t) {
    IterationLog log;
    log.iteration = t;
    log.baseline_before = base;
    const auto groups = feature_groups(current);
    const std::size_t m = std::min(config.island_size, groups.size());
    std::vector<islands::Island> drawn;
    if (config.full_island) {
      drawn.push_back(islands::make_island(groups, t, 0));
    } else if (config.uniform_sampling) {
      drawn = islands::sample_islands_uniform(groups, config.islands, m, mix_seed(config.seed, fnv1a("islands")), t);
    } else {
      drawn = islands::sample_islands(result.importance, groups, config.islands, m,
                                      mix_seed(config.seed, fnv1a("islands")), t);
    }
    const auto schema = current.schema();

    std::vector<std::optional<CandidateResult>> winners(drawn.size());
    for (std::size_t k = 0; k < drawn.size(); ++k) {
      const auto& island = drawn[k];
      IslandLog island_log;
      island_log.index = k;
      for (const auto& g : island.groups) island_log.groups.push_back(g.group_id);
      proposer::MemoryBank scratch = result.memory;
      for (std::size_t attempt = 0; attempt < config.retries; ++attempt) {
        const auto prompt = proposer::build_prompt(island, result.importance, scratch, learner.kind(),
                                                   config.task_description, schema.columns, config.prompt);
        std::string text;
        try {
          text = proposer.propose({prompt, island, scratch, learner.kind(), schema.columns, config.proposer_seed});
        } catch (const IslandExhausted&) {
          island_log.attempts.push_back({"", "", false, "island_exhausted", std::nullopt});
          break;
        } catch (const GenerationFailure&) {
          island_log.attempts.push_back({"", "", false, "generation_failure", std::nullopt});
          continue;
        }
        auto candidate = evaluate(text, current, parts, learner);
        island_log.attempts.push_back(candidate.attempt);
        if (candidate.attempt.valid) {
          winners[k] = std::move(candidate);
          break;
        }
        scratch.record_rejected({text, candidate.attempt.name, "", proposer::RejectReason::invalid,
                                 candidate.attempt.reason, std::nullopt});
      }
      log.islands.push_back(std::move(island_log));
    }

    // Winner: highest validation metric, lower island index on ties.
    for (std::size_t k = 0; k < winners.size(); ++k) {
      if (!winners[k]) continue;
      if (!log.winner || *winners[k]->attempt.metric > *log.winner_metric) {
        log.winner = k;
        log.winner_metric = winners[k]->attempt.metric;
      }
    }
    log.accepted = log.winner && accept_rule(*log.winner_metric, base, config.beta, config.acceptance_mode);

    // Memory update, island order then attempt order.
    for (std::size_t k = 0; k < drawn.size(); ++k) {
      for (const auto& a : log.islands[k].attempts) {
        if (a.program.empty()) continue;
        std::string rationale;
        if (a.valid) rationale = winners[k]->transformation->program.rationale;
        if (a.valid && log.accepted && k == *log.winner) {
          result.memory.record_accepted({a.program, a.name, rationale, *a.metric - base});
        } else if (a.valid) {
          result.memory.record_rejected(
              {a.program, a.name, rationale, proposer::RejectReason::no_improvement, "", *a.metric - base});
        } else {
          result.memory.record_rejected({a.program, a.name, "", proposer::RejectReason::invalid, a.reason, std::nullopt});
        }
      }
    }

    if (log.accepted) {
      auto& win = *winners[*log.winner];
      win.transformation->provenance = fdsl::Provenance{static_cast<int>(t), static_cast<int>(*log.winner),
                                                        proposer.name()};
      result.sigma.push_back(*win.transformation);
      current = augment(current, {*win.transformation});
      result.model = win.model;
      base = *log.winner_metric;
      refresh_importance(t);
    }
    log.baseline_after = base;
    result.trajectory.push_back(std::move(log));
  }

  result.final_val_metric = base;
  const auto val = parts.val();
  result.test.threshold = metrics::youden_threshold(result.model->predict_scores(current, val), labels_at(current, val));
  const auto test = parts.test();
  const auto scores = result.model->predict_scores(current, test);
  const auto labels = labels_at(current, test);
  result.test.auc = metrics::auc(scores, labels);
  result.test.f1 = metrics::f1_at(scores, labels, result.test.threshold);
  return result;
}

metrics::EvalReport evaluate_baseline(const Dataset& dataset, const SplitIndices& split, const learners::Learner& learner) {
  const auto model = learner.train(dataset, split.train);
  metrics::EvalReport out;
  out.threshold = metrics::youden_threshold(model->predict_scores(dataset, split.val), labels_at(dataset, split.val));
  const auto scores = model->predict_scores(dataset, split.test);
  const auto labels = labels_at(dataset, split.test);
  out.auc = metrics::auc(scores, labels);
  out.f1 = metrics::f1_at(scores, labels, out.threshold);
  return out;
}

double validation_metric(const Dataset& dataset, const fdsl::TransformationSet& sigma, const SplitIndices& split,
                         const learners::Learner& learner) {
  const Dataset augmented = augment(dataset, sigma);
  return val_auc(*learner.train(augmented, split.train), augmented, split.val);
}

std::string trajectory_to_json(std::span<const IterationLog> trajectory) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& it : trajectory) {
    nlohmann::json islands = nlohmann::json::array();
    for (const auto& island : it.islands) {
      nlohmann::json attempts = nlohmann::json::array();
      for (const auto& a : island.attempts) {
        attempts.push_back({{"program", a.program},
                            {"name", a.name},
                            {"valid", a.valid},
                            {"reason", a.reason},
                            {"metric", optional_json(a.metric)}});
      }
      islands.push_back({{"index", island.index}, {"groups", island.groups}, {"attempts", attempts}});
    }
    out.push_back({{"iteration", it.iteration},
                   {"baseline_before", it.baseline_before},
                   {"islands", islands},
                   {"winner", it.winner ? nlohmann::json(*it.winner) : nlohmann::json()},
                   {"winner_metric", optional_json(it.winner_metric)},
                   {"accepted", it.accepted},
                   {"baseline_after", it.baseline_after}});
  }
  return out.dump(1) + "\n";
}

std::string config_to_json(const EngineConfig& c) {
  const nlohmann::json out{{"iterations", c.iterations},
                           {"islands", c.islands},
                           {"island_size", c.island_size},
                           {"beta", c.beta},
                           {"acceptance_mode", std::string(to_string(c.acceptance_mode))},
                           {"retries", c.retries},
                           {"seed", c.seed},
                           {"proposer_seed", c.proposer_seed},
                           {"full_island", c.full_island},
                           {"uniform_sampling", c.uniform_sampling},
                           {"importance_repeats", c.importance_repeats},
                           {"task_description", c.task_description},
                           {"model_awareness", c.prompt.model_awareness},
                           {"show_importance", c.prompt.show_importance},
                           {"memory_cap", c.prompt.memory_cap},
                           {"max_prompt_chars", c.prompt.max_chars}};
  return out.dump(1) + "\n";
}

void write_run_directory(const EngineResult& result, const EngineConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "config.json", config_to_json(config));
  write_file(dir / "trajectory.json", trajectory_to_json(result.trajectory));
  proposer::save_memory(result.memory, dir / "memory.json");
  export_transformations(result, dir / "transformations.json");
  const auto importance = explain::importance_report(result.importance, result.sigma);
  const nlohmann::json report{{"initial_val_auc", result.initial_val_metric},
                              {"final_val_auc", result.final_val_metric},
                              {"accepted", result.sigma.size()},
                              {"test",
                               {{"auc", result.test.auc},
                                {"f1", result.test.f1},
                                {"threshold", std::isfinite(result.test.threshold)
                                                  ? nlohmann::json(result.test.threshold)
                                                  : nlohmann::json(result.test.threshold > 0 ? "inf" : "-inf")}}},
                              {"importance", nlohmann::json::parse(explain::to_json(importance))}};
  write_file(dir / "report.json", report.dump(1) + "\n");
}

void export_transformations(const EngineResult& result, const std::filesystem::path& path) {
  export_transformations(result.sigma, path);
}

void export_transformations(const fdsl::TransformationSet& sigma, const std::filesystem::path& path) {
  fdsl::save_transformations(sigma, path, false);
}

fdsl::TransformationSet import_transformations(const std::filesystem::path& path, const Dataset& dataset,
                                               std::span<const std::size_t> train_rows,
                                               const std::map<std::string, std::string>& name_map) {
  const auto loaded = fdsl::load_transformations(path);
  const auto schema = dataset.schema();
  std::set<std::string> known;
  for (const auto& c : schema.columns) known.insert(c.name);
  std::vector<std::string> unresolved;
  std::vector<fdsl::Program> programs;
  for (const auto& t : loaded) {
    auto program = fdsl::rename(t.program, name_map);
    for (const auto& c : fdsl::referenced_columns(program.ast)) {
      if (!known.count(c) && std::find(unresolved.begin(), unresolved.end(), c) == unresolved.end()) unresolved.push_back(c);
    }
    for (const auto& g : fdsl::referenced_groups(program.ast)) {
      if (temporal_members(schema.columns, g).empty() &&
          std::find(unresolved.begin(), unresolved.end(), g) == unresolved.end()) {
        unresolved.push_back(g);
      }
    }
    known.insert(program.name);
    programs.push_back(std::move(program));
  }
  if (!unresolved.empty()) {
    std::string names;
    for (const auto& n : unresolved) names += (names.empty() ? "" : ", ") + n;
    throw FitError("unresolved references after name mapping: " + names);
  }
  auto fitted = fdsl::fit_all(programs, dataset, train_rows);
  for (std::size_t i = 0; i < fitted.size(); ++i) fitted[i].provenance = loaded[i].provenance;
  return fitted;
}

}  // namespace medfeat::engine
