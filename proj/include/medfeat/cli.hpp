#pragma once

// Experiment harness behind the medfeat command-line tool. Every command is a
// library function so tests can drive it without spawning processes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medfeat/engine.hpp"
#include "medfeat/learners.hpp"
#include "medfeat/metrics.hpp"
#include "medfeat/proposer.hpp"
#include "medfeat/synthdata.hpp"

namespace medfeat::cli {

enum class Backend { offline, http_chat };

std::string_view to_string(Backend backend);
Backend backend_from_string(std::string_view text);

/// Parsed form of the flat JSON config file. The API key is never part of it;
/// the http backend reads it from the environment.
struct RunConfig {
  static constexpr int kVersion = 1;

  engine::EngineConfig engine;
  learners::LearnerSpec learner;
  std::size_t n_splits = 3;
  SplitFractions fractions;
  Backend backend = Backend::offline;
  proposer::HttpConfig http;
  std::size_t hpo_budget = 400;
  std::size_t hpo_patience = 50;
  std::string drift_column;
  std::optional<double> drift_cutoff;
};

/// Throws ConfigError naming the offending key for unknown keys, bad types or
/// a missing/unsupported config_version.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& config);

/// Overrides applied on top of the file by global flags.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<Backend> backend;
};

void apply(RunConfig& config, const Overrides& overrides);

std::unique_ptr<proposer::Proposer> make_proposer(const RunConfig& config);

struct RunSummary {
  std::vector<engine::EngineResult> runs;
  std::vector<metrics::EvalReport> baseline;
  metrics::AggregateReport medfeat_report;
  metrics::AggregateReport baseline_report;
};

/// One engine run per split seed (seed, seed + 1, ...), plus a baseline-only
/// evaluation on the same split. Writes split_<i>/ run directories, report.json
/// and splits.csv under `out`.
RunSummary cmd_run(const RunConfig& config, const Dataset& dataset, const std::filesystem::path& out);
RunSummary cmd_run(const RunConfig& config, const std::filesystem::path& data, const std::filesystem::path& schema,
                   const std::filesystem::path& out);

enum class Ablation { no_model_awareness, no_islands, no_importance };

std::string_view to_string(Ablation variant);
Ablation ablation_from_string(std::string_view text);

/// The config cmd_ablate runs with.
RunConfig ablated(RunConfig config, Ablation variant);
RunSummary cmd_ablate(const RunConfig& config, Ablation variant, const Dataset& dataset,
                      const std::filesystem::path& out);

/// Random search on split seed `config.engine.seed`; writes hpo.json.
learners::HpoResult cmd_hpo(const RunConfig& config, const Dataset& dataset, const std::filesystem::path& out);

struct TransferSummary {
  std::vector<metrics::EvalReport> raw;
  std::vector<metrics::EvalReport> transferred;
  std::vector<double> raw_val;
  std::vector<double> transferred_val;
};

/// Trains on the target with and without an exported transformation set
/// (re-fitted per split); writes transfer.json.
TransferSummary cmd_transfer(const RunConfig& config, const std::filesystem::path& exported, const Dataset& target,
                             const std::map<std::string, std::string>& name_map, const std::filesystem::path& out);

/// "a=b,c=d" -> {a: b, c: d}.
std::map<std::string, std::string> parse_name_map(std::string_view text);

struct DriftPoint {
  double period = 0.0;
  std::size_t rows = 0;
  /// Model trained once before the cutoff with engineered features.
  double frozen_with_features = 0.0;
  /// Model retrained on all earlier rows without engineered features.
  double retrained_without_features = 0.0;
};

struct DriftSummary {
  fdsl::TransformationSet sigma;
  std::vector<DriftPoint> points;
};

/// Feature engineering on rows with ordering column < cutoff, then one AUC
/// per later period for both scenarios. Writes drift.json and drift.csv.
DriftSummary cmd_drift(const RunConfig& config, const Dataset& dataset, const std::filesystem::path& out);

/// Consolidates run directories written by cmd_run into table.csv,
/// top10.csv and report.json under `out`.
std::string cmd_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out);

void cmd_synth(const synthdata::SynthSpec& spec, const std::filesystem::path& out);

}  // namespace medfeat::cli
