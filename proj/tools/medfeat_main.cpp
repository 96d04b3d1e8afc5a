// medfeat command-line tool: run | ablate | hpo | transfer | drift | report | synth.

#include <CLI11.hpp>

#include <iostream>

#include "medfeat/cli.hpp"
#include "medfeat/error.hpp"

namespace {

using namespace medfeat;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "medfeat_out";
  std::string backend;
};

cli::RunConfig load(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required for this command");
  auto config = cli::load_config(g.config);
  cli::Overrides o;
  o.seed = g.seed;
  if (!g.backend.empty()) o.backend = cli::backend_from_string(g.backend);
  cli::apply(config, o);
  return config;
}

void print_summary(const cli::RunSummary& s) {
  std::cout << "baseline test AUC " << s.baseline_report.auc.mean << ", medfeat test AUC " << s.medfeat_report.auc.mean
            << " over " << s.runs.size() << " split(s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainability-driven, model-aware feature engineering for clinical tabular data"};
  app.require_subcommand(1);
  // Global flags may appear before or after the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Flat JSON config file");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--backend", g.backend, "Override the proposer backend (offline or http_chat)");

  std::string data;
  std::string schema;
  auto add_data = [&](CLI::App* cmd) {
    cmd->add_option("--data", data, "Table file")->required();
    cmd->add_option("--schema", schema, "Schema sidecar")->required();
  };

  auto* run = app.add_subcommand("run", "Run the feature-engineering loop over n_splits splits");
  add_data(run);

  std::string variant;
  auto* ablate = app.add_subcommand("ablate", "Run with one component removed");
  add_data(ablate);
  ablate->add_option("--variant", variant, "no_model_awareness | no_islands | no_importance")->required();

  std::optional<std::size_t> budget;
  auto* hpo = app.add_subcommand("hpo", "Random hyperparameter search for the configured learner");
  add_data(hpo);
  hpo->add_option("--budget", budget, "Trial budget (overrides hpo_budget)");

  std::string source;
  std::string name_map;
  auto* transfer = app.add_subcommand("transfer", "Apply exported transformations to another cohort");
  add_data(transfer);
  transfer->add_option("--transformations", source, "transformations.json from a run")->required();
  transfer->add_option("--name-map", name_map, "Column renames, old=new[,old=new...]");

  auto* drift = app.add_subcommand("drift", "Frozen engineered model vs periodic retraining across periods");
  add_data(drift);

  std::vector<std::string> runs;
  auto* report = app.add_subcommand("report", "Consolidate run directories");
  report->add_option("runs", runs, "Run directories")->required();

  synthdata::SynthSpec spec;
  std::string planted = "interaction";
  auto* synth = app.add_subcommand("synth", "Write a synthetic cohort with a planted signal");
  synth->add_option("--rows", spec.n_rows);
  synth->add_option("--planted", planted, "none | interaction | temporal_slope");
  synth->add_option("--noise-sd", spec.noise_sd);
  synth->add_option("--positive-rate", spec.positive_rate);
  synth->add_option("--missing-rate", spec.missing_rate);
  synth->add_option("--numeric", spec.n_static_numeric);
  synth->add_option("--categorical", spec.n_static_categorical);
  synth->add_option("--temporal-groups", spec.n_temporal_groups);
  synth->add_option("--group-length", spec.group_length);
  synth->add_option("--periods", spec.n_periods);
  synth->add_option("--drift", spec.drift);
  synth->add_option("--shift", spec.marginal_shift);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      print_summary(cli::cmd_run(load(g), data, schema, g.out));
    } else if (ablate->parsed()) {
      print_summary(cli::cmd_ablate(load(g), cli::ablation_from_string(variant), load_dataset(data, schema), g.out));
    } else if (hpo->parsed()) {
      auto config = load(g);
      if (budget) config.hpo_budget = *budget;
      const auto r = cli::cmd_hpo(config, load_dataset(data, schema), g.out);
      std::cout << "best validation AUC " << r.best_score << " after " << r.trials.size() << " trial(s)\n";
    } else if (transfer->parsed()) {
      const auto s = cli::cmd_transfer(load(g), source, load_dataset(data, schema), cli::parse_name_map(name_map), g.out);
      std::cout << "wrote transfer report for " << s.raw.size() << " split(s)\n";
    } else if (drift->parsed()) {
      const auto s = cli::cmd_drift(load(g), load_dataset(data, schema), g.out);
      std::cout << "wrote " << s.points.size() << " period(s)\n";
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(runs.begin(), runs.end());
      std::cout << cli::cmd_report(dirs, g.out);
    } else if (synth->parsed()) {
      spec.planted = synthdata::planted_from_string(planted);
      if (g.seed) spec.seed = *g.seed;
      cli::cmd_synth(spec, g.out);
      std::cout << "wrote " << (std::filesystem::path(g.out) / "data.csv").string() << "\n";
    }
  } catch (const medfeat::Error& e) {
    std::cerr << "medfeat: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
