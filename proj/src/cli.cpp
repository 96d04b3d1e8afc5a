#include "medfeat/cli.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/explain.hpp"
#include "medfeat/text.hpp"

namespace medfeat::cli {

namespace {

using nlohmann::json;

std::uint64_t as_uint(const json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0 && !v.is_number_unsigned())) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

json threshold_json(double t) { return std::isfinite(t) ? json(t) : json(t > 0 ? "inf" : "-inf"); }

json report_json(const metrics::EvalReport& r) {
  return {{"auc", r.auc}, {"f1", r.f1}, {"threshold", threshold_json(r.threshold)}};
}

std::vector<std::uint8_t> labels_at(const Dataset& d, std::span<const std::size_t> rows) {
  std::vector<std::uint8_t> out;
  for (auto r : rows) out.push_back(d.labels()[r]);
  return out;
}

bool both_classes(const Dataset& d, std::span<const std::size_t> rows) {
  bool pos = false;
  bool neg = false;
  for (auto r : rows) (d.labels()[r] ? pos : neg) = true;
  return pos && neg;
}

}  // namespace

std::string_view to_string(Backend backend) { return backend == Backend::offline ? "offline" : "http_chat"; }

Backend backend_from_string(std::string_view text) {
  if (text == "offline") return Backend::offline;
  if (text == "http_chat") return Backend::http_chat;
  throw ConfigError("unknown backend '" + std::string(text) + "'");
}

RunConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("config_version")) throw ConfigError("config key 'config_version' is required");
  if (as_uint(doc["config_version"], "config_version") != RunConfig::kVersion) {
    throw ConfigError("config key 'config_version' must be " + std::to_string(RunConfig::kVersion));
  }

  RunConfig c;
  auto& e = c.engine;
  using Setter = std::function<void(const json&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"config_version", [](const json&, const std::string&) {}},
      {"task_description", [&](const json& v, const std::string& k) { e.task_description = as_string(v, k); }},
      {"learner", [&](const json& v, const std::string& k) { c.learner.kind = learners::learner_kind_from_string(as_string(v, k)); }},
      {"learner_seed", [&](const json& v, const std::string& k) { c.learner.seed = as_uint(v, k); }},
      {"iterations", [&](const json& v, const std::string& k) { e.iterations = as_uint(v, k); }},
      {"islands", [&](const json& v, const std::string& k) { e.islands = as_uint(v, k); }},
      {"island_size", [&](const json& v, const std::string& k) { e.island_size = as_uint(v, k); }},
      {"beta", [&](const json& v, const std::string& k) { e.beta = as_double(v, k); }},
      {"acceptance_mode", [&](const json& v, const std::string& k) { e.acceptance_mode = engine::acceptance_mode_from_string(as_string(v, k)); }},
      {"retries", [&](const json& v, const std::string& k) { e.retries = as_uint(v, k); }},
      {"seed", [&](const json& v, const std::string& k) { e.seed = as_uint(v, k); }},
      {"proposer_seed", [&](const json& v, const std::string& k) { e.proposer_seed = as_uint(v, k); }},
      {"full_island", [&](const json& v, const std::string& k) { e.full_island = as_bool(v, k); }},
      {"uniform_sampling", [&](const json& v, const std::string& k) { e.uniform_sampling = as_bool(v, k); }},
      {"importance_repeats", [&](const json& v, const std::string& k) { e.importance_repeats = static_cast<int>(as_uint(v, k)); }},
      {"model_awareness", [&](const json& v, const std::string& k) { e.prompt.model_awareness = as_bool(v, k); }},
      {"show_importance", [&](const json& v, const std::string& k) { e.prompt.show_importance = as_bool(v, k); }},
      {"memory_cap", [&](const json& v, const std::string& k) { e.prompt.memory_cap = as_uint(v, k); }},
      {"max_prompt_chars", [&](const json& v, const std::string& k) { e.prompt.max_chars = as_uint(v, k); }},
      {"n_splits", [&](const json& v, const std::string& k) { c.n_splits = as_uint(v, k); }},
      {"split_train", [&](const json& v, const std::string& k) { c.fractions.train = as_double(v, k); }},
      {"split_val", [&](const json& v, const std::string& k) { c.fractions.val = as_double(v, k); }},
      {"split_test", [&](const json& v, const std::string& k) { c.fractions.test = as_double(v, k); }},
      {"backend", [&](const json& v, const std::string& k) { c.backend = backend_from_string(as_string(v, k)); }},
      {"endpoint", [&](const json& v, const std::string& k) { c.http.endpoint = as_string(v, k); }},
      {"model", [&](const json& v, const std::string& k) { c.http.model = as_string(v, k); }},
      {"temperature", [&](const json& v, const std::string& k) { c.http.temperature = as_double(v, k); }},
      {"timeout_seconds", [&](const json& v, const std::string& k) { c.http.timeout_seconds = as_double(v, k); }},
      {"max_retries", [&](const json& v, const std::string& k) { c.http.max_retries = static_cast<int>(as_uint(v, k)); }},
      {"backoff_seconds", [&](const json& v, const std::string& k) { c.http.backoff_seconds = as_double(v, k); }},
      {"hpo_budget", [&](const json& v, const std::string& k) { c.hpo_budget = as_uint(v, k); }},
      {"hpo_patience", [&](const json& v, const std::string& k) { c.hpo_patience = as_uint(v, k); }},
      {"drift_column", [&](const json& v, const std::string& k) { c.drift_column = as_string(v, k); }},
      {"drift_cutoff", [&](const json& v, const std::string& k) { c.drift_cutoff = as_double(v, k); }},
  };
  for (const auto& [key, value] : doc.items()) {
    if (key.rfind("hp_", 0) == 0 && key.size() > 3) {
      c.learner.hyperparams[key.substr(3)] = as_double(value, key);
      continue;
    }
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(value, key);
  }
  e.validate();
  learners::validate_spec(c.learner);
  if (c.n_splits < 1) throw ConfigError("config key 'n_splits' must be at least 1");
  if (c.backend == Backend::http_chat && c.http.endpoint.empty()) {
    throw ConfigError("config key 'endpoint' is required for the http_chat backend");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string config_to_json(const RunConfig& c) {
  const auto& e = c.engine;
  json doc{{"config_version", RunConfig::kVersion},
           {"task_description", e.task_description},
           {"learner", std::string(learners::to_string(c.learner.kind))},
           {"learner_seed", c.learner.seed},
           {"iterations", e.iterations},
           {"islands", e.islands},
           {"island_size", e.island_size},
           {"beta", e.beta},
           {"acceptance_mode", std::string(engine::to_string(e.acceptance_mode))},
           {"retries", e.retries},
           {"seed", e.seed},
           {"proposer_seed", e.proposer_seed},
           {"full_island", e.full_island},
           {"uniform_sampling", e.uniform_sampling},
           {"importance_repeats", e.importance_repeats},
           {"model_awareness", e.prompt.model_awareness},
           {"show_importance", e.prompt.show_importance},
           {"memory_cap", e.prompt.memory_cap},
           {"max_prompt_chars", e.prompt.max_chars},
           {"n_splits", c.n_splits},
           {"split_train", c.fractions.train},
           {"split_val", c.fractions.val},
           {"split_test", c.fractions.test},
           {"backend", std::string(to_string(c.backend))},
           {"hpo_budget", c.hpo_budget},
           {"hpo_patience", c.hpo_patience}};
  if (c.backend == Backend::http_chat) {
    doc["endpoint"] = c.http.endpoint;
    doc["model"] = c.http.model;
    doc["temperature"] = c.http.temperature;
    doc["timeout_seconds"] = c.http.timeout_seconds;
    doc["max_retries"] = c.http.max_retries;
    doc["backoff_seconds"] = c.http.backoff_seconds;
  }
  for (const auto& [name, value] : c.learner.hyperparams) doc["hp_" + name] = value;
  if (!c.drift_column.empty()) doc["drift_column"] = c.drift_column;
  if (c.drift_cutoff) doc["drift_cutoff"] = *c.drift_cutoff;
  return doc.dump(1) + "\n";
}

void apply(RunConfig& config, const Overrides& overrides) {
  if (overrides.seed) config.engine.seed = *overrides.seed;
  if (overrides.backend) config.backend = *overrides.backend;
  if (config.backend == Backend::http_chat && config.http.endpoint.empty()) {
    throw ConfigError("config key 'endpoint' is required for the http_chat backend");
  }
}

std::unique_ptr<proposer::Proposer> make_proposer(const RunConfig& config) {
  if (config.backend == Backend::http_chat) return std::make_unique<proposer::HttpChatProposer>(config.http);
  return std::make_unique<proposer::OfflineProposer>();
}

RunSummary cmd_run(const RunConfig& config, const Dataset& dataset, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  write_file(out / "config.json", config_to_json(config));
  const learners::SpecLearner learner(config.learner);
  const explain::PermutationExplainer explainer(config.engine.importance_repeats);
  RunSummary summary;
  std::string csv = "split,seed,baseline_auc,medfeat_auc,baseline_f1,medfeat_f1,accepted\n";
  for (std::size_t s = 0; s < config.n_splits; ++s) {
    engine::EngineConfig ec = config.engine;
    ec.seed = config.engine.seed + s;
    const auto split = stratified_split(dataset, config.fractions, ec.seed);
    auto proposer = make_proposer(config);
    auto result = engine::run(ec, dataset, split, learner, explainer, *proposer);
    engine::write_run_directory(result, ec, out / ("split_" + std::to_string(s)));
    const auto base = engine::evaluate_baseline(dataset, split, learner);
    csv += std::to_string(s) + "," + std::to_string(ec.seed) + "," + format_double(base.auc) + "," +
           format_double(result.test.auc) + "," + format_double(base.f1) + "," + format_double(result.test.f1) + "," +
           std::to_string(result.sigma.size()) + "\n";
    summary.baseline.push_back(base);
    summary.runs.push_back(std::move(result));
  }
  std::vector<metrics::EvalReport> tests;
  for (const auto& r : summary.runs) tests.push_back(r.test);
  summary.medfeat_report = metrics::aggregate(tests);
  summary.baseline_report = metrics::aggregate(summary.baseline);

  json accepted = json::array();
  for (const auto& r : summary.runs) accepted.push_back(r.sigma.size());
  const json report{
      {"learner", std::string(learners::to_string(config.learner.kind))},
      {"n_splits", config.n_splits},
      {"medfeat", json::parse(metrics::to_json(summary.medfeat_report))},
      {"baseline", json::parse(metrics::to_json(summary.baseline_report))},
      {"auc_improvement_percent",
       metrics::percent_improvement(summary.medfeat_report.auc.mean, summary.baseline_report.auc.mean)},
      {"f1_improvement_percent", summary.baseline_report.f1.mean > 0
                                     ? json(metrics::percent_improvement(summary.medfeat_report.f1.mean,
                                                                         summary.baseline_report.f1.mean))
                                     : json()},
      {"accepted_per_split", accepted}};
  write_file(out / "report.json", report.dump(1) + "\n");
  write_file(out / "splits.csv", csv);
  return summary;
}

RunSummary cmd_run(const RunConfig& config, const std::filesystem::path& data, const std::filesystem::path& schema,
                   const std::filesystem::path& out) {
  return cmd_run(config, load_dataset(data, schema), out);
}

std::string_view to_string(Ablation variant) {
  switch (variant) {
    case Ablation::no_model_awareness:
      return "no_model_awareness";
    case Ablation::no_islands:
      return "no_islands";
    case Ablation::no_importance:
      return "no_importance";
  }
  return "no_model_awareness";
}

Ablation ablation_from_string(std::string_view text) {
  for (auto v : {Ablation::no_model_awareness, Ablation::no_islands, Ablation::no_importance}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("unknown ablation variant '" + std::string(text) + "'");
}

RunConfig ablated(RunConfig config, Ablation variant) {
  switch (variant) {
    case Ablation::no_model_awareness:
      config.engine.prompt.model_awareness = false;
      break;
    case Ablation::no_islands:
      config.engine.full_island = true;
      config.engine.islands = 1;
      break;
    case Ablation::no_importance:
      config.engine.uniform_sampling = true;
      config.engine.prompt.show_importance = false;
      break;
  }
  return config;
}

RunSummary cmd_ablate(const RunConfig& config, Ablation variant, const Dataset& dataset,
                      const std::filesystem::path& out) {
  return cmd_run(ablated(config, variant), dataset, out);
}

learners::HpoResult cmd_hpo(const RunConfig& config, const Dataset& dataset, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  const auto split = stratified_split(dataset, config.fractions, config.engine.seed);
  learners::HpoOptions options;
  options.budget = config.hpo_budget;
  options.seed = config.engine.seed;
  options.patience = config.hpo_patience;
  auto result = learners::hpo_search(config.learner.kind, dataset, split, options);
  write_file(out / "hpo.json", learners::to_json(result, config.learner.kind));
  return result;
}

std::map<std::string, std::string> parse_name_map(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto pair = text.substr(start, end - start);
    const auto eq = pair.find('=');
    if (eq == std::string_view::npos || eq == 0 || eq + 1 == pair.size()) {
      throw ConfigError("name map entries look like old=new, got '" + std::string(pair) + "'");
    }
    out[std::string(pair.substr(0, eq))] = std::string(pair.substr(eq + 1));
    start = end + 1;
  }
  return out;
}

TransferSummary cmd_transfer(const RunConfig& config, const std::filesystem::path& exported, const Dataset& target,
                             const std::map<std::string, std::string>& name_map, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  const learners::SpecLearner learner(config.learner);
  TransferSummary summary;
  json splits = json::array();
  for (std::size_t s = 0; s < config.n_splits; ++s) {
    const auto split = stratified_split(target, config.fractions, config.engine.seed + s);
    const auto sigma = engine::import_transformations(exported, target, split.train, name_map);
    const Dataset augmented = augment(target, sigma);
    summary.raw.push_back(engine::evaluate_baseline(target, split, learner));
    summary.transferred.push_back(engine::evaluate_baseline(augmented, split, learner));
    summary.raw_val.push_back(engine::validation_metric(target, {}, split, learner));
    summary.transferred_val.push_back(engine::validation_metric(target, sigma, split, learner));
    splits.push_back({{"split", s},
                      {"raw", report_json(summary.raw.back())},
                      {"transferred", report_json(summary.transferred.back())},
                      {"raw_val_auc", summary.raw_val.back()},
                      {"transferred_val_auc", summary.transferred_val.back()}});
  }
  const auto raw = metrics::aggregate(summary.raw);
  const auto transferred = metrics::aggregate(summary.transferred);
  const json doc{{"splits", splits},
                 {"raw", json::parse(metrics::to_json(raw))},
                 {"transferred", json::parse(metrics::to_json(transferred))},
                 {"auc_improvement_percent", metrics::percent_improvement(transferred.auc.mean, raw.auc.mean)}};
  write_file(out / "transfer.json", doc.dump(1) + "\n");
  return summary;
}

DriftSummary cmd_drift(const RunConfig& config, const Dataset& dataset, const std::filesystem::path& out) {
  if (config.drift_column.empty()) throw ConfigError("config key 'drift_column' is required for drift");
  if (!config.drift_cutoff) throw ConfigError("config key 'drift_cutoff' is required for drift");
  const Column* order = dataset.find(config.drift_column);
  if (!order || order->is_categorical()) {
    throw DataError("ordering column '" + config.drift_column + "' is missing or not numeric");
  }
  const double cutoff = *config.drift_cutoff;
  const std::vector<std::optional<double>> when = order->numbers;
  const Dataset features = dataset.without_column(config.drift_column);

  std::vector<std::size_t> before;
  std::set<double> periods;
  for (std::size_t i = 0; i < when.size(); ++i) {
    if (!when[i]) continue;
    if (*when[i] < cutoff) {
      before.push_back(i);
    } else {
      periods.insert(*when[i]);
    }
  }
  if (before.empty()) throw DataError("no rows before the drift cutoff");

  // Scenario 1: engineer features once on the pre-cutoff cohort and freeze.
  const Dataset pre = features.select_rows(before);
  const auto split = stratified_split(pre, config.fractions, config.engine.seed);
  const learners::SpecLearner learner(config.learner);
  const explain::PermutationExplainer explainer(config.engine.importance_repeats);
  auto proposer = make_proposer(config);
  const auto result = engine::run(config.engine, pre, split, learner, explainer, *proposer);
  const Dataset augmented = augment(features, result.sigma);

  DriftSummary summary;
  summary.sigma = result.sigma;
  std::string csv = "period,rows,frozen_with_features,retrained_without_features\n";
  json points = json::array();
  for (double p : periods) {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> prior;
    for (std::size_t i = 0; i < when.size(); ++i) {
      if (!when[i]) continue;
      if (*when[i] == p) rows.push_back(i);
      if (*when[i] < p) prior.push_back(i);
    }
    if (!both_classes(features, rows) || !both_classes(features, prior)) continue;
    const auto labels = labels_at(features, rows);
    DriftPoint point;
    point.period = p;
    point.rows = rows.size();
    point.frozen_with_features = metrics::auc(result.model->predict_scores(augmented, rows), labels);
    // Scenario 2: retrain on everything seen so far, original features only.
    point.retrained_without_features = metrics::auc(learner.train(features, prior)->predict_scores(features, rows), labels);
    csv += format_double(p) + "," + std::to_string(point.rows) + "," + format_double(point.frozen_with_features) + "," +
           format_double(point.retrained_without_features) + "\n";
    points.push_back({{"period", p},
                      {"rows", point.rows},
                      {"frozen_with_features", point.frozen_with_features},
                      {"retrained_without_features", point.retrained_without_features}});
    summary.points.push_back(point);
  }
  std::filesystem::create_directories(out);
  json programs = json::array();
  for (const auto& t : result.sigma) programs.push_back(fdsl::render(t.program));
  const json doc{{"column", config.drift_column}, {"cutoff", cutoff}, {"features", programs}, {"periods", points}};
  write_file(out / "drift.json", doc.dump(1) + "\n");
  write_file(out / "drift.csv", csv);
  return summary;
}

std::string cmd_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out) {
  std::string table = "task,method,metric,mean,std,improvement_percent\n";
  std::string top = "task,split,top10_generated_fraction\n";
  json consolidated = json::array();
  auto cell = [](const json& summary) {
    return format_double(summary.at("mean").get<double>()) + "," +
           (summary.contains("std") && !summary.at("std").is_null() ? format_double(summary.at("std").get<double>())
                                                                     : std::string());
  };
  for (const auto& dir : runs) {
    const auto report = json::parse(read_file(dir / "report.json"));
    const std::string task = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    for (const char* metric : {"auc", "f1"}) {
      const auto& base = report.at("baseline").at(metric);
      const auto& mine = report.at("medfeat").at(metric);
      const json& pct = report.at(std::string(metric) + "_improvement_percent");
      table += task + ",baseline," + metric + "," + cell(base) + ",\n";
      table += task + ",medfeat," + metric + "," + cell(mine) + "," +
               (pct.is_null() ? std::string() : format_double(pct.get<double>())) + "\n";
    }
    const std::size_t n = report.at("n_splits").get<std::size_t>();
    for (std::size_t s = 0; s < n; ++s) {
      const auto split = json::parse(read_file(dir / ("split_" + std::to_string(s)) / "report.json"));
      top += task + "," + std::to_string(s) + "," +
             format_double(split.at("importance").at("top10_generated_fraction").get<double>()) + "\n";
    }
    consolidated.push_back({{"task", task}, {"report", report}});
  }
  std::filesystem::create_directories(out);
  write_file(out / "table.csv", table);
  write_file(out / "top10.csv", top);
  write_file(out / "report.json", consolidated.dump(1) + "\n");
  return table;
}

void cmd_synth(const synthdata::SynthSpec& spec, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  synthdata::write(synthdata::generate(spec), out / "data.csv", out / "schema.json");
}

}  // namespace medfeat::cli
