#include "medfeat/synthdata.hpp"

#include <cmath>
#include <optional>

#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/random.hpp"
#include "medfeat/text.hpp"

namespace medfeat::synthdata {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Intercept b with mean(sigmoid(logit_i + b)) = rate, by bisection.
double calibrate_intercept(const std::vector<double>& logits, double rate) {
  double lo = -50.0;
  double hi = 50.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double z : logits) mean += sigmoid(z + mid);
    mean /= static_cast<double>(logits.size());
    (mean < rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double least_squares_slope(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  const double t_mean = (n - 1.0) / 2.0;
  double v_mean = 0.0;
  for (double v : values) v_mean += v / n;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < values.size(); ++t) {
    num += (static_cast<double>(t) - t_mean) * (values[t] - v_mean);
    den += (static_cast<double>(t) - t_mean) * (static_cast<double>(t) - t_mean);
  }
  return num / den;
}

ColumnSchema numeric_column(std::string name, std::string description) {
  return ColumnSchema{std::move(name), ColumnKind::numeric, std::move(description), std::nullopt, false};
}

// Static numeric column j before any shift or drift.
double base_mean(std::size_t j) { return 10.0 * static_cast<double>(j + 1); }
double base_sd(std::size_t j) { return 1.0 + static_cast<double>(j % 3); }

}  // namespace

std::string_view to_string(Planted planted) {
  switch (planted) {
    case Planted::none:
      return "none";
    case Planted::interaction:
      return "interaction";
    case Planted::temporal_slope:
      return "temporal_slope";
  }
  return "none";
}

Planted planted_from_string(std::string_view text) {
  if (text == "none") return Planted::none;
  if (text == "interaction") return Planted::interaction;
  if (text == "temporal_slope") return Planted::temporal_slope;
  throw ConfigError("unknown planted signal '" + std::string(text) + "'");
}

void validate(const SynthSpec& spec) {
  if (spec.n_rows < 10) throw ConfigError("n_rows must be at least 10");
  if (!(spec.positive_rate > 0.0 && spec.positive_rate < 1.0)) throw ConfigError("positive_rate must be in (0, 1)");
  if (!(spec.missing_rate >= 0.0 && spec.missing_rate < 1.0)) throw ConfigError("missing_rate must be in [0, 1)");
  if (!(spec.noise_sd >= 0.0)) throw ConfigError("noise_sd must be non-negative");
  if (spec.planted == Planted::interaction && spec.n_static_numeric < 2) {
    throw ConfigError("interaction signal needs at least 2 static numeric columns");
  }
  if (spec.planted == Planted::temporal_slope && spec.n_temporal_groups < 1) {
    throw ConfigError("temporal_slope signal needs a temporal group");
  }
  if (spec.n_temporal_groups > 0 && spec.group_length < 2) throw ConfigError("group_length must be at least 2");
}

SynthResult generate(const SynthSpec& spec) {
  validate(spec);
  const std::size_t n = spec.n_rows;
  Rng latent(mix_seed(spec.seed, fnv1a("latent")));
  Rng holes(mix_seed(spec.seed, fnv1a("missing")));
  Rng outcome(mix_seed(spec.seed, fnv1a("label")));

  std::vector<double> period(n, 0.0);
  if (spec.n_periods > 0) {
    for (std::size_t i = 0; i < n; ++i) period[i] = static_cast<double>(i * spec.n_periods / n);
  }

  // Static numeric: x_j = mean_j + sd_j * z_j with z_j standard normal.
  std::vector<std::vector<double>> z(spec.n_static_numeric, std::vector<double>(n));
  std::vector<std::vector<double>> statics(spec.n_static_numeric, std::vector<double>(n));
  for (std::size_t j = 0; j < spec.n_static_numeric; ++j) {
    const double mean = base_mean(j) + spec.marginal_shift;
    const double sd = base_sd(j);
    for (std::size_t i = 0; i < n; ++i) {
      z[j][i] = latent.normal();
      statics[j][i] = mean + spec.drift * period[i] + sd * z[j][i];
    }
  }
  std::vector<std::vector<std::string>> categories(spec.n_static_categorical, std::vector<std::string>(n));
  static const char* kTokens[] = {"a", "b", "c"};
  for (auto& col : categories) {
    for (auto& cell : col) cell = kTokens[latent.below(3)];
  }
  // Temporal: level + slope * t + measurement noise.
  std::vector<std::vector<std::vector<double>>> series(
      spec.n_temporal_groups, std::vector<std::vector<double>>(n, std::vector<double>(spec.group_length)));
  for (auto& group : series) {
    for (auto& row : group) {
      const double level = 50.0 + 10.0 * latent.normal();
      const double slope = latent.normal();
      for (std::size_t t = 0; t < spec.group_length; ++t) {
        row[t] = level + slope * static_cast<double>(t) + latent.normal();
      }
    }
  }

  GroundTruth truth;
  truth.planted = spec.planted;
  std::vector<double> signal(n, 0.0);
  if (spec.planted == Planted::interaction) {
    // Standardized against the undrifted, unshifted means so the mechanism
    // stays fixed while the marginals move.
    for (std::size_t i = 0; i < n; ++i) {
      signal[i] = (statics[0][i] - base_mean(0)) / base_sd(0) * ((statics[1][i] - base_mean(1)) / base_sd(1));
    }
    truth.columns = {"x0", "x1"};
    truth.description = "label logit depends only on the product of x0 and x1 standardized at their base means";
  } else if (spec.planted == Planted::temporal_slope) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      signal[i] = least_squares_slope(series[0][i]);
      mean += signal[i] / static_cast<double>(n);
    }
    double var = 0.0;
    for (double s : signal) var += (s - mean) * (s - mean) / static_cast<double>(n);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (double& s : signal) s = (s - mean) / sd;
    truth.group = "g0";
    for (std::size_t t = 0; t < spec.group_length; ++t) truth.columns.push_back("g0_t" + std::to_string(t));
    truth.description = "label logit depends only on the least-squares slope of group g0";
  } else {
    truth.description = "labels are independent of every feature";
  }

  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) logits[i] = spec.signal_strength * signal[i] + spec.noise_sd * outcome.normal();
  truth.intercept = calibrate_intercept(logits, spec.positive_rate);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = outcome.bernoulli(sigmoid(logits[i] + truth.intercept)) ? 1 : 0;

  auto maybe = [&](double v) { return holes.bernoulli(spec.missing_rate) ? std::nullopt : std::optional<double>(v); };
  std::vector<Column> columns;
  for (std::size_t j = 0; j < spec.n_static_numeric; ++j) {
    std::vector<std::optional<double>> cells(n);
    for (std::size_t i = 0; i < n; ++i) cells[i] = maybe(statics[j][i]);
    columns.push_back(Column::numeric(
        numeric_column("x" + std::to_string(j), "static measurement " + std::to_string(j)), std::move(cells)));
  }
  for (std::size_t j = 0; j < spec.n_static_categorical; ++j) {
    std::vector<std::optional<std::string>> cells(n);
    for (std::size_t i = 0; i < n; ++i) {
      cells[i] = holes.bernoulli(spec.missing_rate) ? std::nullopt : std::optional<std::string>(categories[j][i]);
    }
    columns.push_back(Column::categorical(ColumnSchema{"c" + std::to_string(j), ColumnKind::categorical,
                                                       "static category " + std::to_string(j), std::nullopt, false},
                                          std::move(cells)));
  }
  for (std::size_t g = 0; g < spec.n_temporal_groups; ++g) {
    const std::string group = "g" + std::to_string(g);
    for (std::size_t t = 0; t < spec.group_length; ++t) {
      std::vector<std::optional<double>> cells(n);
      for (std::size_t i = 0; i < n; ++i) cells[i] = maybe(series[g][i][t]);
      ColumnSchema schema{group + "_t" + std::to_string(t), ColumnKind::numeric,
                          "repeated measurement " + std::to_string(g) + " at time " + std::to_string(t),
                          TemporalTag{group, static_cast<double>(t)}, false};
      columns.push_back(Column::numeric(std::move(schema), std::move(cells)));
    }
  }
  if (spec.n_periods > 0) {
    std::vector<std::optional<double>> cells(period.begin(), period.end());
    columns.push_back(Column::numeric(numeric_column("period", "enrolment period"), std::move(cells)));
  }
  ColumnSchema label{"y", ColumnKind::binary, "outcome", std::nullopt, true};
  return SynthResult{Dataset(std::move(columns), std::move(label), std::move(labels)), std::move(truth)};
}

void write(const SynthResult& result, const std::filesystem::path& table_path,
           const std::filesystem::path& schema_path) {
  save_dataset(result.dataset, table_path, schema_path);
  nlohmann::json doc{{"planted", std::string(to_string(result.truth.planted))},
                     {"columns", result.truth.columns},
                     {"group", result.truth.group},
                     {"intercept", result.truth.intercept},
                     {"description", result.truth.description}};
  write_file(table_path.parent_path() / "truth.json", doc.dump(1) + "\n");
}

}  // namespace medfeat::synthdata
