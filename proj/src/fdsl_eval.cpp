#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/fdsl.hpp"
#include "medfeat/text.hpp"

namespace medfeat::fdsl {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool missing(double v) { return std::isnan(v); }

// Non-finite results of arithmetic are missing cells.
double finite_or_missing(double v) { return std::isfinite(v) ? v : kMissing; }

// --- Resolution -------------------------------------------------------------

struct Resolver {
  std::span<const ColumnSchema> schema;
  const ColumnSchema& label;

  const ColumnSchema& column(const std::string& name) const {
    if (name == label.name) throw FitError("program references the label column '" + name + "'");
    for (const auto& col : schema) {
      if (col.name == name && !col.is_label) return col;
    }
    throw FitError("unresolvable column reference '" + name + "'");
  }

  void check(const Expr& e) const {
    switch (e.kind) {
      case Kind::column:
        if (column(e.name).kind == ColumnKind::categorical) {
          throw FitError("categorical column '" + e.name + "' may only be compared with == against a quoted token");
        }
        return;
      case Kind::text:
        throw FitError("category token outside an equality comparison");
      case Kind::group:
        if (temporal_members(schema, e.name).size() < 2) {
          throw FitError("unresolvable temporal group reference '" + e.name + "'");
        }
        return;
      case Kind::compare: {
        const bool lhs_text = e.args[0].kind == Kind::text;
        const bool rhs_text = e.args[1].kind == Kind::text;
        if (lhs_text || rhs_text) {
          const Expr& other = lhs_text ? e.args[1] : e.args[0];
          if (e.op != Op::eq || other.kind != Kind::column || lhs_text == rhs_text) {
            throw FitError("category tokens may only be compared with == against col(...)");
          }
          if (column(other.name).kind != ColumnKind::categorical) {
            throw FitError("column '" + other.name + "' is not categorical and cannot be compared with a token");
          }
          return;
        }
        break;
      }
      default:
        break;
    }
    for (const auto& arg : e.args) check(arg);
  }
};

// --- Evaluation -------------------------------------------------------------

double statistic(Op op, std::vector<double> values) {
  std::erase_if(values, missing);
  if (values.empty()) throw FitError(std::string("statistic ") + std::string(op_name(op)) + " over all-missing values");
  const double n = static_cast<double>(values.size());
  double out = 0.0;
  switch (op) {
    case Op::train_mean:
      out = std::accumulate(values.begin(), values.end(), 0.0) / n;
      break;
    case Op::train_std: {
      const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      out = std::sqrt(ss / n);
      break;
    }
    case Op::train_min:
      out = *std::min_element(values.begin(), values.end());
      break;
    case Op::train_max:
      out = *std::max_element(values.begin(), values.end());
      break;
    case Op::train_median: {
      std::sort(values.begin(), values.end());
      const std::size_t mid = values.size() / 2;
      out = values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
      break;
    }
    default:
      throw FitError("not a statistic");
  }
  if (!std::isfinite(out)) throw FitError(std::string("statistic ") + std::string(op_name(op)) + " is not finite");
  return out;
}

double aggregate(Op op, std::span<const double> times, std::span<const double> values) {
  std::size_t observed = 0;
  for (double v : values) observed += missing(v) ? 0 : 1;
  if (op == Op::g_missing) {
    return static_cast<double>(values.size() - observed) / static_cast<double>(values.size());
  }
  if (observed == 0) return kMissing;
  double first = kMissing;
  double last = kMissing;
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : values) {
    if (missing(v)) continue;
    if (missing(first)) first = v;
    last = v;
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double n = static_cast<double>(observed);
  const double mean = sum / n;
  switch (op) {
    case Op::g_mean: return finite_or_missing(mean);
    case Op::g_min: return lo;
    case Op::g_max: return hi;
    case Op::g_first: return first;
    case Op::g_last: return last;
    case Op::g_delta: return observed < 2 ? kMissing : finite_or_missing(last - first);
    case Op::g_std: {
      double ss = 0.0;
      for (double v : values) {
        if (!missing(v)) ss += (v - mean) * (v - mean);
      }
      return finite_or_missing(std::sqrt(ss / n));
    }
    case Op::g_slope: {
      if (observed < 2) return kMissing;
      double t_mean = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (!missing(values[i])) t_mean += times[i];
      }
      t_mean /= n;
      double sxy = 0.0;
      double sxx = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (missing(values[i])) continue;
        const double dt = times[i] - t_mean;
        sxy += dt * (values[i] - mean);
        sxx += dt * dt;
      }
      return sxx > 0.0 ? finite_or_missing(sxy / sxx) : kMissing;
    }
    default:
      return kMissing;
  }
}

class Evaluator {
 public:
  Evaluator(const Dataset& dataset, std::map<int, double>& stats, bool fitting)
      : data_(dataset), stats_(stats), fitting_(fitting), schema_(dataset.feature_schemas()) {}

  std::vector<double> eval(const Expr& e) {
    const std::size_t n = data_.num_rows();
    switch (e.kind) {
      case Kind::number:
        return std::vector<double>(n, e.number);
      case Kind::column: {
        const Column* col = data_.find(e.name);
        if (col == nullptr || col->is_categorical()) throw FitError("unresolvable column reference '" + e.name + "'");
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = col->numbers[i].value_or(kMissing);
        return out;
      }
      case Kind::text:
        throw FitError("category token outside a comparison");
      case Kind::unary: {
        auto v = eval(e.args[0]);
        for (double& x : v) x = unary(e.op, x);
        return v;
      }
      case Kind::binary: {
        auto lhs = eval(e.args[0]);
        const auto rhs = eval(e.args[1]);
        for (std::size_t i = 0; i < n; ++i) lhs[i] = binary(e.op, lhs[i], rhs[i]);
        return lhs;
      }
      case Kind::coalesce: {
        auto first = eval(e.args[0]);
        const auto fallback = eval(e.args[1]);
        for (std::size_t i = 0; i < n; ++i) {
          if (missing(first[i])) first[i] = fallback[i];
        }
        return first;
      }
      case Kind::conditional: {
        auto cond = eval(e.args[0]);
        const auto then_v = eval(e.args[1]);
        const auto else_v = eval(e.args[2]);
        for (std::size_t i = 0; i < n; ++i) {
          if (!missing(cond[i])) cond[i] = cond[i] != 0.0 ? then_v[i] : else_v[i];
        }
        return cond;
      }
      case Kind::stat: {
        const int id = next_stat_id_++;
        double value = 0.0;
        if (fitting_) {
          value = statistic(e.op, eval(e.args[0]));
          stats_[id] = value;
        } else {
          auto it = stats_.find(id);
          if (it == stats_.end()) throw FitError("missing fitted statistic " + std::to_string(id));
          value = it->second;
          next_stat_id_ += static_cast<int>(count_stat_nodes(e.args[0]));
        }
        return std::vector<double>(n, value);
      }
      case Kind::group:
        return group(e);
      case Kind::compare:
        return compare(e);
      case Kind::is_missing: {
        auto v = eval(e.args[0]);
        for (double& x : v) x = missing(x) ? 1.0 : 0.0;
        return v;
      }
      case Kind::logic_and:
      case Kind::logic_or: {
        // Kleene three-valued logic: a decided operand wins over a missing one.
        auto lhs = eval(e.args[0]);
        const auto rhs = eval(e.args[1]);
        const double dominant = e.kind == Kind::logic_and ? 0.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (lhs[i] == dominant || rhs[i] == dominant) {
            lhs[i] = dominant;
          } else if (missing(lhs[i]) || missing(rhs[i])) {
            lhs[i] = kMissing;
          } else {
            lhs[i] = 1.0 - dominant;
          }
        }
        return lhs;
      }
      case Kind::logic_not: {
        auto v = eval(e.args[0]);
        for (double& x : v) {
          if (!missing(x)) x = x != 0.0 ? 0.0 : 1.0;
        }
        return v;
      }
    }
    return std::vector<double>(n, kMissing);
  }

 private:
  static double unary(Op op, double x) {
    if (missing(x)) return kMissing;
    switch (op) {
      case Op::log1p: return x <= -1.0 ? kMissing : finite_or_missing(std::log1p(x));
      case Op::abs: return std::abs(x);
      case Op::sqrt: return x < 0.0 ? kMissing : std::sqrt(x);
      case Op::neg: return -x;
      case Op::clip01: return std::clamp(x, 0.0, 1.0);
      default: return kMissing;
    }
  }

  static double binary(Op op, double a, double b) {
    if (missing(a) || missing(b)) return kMissing;
    switch (op) {
      case Op::add: return finite_or_missing(a + b);
      case Op::sub: return finite_or_missing(a - b);
      case Op::mul: return finite_or_missing(a * b);
      case Op::div: return b == 0.0 ? kMissing : finite_or_missing(a / b);
      case Op::min: return std::min(a, b);
      case Op::max: return std::max(a, b);
      case Op::pow: return finite_or_missing(std::pow(a, b));
      default: return kMissing;
    }
  }

  std::vector<double> compare(const Expr& e) {
    const std::size_t n = data_.num_rows();
    const bool lhs_text = e.args[0].kind == Kind::text;
    if (lhs_text || e.args[1].kind == Kind::text) {
      const Expr& col_ref = lhs_text ? e.args[1] : e.args[0];
      const std::string& token = lhs_text ? e.args[0].name : e.args[1].name;
      const Column* col = data_.find(col_ref.name);
      if (col == nullptr || !col->is_categorical()) {
        throw FitError("column '" + col_ref.name + "' is not categorical");
      }
      std::vector<double> out(n);
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = col->tokens[i] ? (*col->tokens[i] == token ? 1.0 : 0.0) : kMissing;
      }
      return out;
    }
    auto lhs = eval(e.args[0]);
    const auto rhs = eval(e.args[1]);
    for (std::size_t i = 0; i < n; ++i) {
      if (missing(lhs[i]) || missing(rhs[i])) {
        lhs[i] = kMissing;
        continue;
      }
      bool r = false;
      switch (e.op) {
        case Op::gt: r = lhs[i] > rhs[i]; break;
        case Op::ge: r = lhs[i] >= rhs[i]; break;
        case Op::lt: r = lhs[i] < rhs[i]; break;
        case Op::le: r = lhs[i] <= rhs[i]; break;
        case Op::eq: r = lhs[i] == rhs[i]; break;
        default: break;
      }
      lhs[i] = r ? 1.0 : 0.0;
    }
    return lhs;
  }

  std::vector<double> group(const Expr& e) {
    const auto members = temporal_members(schema_, e.name);
    if (members.size() < 2) throw FitError("unresolvable temporal group reference '" + e.name + "'");
    std::vector<const Column*> cols;
    std::vector<double> times;
    for (const auto* m : members) {
      cols.push_back(data_.find(m->name));
      times.push_back(m->temporal_group->time_offset);
    }
    const std::size_t n = data_.num_rows();
    std::vector<double> out(n);
    std::vector<double> row(cols.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) row[j] = cols[j]->numbers[i].value_or(kMissing);
      out[i] = aggregate(e.op, times, row);
    }
    return out;
  }

  const Dataset& data_;
  std::map<int, double>& stats_;
  bool fitting_;
  std::vector<ColumnSchema> schema_;
  int next_stat_id_ = 0;
};

}  // namespace

std::string_view to_string(ValidityReason reason) {
  switch (reason) {
    case ValidityReason::ok: return "ok";
    case ValidityReason::non_finite_output: return "non_finite_output";
    case ValidityReason::all_missing: return "all_missing";
    case ValidityReason::zero_variance: return "zero_variance";
    case ValidityReason::excess_missing: return "excess_missing";
    case ValidityReason::runtime_error: return "runtime_error";
  }
  return "runtime_error";
}

void resolve(const Program& program, std::span<const ColumnSchema> schema, const ColumnSchema& label) {
  Resolver{schema, label}.check(program.ast);
}

void resolve(const Program& program, const Dataset& dataset) {
  const auto schema = dataset.feature_schemas();
  resolve(program, schema, dataset.label_schema());
}

FittedTransformation fit(const Program& program, const Dataset& dataset, std::span<const std::size_t> train_rows) {
  resolve(program, dataset);
  if (train_rows.empty()) throw FitError("no training rows");
  FittedTransformation out;
  out.program = program;
  // Statistics only ever see the training rows.
  const Dataset train = dataset.select_rows(train_rows);
  Evaluator(train, out.fitted_stats, true).eval(program.ast);
  out.fitted = true;
  return out;
}

std::vector<std::optional<double>> apply(const FittedTransformation& fitted, const Dataset& dataset) {
  if (!fitted.fitted) throw FitError("transformation '" + fitted.program.name + "' is not fitted");
  auto stats = fitted.fitted_stats;
  const auto raw = Evaluator(dataset, stats, false).eval(fitted.program.ast);
  std::vector<std::optional<double>> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (std::isfinite(raw[i])) out[i] = raw[i];
  }
  return out;
}

ValidityReport validate_output(std::span<const std::optional<double>> output, std::span<const std::size_t> train_rows) {
  ValidityReport report;
  std::size_t n_missing = 0;
  std::optional<double> first;
  bool varies = false;
  for (auto r : train_rows) {
    const auto& v = output[r];
    if (!v) {
      ++n_missing;
      continue;
    }
    if (!std::isfinite(*v)) {
      report.reason = ValidityReason::non_finite_output;
      return report;
    }
    if (!first) {
      first = *v;
    } else if (*v != *first) {
      varies = true;
    }
  }
  const std::size_t n = train_rows.size();
  report.missing_fraction = n == 0 ? 1.0 : static_cast<double>(n_missing) / static_cast<double>(n);
  if (n == 0 || n_missing == n) {
    report.reason = ValidityReason::all_missing;
  } else if (report.missing_fraction > kMaxMissingFraction) {
    report.reason = ValidityReason::excess_missing;
  } else if (!varies) {
    report.reason = ValidityReason::zero_variance;
  } else {
    report.valid = true;
    report.reason = ValidityReason::ok;
  }
  return report;
}

ValidityReport validate(const FittedTransformation& fitted, const Dataset& dataset,
                        std::span<const std::size_t> train_rows) {
  std::vector<std::optional<double>> output;
  try {
    output = apply(fitted, dataset);
  } catch (const Error&) {
    return ValidityReport{false, ValidityReason::runtime_error, 1.0};
  }
  return validate_output(output, train_rows);
}

TransformationSet fit_all(std::span<const Program> programs, const Dataset& dataset,
                          std::span<const std::size_t> train_rows) {
  TransformationSet out;
  Dataset current = dataset;
  for (const auto& program : programs) {
    out.push_back(fit(program, current, train_rows));
    current = augment(current, TransformationSet{out.back()});
  }
  return out;
}

// --- Persistence ------------------------------------------------------------

std::string to_json(const TransformationSet& set, bool include_stats) {
  nlohmann::json doc;
  doc["format"] = "medfeat.transformations";
  doc["version"] = 1;
  auto entries = nlohmann::json::array();
  for (const auto& t : set) {
    nlohmann::json entry;
    entry["name"] = t.program.name;
    entry["rationale"] = t.program.rationale;
    entry["program"] = render(Program{t.program.name, {}, t.program.ast});
    entry["provenance"] = {{"iteration", t.provenance.iteration},
                           {"island", t.provenance.island},
                           {"proposer", t.provenance.proposer}};
    if (include_stats && t.fitted) {
      nlohmann::json stats = nlohmann::json::object();
      for (const auto& [id, value] : t.fitted_stats) stats[std::to_string(id)] = value;
      entry["fitted_stats"] = std::move(stats);
    }
    entries.push_back(std::move(entry));
  }
  doc["entries"] = std::move(entries);
  return doc.dump(2) + "\n";
}

TransformationSet transformations_from_json(std::string_view text) {
  TransformationSet out;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.value("format", std::string{}) != "medfeat.transformations" || doc.value("version", 0) != 1) {
      throw DataError("not a version-1 transformation set");
    }
    for (const auto& entry : doc.at("entries")) {
      FittedTransformation t;
      t.program = parse(entry.at("program").get<std::string>());
      t.program.rationale = entry.value("rationale", std::string{});
      if (t.program.name != entry.at("name").get<std::string>()) {
        throw DataError("entry name does not match its program");
      }
      if (entry.contains("provenance")) {
        const auto& p = entry["provenance"];
        t.provenance = Provenance{p.value("iteration", 0), p.value("island", 0), p.value("proposer", std::string{})};
      }
      if (entry.contains("fitted_stats")) {
        for (const auto& [key, value] : entry["fitted_stats"].items()) t.fitted_stats[std::stoi(key)] = value.get<double>();
        if (t.fitted_stats.size() != count_stat_nodes(t.program.ast)) {
          throw DataError("fitted_stats do not cover every statistic in '" + t.program.name + "'");
        }
        t.fitted = true;
      }
      out.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed transformation set: ") + e.what());
  }
  return out;
}

void save_transformations(const TransformationSet& set, const std::filesystem::path& path, bool include_stats) {
  write_file(path, to_json(set, include_stats));
}

TransformationSet load_transformations(const std::filesystem::path& path) {
  return transformations_from_json(read_file(path));
}

}  // namespace medfeat::fdsl

namespace medfeat {

Dataset augment(const Dataset& dataset, const fdsl::TransformationSet& sigma) {
  Dataset current = dataset;
  for (const auto& t : sigma) {
    if (!t.fitted) throw FitError("transformation '" + t.program.name + "' is not fitted");
    if (current.find(t.program.name) != nullptr || current.label_schema().name == t.program.name) {
      throw DataError("name collision: column '" + t.program.name + "' already exists");
    }
    ColumnSchema schema{t.program.name, ColumnKind::numeric, t.program.rationale, std::nullopt, false};
    current = current.with_column(Column::numeric(std::move(schema), fdsl::apply(t, current)));
  }
  return current;
}

}  // namespace medfeat
