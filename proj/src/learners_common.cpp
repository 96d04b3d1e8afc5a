#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/learners.hpp"

namespace medfeat::learners {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

bool integral(double v) { return std::floor(v) == v; }

}  // namespace

std::string_view to_string(LearnerKind kind) { return kind == LearnerKind::logreg ? "logreg" : "gbdt"; }

LearnerKind learner_kind_from_string(std::string_view text) {
  if (text == "logreg") return LearnerKind::logreg;
  if (text == "gbdt") return LearnerKind::gbdt;
  throw ConfigError("unknown learner kind '" + std::string(text) + "'");
}

const Hyperparams& default_hyperparams(LearnerKind kind) {
  static const Hyperparams logreg{{"C", 1.0}, {"max_iter", 1000}, {"tol", 1e-6}};
  static const Hyperparams gbdt{
      {"n_estimators", 100},  {"max_depth", 6},        {"learning_rate", 0.3},     {"min_child_weight", 1},
      {"max_delta_step", 0},  {"subsample", 1.0},      {"colsample_bytree", 1.0},  {"colsample_bylevel", 1.0},
      {"gamma", 0.0},         {"reg_alpha", 0.0},      {"reg_lambda", 1.0},        {"max_bin", 256},
  };
  return kind == LearnerKind::logreg ? logreg : gbdt;
}

void validate_spec(const LearnerSpec& spec) {
  const auto& defaults = default_hyperparams(spec.kind);
  for (const auto& [key, value] : spec.hyperparams) {
    if (defaults.count(key) == 0) {
      throw ConfigError("unknown " + std::string(to_string(spec.kind)) + " hyperparameter '" + key + "'");
    }
    if (!std::isfinite(value)) throw ConfigError("hyperparameter '" + key + "' must be finite");
  }
  const auto p = resolved_hyperparams(spec);
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
  };
  if (spec.kind == LearnerKind::logreg) {
    require(p.at("C") > 0.0, "C must be positive");
    require(p.at("max_iter") >= 1 && integral(p.at("max_iter")), "max_iter must be a positive integer");
    require(p.at("tol") > 0.0, "tol must be positive");
    return;
  }
  for (const char* key : {"n_estimators", "max_depth", "max_bin"}) {
    require(integral(p.at(key)) && p.at(key) >= 0, std::string(key) + " must be a non-negative integer");
  }
  require(p.at("max_depth") >= 1, "max_depth must be at least 1");
  require(p.at("max_bin") >= 2 && p.at("max_bin") <= 65535, "max_bin must be in [2, 65535]");
  require(p.at("learning_rate") > 0.0, "learning_rate must be positive");
  require(p.at("min_child_weight") >= 0.0, "min_child_weight must be non-negative");
  require(p.at("max_delta_step") >= 0.0, "max_delta_step must be non-negative");
  for (const char* key : {"subsample", "colsample_bytree", "colsample_bylevel"}) {
    require(p.at(key) > 0.0 && p.at(key) <= 1.0, std::string(key) + " must be in (0, 1]");
  }
  require(p.at("gamma") >= 0.0, "gamma must be non-negative");
  require(p.at("reg_alpha") >= 0.0, "reg_alpha must be non-negative");
  require(p.at("reg_lambda") >= 0.0, "reg_lambda must be non-negative");
}

Hyperparams resolved_hyperparams(const LearnerSpec& spec) {
  Hyperparams out = default_hyperparams(spec.kind);
  for (const auto& [key, value] : spec.hyperparams) out[key] = value;
  return out;
}

// --- Encoder ----------------------------------------------------------------

Encoder Encoder::fit(const Dataset& dataset, std::span<const std::size_t> train_rows, bool standardize) {
  Encoder enc;
  enc.standardize = standardize;
  for (std::size_t j = 0; j < dataset.num_columns(); ++j) {
    const Column& col = dataset.column(j);
    Source src{col.schema.name, col.is_categorical(), {}};
    if (src.categorical) {
      std::set<std::string> vocab;
      for (auto r : train_rows) {
        if (col.tokens[r]) vocab.insert(*col.tokens[r]);
      }
      src.vocabulary.assign(vocab.begin(), vocab.end());
      for (const auto& token : src.vocabulary) enc.design_names.push_back(src.column + "=" + token);
      enc.design_names.push_back(src.column + "=<unseen>");
    } else {
      enc.design_names.push_back(src.column);
    }
    enc.sources.push_back(std::move(src));
  }
  if (!standardize) return enc;

  // Medians first (numeric sources only), then moments of the imputed design.
  enc.standardize = false;
  const auto raw = enc.transform(dataset, train_rows);
  enc.standardize = true;
  const std::size_t width = enc.width();
  const std::size_t n = train_rows.size();
  enc.medians.assign(width, 0.0);
  enc.means.assign(width, 0.0);
  enc.scales.assign(width, 1.0);
  for (std::size_t k = 0; k < width; ++k) {
    std::vector<double> observed;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = raw[i * width + k];
      if (!std::isnan(v)) observed.push_back(v);
    }
    enc.medians[k] = median_of(observed);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = raw[i * width + k];
      sum += std::isnan(v) ? enc.medians[k] : v;
    }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = raw[i * width + k];
      const double d = (std::isnan(v) ? enc.medians[k] : v) - mean;
      ss += d * d;
    }
    const double sd = n ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
    enc.means[k] = mean;
    enc.scales[k] = sd > 0.0 ? sd : 1.0;
  }
  return enc;
}

std::vector<double> Encoder::transform(const Dataset& dataset, std::span<const std::size_t> rows) const {
  const std::size_t width = this->width();
  std::vector<double> out(rows.size() * width, kNaN);
  std::size_t offset = 0;
  for (const auto& src : sources) {
    const Column* col = dataset.find(src.column);
    if (col == nullptr) throw DataError("model feature '" + src.column + "' absent from dataset");
    if (src.categorical != col->is_categorical()) throw DataError("model feature '" + src.column + "' changed kind");
    if (src.categorical) {
      const std::size_t block = src.vocabulary.size() + 1;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& token = col->tokens[rows[i]];
        double* cell = &out[i * width + offset];
        if (!token) {
          // Missing category: every indicator is missing (imputed to 0 for logreg below).
          continue;
        }
        for (std::size_t b = 0; b < block; ++b) cell[b] = 0.0;
        const auto it = std::lower_bound(src.vocabulary.begin(), src.vocabulary.end(), *token);
        const bool seen = it != src.vocabulary.end() && *it == *token;
        cell[seen ? static_cast<std::size_t>(it - src.vocabulary.begin()) : src.vocabulary.size()] = 1.0;
      }
      offset += block;
    } else {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& v = col->numbers[rows[i]];
        if (v) out[i * width + offset] = *v;
      }
      offset += 1;
    }
  }
  if (standardize) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < width; ++k) {
        double& v = out[i * width + k];
        if (std::isnan(v)) v = medians[k];
        v = (v - means[k]) / scales[k];
      }
    }
  }
  return out;
}

// --- Models -----------------------------------------------------------------

double Tree::predict(std::span<const double> row) const {
  std::size_t index = 0;
  while (!nodes[index].leaf) {
    const auto& node = nodes[index];
    const double v = row[node.feature];
    const bool go_left = std::isnan(v) ? node.default_left : v < node.threshold;
    index = static_cast<std::size_t>(go_left ? node.left : node.right);
  }
  return nodes[index].value;
}

std::vector<double> TrainedModel::margins(const Dataset& dataset, std::span<const std::size_t> rows) const {
  const auto design = encoder.transform(dataset, rows);
  const std::size_t width = encoder.width();
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::span<const double> row(design.data() + i * width, width);
    if (kind == LearnerKind::logreg) {
      double z = intercept;
      for (std::size_t k = 0; k < width; ++k) z += coefficients[k] * row[k];
      out[i] = z;
    } else {
      double z = base_margin;
      for (const auto& tree : trees) z += tree.predict(row);
      out[i] = z;
    }
  }
  return out;
}

std::vector<double> TrainedModel::predict_scores(const Dataset& dataset, std::span<const std::size_t> rows) const {
  auto out = margins(dataset, rows);
  for (double& z : out) z = 1.0 / (1.0 + std::exp(-z));
  return out;
}

std::shared_ptr<const TrainedModel> train(const Dataset& dataset, std::span<const std::size_t> train_rows,
                                          const LearnerSpec& spec) {
  return spec.kind == LearnerKind::logreg ? train_logreg(dataset, train_rows, spec)
                                          : train_gbdt(dataset, train_rows, spec);
}

std::vector<double> predict_scores(const Model& model, const Dataset& dataset, std::span<const std::size_t> rows) {
  return model.predict_scores(dataset, rows);
}

SpecLearner::SpecLearner(LearnerSpec spec) : spec_(std::move(spec)) { validate_spec(spec_); }

std::shared_ptr<const Model> SpecLearner::train(const Dataset& dataset, std::span<const std::size_t> train_rows) const {
  return learners::train(dataset, train_rows, spec_);
}

// --- Persistence ------------------------------------------------------------

std::string model_to_json(const TrainedModel& model) {
  using nlohmann::json;
  json doc;
  doc["format"] = "medfeat.model";
  doc["version"] = 1;
  doc["kind"] = std::string(to_string(model.kind));
  doc["hyperparams"] = model.hyperparams;
  doc["columns"] = model.columns;
  json sources = json::array();
  for (const auto& s : model.encoder.sources) {
    sources.push_back({{"column", s.column}, {"categorical", s.categorical}, {"vocabulary", s.vocabulary}});
  }
  doc["encoder"] = {{"sources", sources},
                    {"design_names", model.encoder.design_names},
                    {"standardize", model.encoder.standardize},
                    {"medians", model.encoder.medians},
                    {"means", model.encoder.means},
                    {"scales", model.encoder.scales}};
  if (model.kind == LearnerKind::logreg) {
    doc["coefficients"] = model.coefficients;
    doc["intercept"] = model.intercept;
  } else {
    doc["base_margin"] = model.base_margin;
    json trees = json::array();
    for (const auto& tree : model.trees) {
      json nodes = json::array();
      for (const auto& n : tree.nodes) {
        if (n.leaf) {
          nodes.push_back({{"leaf", n.value}});
        } else {
          nodes.push_back({{"feature", n.feature},
                           {"threshold", n.threshold},
                           {"default_left", n.default_left},
                           {"left", n.left},
                           {"right", n.right}});
        }
      }
      trees.push_back(std::move(nodes));
    }
    doc["trees"] = std::move(trees);
  }
  return doc.dump(1) + "\n";
}

std::shared_ptr<const TrainedModel> model_from_json(std::string_view text) {
  auto model = std::make_shared<TrainedModel>();
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.value("format", std::string{}) != "medfeat.model" || doc.value("version", 0) != 1) {
      throw DataError("not a version-1 model document");
    }
    model->kind = learner_kind_from_string(doc.at("kind").get<std::string>());
    model->hyperparams = doc.at("hyperparams").get<Hyperparams>();
    model->columns = doc.at("columns").get<std::vector<std::string>>();
    const auto& enc = doc.at("encoder");
    for (const auto& s : enc.at("sources")) {
      model->encoder.sources.push_back(Encoder::Source{s.at("column").get<std::string>(), s.at("categorical").get<bool>(),
                                                       s.at("vocabulary").get<std::vector<std::string>>()});
    }
    model->encoder.design_names = enc.at("design_names").get<std::vector<std::string>>();
    model->encoder.standardize = enc.at("standardize").get<bool>();
    model->encoder.medians = enc.at("medians").get<std::vector<double>>();
    model->encoder.means = enc.at("means").get<std::vector<double>>();
    model->encoder.scales = enc.at("scales").get<std::vector<double>>();
    if (model->kind == LearnerKind::logreg) {
      model->coefficients = doc.at("coefficients").get<std::vector<double>>();
      model->intercept = doc.at("intercept").get<double>();
    } else {
      model->base_margin = doc.at("base_margin").get<double>();
      for (const auto& nodes : doc.at("trees")) {
        Tree tree;
        for (const auto& n : nodes) {
          TreeNode node;
          if (n.contains("leaf")) {
            node.value = n["leaf"].get<double>();
          } else {
            node.leaf = false;
            node.feature = n.at("feature").get<std::uint32_t>();
            node.threshold = n.at("threshold").get<double>();
            node.default_left = n.at("default_left").get<bool>();
            node.left = n.at("left").get<std::int32_t>();
            node.right = n.at("right").get<std::int32_t>();
          }
          tree.nodes.push_back(node);
        }
        model->trees.push_back(std::move(tree));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  }
  return model;
}

}  // namespace medfeat::learners
