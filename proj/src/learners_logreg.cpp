#include <algorithm>
#include <cmath>
#include <deque>

#include "medfeat/error.hpp"
#include "medfeat/learners.hpp"

namespace medfeat::learners {

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

std::vector<std::size_t> sorted_rows(std::span<const std::size_t> rows) {
  std::vector<std::size_t> out(rows.begin(), rows.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

LogisticObjective::LogisticObjective(std::span<const double> design_, std::span<const std::uint8_t> labels_,
                                     std::size_t width_, double c_)
    : design(design_), labels(labels_), width(width_), c(c_) {
  const std::size_t n = labels.size();
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw TrainError("training rows contain a single class");
  row_weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    row_weights[i] = static_cast<double>(n) / (2.0 * (labels[i] ? pos : neg));
  }
}

double LogisticObjective::value(std::span<const double> params) const {
  const std::size_t n = labels.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = dot(design.subspan(i * width, width), params.first(width)) + params[width];
    loss += row_weights[i] * (softplus(z) - (labels[i] ? z : 0.0));
  }
  double penalty = 0.0;
  for (std::size_t k = 0; k < width; ++k) penalty += params[k] * params[k];
  const double nn = static_cast<double>(n);
  return loss / nn + penalty / (2.0 * c * nn);
}

double LogisticObjective::value_and_gradient(std::span<const double> params, std::span<double> gradient) const {
  const std::size_t n = labels.size();
  const double nn = static_cast<double>(n);
  std::fill(gradient.begin(), gradient.end(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = design.subspan(i * width, width);
    const double z = dot(row, params.first(width)) + params[width];
    loss += row_weights[i] * (softplus(z) - (labels[i] ? z : 0.0));
    const double r = row_weights[i] * (sigmoid(z) - (labels[i] ? 1.0 : 0.0)) / nn;
    for (std::size_t k = 0; k < width; ++k) gradient[k] += r * row[k];
    gradient[width] += r;
  }
  double penalty = 0.0;
  for (std::size_t k = 0; k < width; ++k) {
    penalty += params[k] * params[k];
    gradient[k] += params[k] / (c * nn);
  }
  return loss / nn + penalty / (2.0 * c * nn);
}

LbfgsResult minimize_lbfgs(const LogisticObjective& objective, std::vector<double> start, double tolerance,
                           std::size_t max_iterations) {
  constexpr std::size_t kHistory = 10;
  const std::size_t dim = start.size();
  std::vector<double> x = std::move(start);
  std::vector<double> g(dim);
  double f = objective.value_and_gradient(x, g);

  std::deque<std::vector<double>> s_hist;
  std::deque<std::vector<double>> y_hist;
  std::deque<double> rho_hist;

  std::vector<double> direction(dim);
  std::vector<double> x_new(dim);
  std::vector<double> g_new(dim);
  std::size_t iter = 0;
  while (iter < max_iterations && norm2(g) > tolerance) {
    // Two-loop recursion.
    direction = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], direction);
      for (std::size_t d = 0; d < dim; ++d) direction[d] -= alpha[k] * y_hist[k][d];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) {
      gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
    } else {
      const double norm = std::sqrt(dot(g, g));
      gamma = norm > 1.0 ? 1.0 / norm : 1.0;
    }
    for (double& v : direction) v *= gamma;
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], direction);
      for (std::size_t d = 0; d < dim; ++d) direction[d] += s_hist[k][d] * (alpha[k] - beta);
    }
    for (double& v : direction) v = -v;

    double slope = dot(g, direction);
    if (slope >= 0.0) {
      // Not a descent direction; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t d = 0; d < dim; ++d) direction[d] = -g[d];
      slope = -dot(g, g);
    }

    double step = 1.0;
    double f_new = f;
    bool accepted = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      for (std::size_t d = 0; d < dim; ++d) x_new[d] = x[d] + step * direction[d];
      f_new = objective.value_and_gradient(x_new, g_new);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++iter;
    if (!accepted) break;

    std::vector<double> s(dim);
    std::vector<double> y(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      s[d] = x_new[d] - x[d];
      y[d] = g_new[d] - g[d];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * std::max(1.0, dot(y, y))) {
      if (s_hist.size() == kHistory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
  }
  return LbfgsResult{std::move(x), iter, norm2(g)};
}

std::shared_ptr<const TrainedModel> train_logreg(const Dataset& dataset, std::span<const std::size_t> train_rows,
                                                 const LearnerSpec& spec) {
  if (spec.kind != LearnerKind::logreg) throw ConfigError("spec is not a logreg spec");
  validate_spec(spec);
  const auto rows = sorted_rows(train_rows);
  if (rows.empty()) throw TrainError("no training rows");

  auto model = std::make_shared<TrainedModel>();
  model->kind = LearnerKind::logreg;
  model->hyperparams = resolved_hyperparams(spec);
  model->encoder = Encoder::fit(dataset, rows, /*standardize=*/true);
  for (const auto& src : model->encoder.sources) model->columns.push_back(src.column);

  const auto design = model->encoder.transform(dataset, rows);
  std::vector<std::uint8_t> labels;
  labels.reserve(rows.size());
  for (auto r : rows) labels.push_back(dataset.labels()[r]);

  const std::size_t width = model->encoder.width();
  LogisticObjective objective(design, labels, width, model->hyperparams.at("C"));
  const auto result = minimize_lbfgs(objective, std::vector<double>(width + 1, 0.0), model->hyperparams.at("tol"),
                                     static_cast<std::size_t>(model->hyperparams.at("max_iter")));
  for (double v : result.params) {
    if (!std::isfinite(v)) throw TrainError("logistic regression diverged");
  }
  model->coefficients.assign(result.params.begin(), result.params.begin() + static_cast<std::ptrdiff_t>(width));
  model->intercept = result.params[width];
  model->iterations = result.iterations;
  model->gradient_norm = result.gradient_norm;
  return model;
}

}  // namespace medfeat::learners
