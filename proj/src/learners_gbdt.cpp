#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "medfeat/error.hpp"
#include "medfeat/learners.hpp"
#include "medfeat/random.hpp"

namespace medfeat::learners {

namespace {

constexpr std::uint16_t kMissingBin = 0xFFFF;

struct GbdtParams {
  std::size_t n_estimators;
  std::size_t max_depth;
  double learning_rate;
  double min_child_weight;
  double max_delta_step;
  double subsample;
  double colsample_bytree;
  double colsample_bylevel;
  double gamma;
  double alpha;
  double lambda;
  std::size_t max_bin;
};

GbdtParams read_params(const Hyperparams& p) {
  return GbdtParams{static_cast<std::size_t>(p.at("n_estimators")),
                    static_cast<std::size_t>(p.at("max_depth")),
                    p.at("learning_rate"),
                    p.at("min_child_weight"),
                    p.at("max_delta_step"),
                    p.at("subsample"),
                    p.at("colsample_bytree"),
                    p.at("colsample_bylevel"),
                    p.at("gamma"),
                    p.at("reg_alpha"),
                    p.at("reg_lambda"),
                    static_cast<std::size_t>(p.at("max_bin"))};
}

// Cut points for one design column; a value v falls in bin (number of cuts <= v).
std::vector<double> fit_cuts(std::vector<double> values, std::size_t max_bin) {
  std::sort(values.begin(), values.end());
  std::vector<double> distinct;
  for (double v : values) {
    if (distinct.empty() || distinct.back() != v) distinct.push_back(v);
  }
  std::vector<double> cuts;
  if (distinct.size() <= max_bin) {
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) cuts.push_back(0.5 * (distinct[i] + distinct[i + 1]));
    return cuts;
  }
  // Quantile cuts on the weighted (duplicate-counting) sample.
  for (std::size_t k = 1; k < max_bin; ++k) {
    const std::size_t pos = k * values.size() / max_bin;
    const double v = values[pos];
    if (v == values.front()) continue;
    // Cut midway between v and the largest value below it, so v opens a new bin.
    const auto below = std::lower_bound(distinct.begin(), distinct.end(), v);
    const double cut = 0.5 * (*(below - 1) + v);
    if (cuts.empty() || cuts.back() < cut) cuts.push_back(cut);
  }
  return cuts;
}

double soft_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

struct Scorer {
  double alpha;
  double lambda;
  double max_delta_step;

  double score(double g, double h) const {
    const double denom = h + lambda;
    if (denom <= 0.0) return 0.0;
    if (max_delta_step <= 0.0) {
      const double t = soft_threshold(g, alpha);
      return t * t / denom;
    }
    const double w = weight(g, h);
    // Objective reduction for a clipped weight.
    return -(2.0 * (g * w + alpha * std::abs(w)) + denom * w * w);
  }

  double weight(double g, double h) const {
    const double denom = h + lambda;
    if (denom <= 0.0) return 0.0;
    double w = -soft_threshold(g, alpha) / denom;
    if (max_delta_step > 0.0) w = std::clamp(w, -max_delta_step, max_delta_step);
    return w;
  }
};

struct Candidate {
  double gain = 0.0;
  std::size_t feature = 0;
  std::size_t bin = 0;  // left holds bins <= bin
  bool default_left = false;
  bool found = false;
};

class TreeBuilder {
 public:
  TreeBuilder(const GbdtParams& params, const std::vector<std::vector<std::uint16_t>>& bins,
              const std::vector<std::vector<double>>& cuts, const std::vector<double>& grad,
              const std::vector<double>& hess)
      : params_(params),
        scorer_{params.alpha, params.lambda, params.max_delta_step},
        bins_(bins),
        cuts_(cuts),
        grad_(grad),
        hess_(hess) {}

  Tree build(std::vector<std::size_t> rows, const std::vector<std::size_t>& tree_features, Rng& rng) {
    Tree tree;
    struct Pending {
      std::size_t node;
      std::vector<std::size_t> rows;
    };
    std::vector<Pending> level;
    tree.nodes.emplace_back();
    level.push_back({0, std::move(rows)});
    for (std::size_t depth = 0; depth <= params_.max_depth && !level.empty(); ++depth) {
      const auto features = sample_level(tree_features, rng);
      std::vector<Pending> next;
      for (auto& pending : level) {
        double g = 0.0;
        double h = 0.0;
        for (auto r : pending.rows) {
          g += grad_[r];
          h += hess_[r];
        }
        Candidate best;
        if (depth < params_.max_depth) best = find_split(pending.rows, features, g, h);
        TreeNode& node = tree.nodes[pending.node];
        if (!best.found) {
          node.leaf = true;
          node.value = params_.learning_rate * scorer_.weight(g, h);
          continue;
        }
        node.leaf = false;
        node.feature = static_cast<std::uint32_t>(best.feature);
        node.threshold = cuts_[best.feature][best.bin];
        node.default_left = best.default_left;
        std::vector<std::size_t> left_rows;
        std::vector<std::size_t> right_rows;
        for (auto r : pending.rows) {
          const std::uint16_t b = bins_[best.feature][r];
          const bool go_left = b == kMissingBin ? best.default_left : b <= best.bin;
          (go_left ? left_rows : right_rows).push_back(r);
        }
        const auto left = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        tree.nodes[pending.node].left = left;
        tree.nodes[pending.node].right = left + 1;
        next.push_back({static_cast<std::size_t>(left), std::move(left_rows)});
        next.push_back({static_cast<std::size_t>(left + 1), std::move(right_rows)});
      }
      level = std::move(next);
    }
    return tree;
  }

 private:
  std::vector<std::size_t> sample_level(const std::vector<std::size_t>& features, Rng& rng) const {
    if (params_.colsample_bylevel >= 1.0) return features;
    return subsample_features(features, params_.colsample_bylevel, rng);
  }

 public:
  static std::vector<std::size_t> subsample_features(std::vector<std::size_t> features, double fraction, Rng& rng) {
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(features.size()))));
    if (keep >= features.size()) return features;
    rng.shuffle(std::span<std::size_t>(features));
    features.resize(keep);
    std::sort(features.begin(), features.end());
    return features;
  }

 private:
  Candidate find_split(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& features, double g,
                       double h) const {
    Candidate best;
    const double parent = scorer_.score(g, h);
    for (auto f : features) {
      const std::size_t nbins = cuts_[f].size() + 1;
      if (nbins < 2) continue;
      std::vector<double> hg(nbins, 0.0);
      std::vector<double> hh(nbins, 0.0);
      std::vector<std::size_t> hc(nbins, 0);
      double mg = 0.0;
      double mh = 0.0;
      std::size_t mc = 0;
      for (auto r : rows) {
        const std::uint16_t b = bins_[f][r];
        if (b == kMissingBin) {
          mg += grad_[r];
          mh += hess_[r];
          ++mc;
        } else {
          hg[b] += grad_[r];
          hh[b] += hess_[r];
          ++hc[b];
        }
      }
      for (int pass = 0; pass < (mc > 0 ? 2 : 1); ++pass) {
        const bool missing_left = pass == 1;
        double gl = missing_left ? mg : 0.0;
        double hl = missing_left ? mh : 0.0;
        std::size_t cl = missing_left ? mc : 0;
        for (std::size_t s = 0; s + 1 < nbins; ++s) {
          gl += hg[s];
          hl += hh[s];
          cl += hc[s];
          const std::size_t cr = rows.size() - cl;
          if (cl == 0 || cr == 0) continue;
          const double gr = g - gl;
          const double hr = h - hl;
          if (hl < params_.min_child_weight || hr < params_.min_child_weight) continue;
          const double gain = 0.5 * (scorer_.score(gl, hl) + scorer_.score(gr, hr) - parent) - params_.gamma;
          if (gain > 1e-12 && gain > best.gain) {
            best = Candidate{gain, f, s, missing_left, true};
          }
        }
      }
    }
    return best;
  }

  const GbdtParams& params_;
  Scorer scorer_;
  const std::vector<std::vector<std::uint16_t>>& bins_;
  const std::vector<std::vector<double>>& cuts_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

std::shared_ptr<const TrainedModel> train_gbdt(const Dataset& dataset, std::span<const std::size_t> train_rows,
                                               const LearnerSpec& spec) {
  if (spec.kind != LearnerKind::gbdt) throw ConfigError("spec is not a gbdt spec");
  validate_spec(spec);
  std::vector<std::size_t> rows(train_rows.begin(), train_rows.end());
  std::sort(rows.begin(), rows.end());
  if (rows.empty()) throw TrainError("no training rows");

  auto model = std::make_shared<TrainedModel>();
  model->kind = LearnerKind::gbdt;
  model->hyperparams = resolved_hyperparams(spec);
  const GbdtParams params = read_params(model->hyperparams);
  model->encoder = Encoder::fit(dataset, rows, /*standardize=*/false);
  for (const auto& src : model->encoder.sources) model->columns.push_back(src.column);

  const std::size_t n = rows.size();
  const std::size_t width = model->encoder.width();
  const auto design = model->encoder.transform(dataset, rows);

  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = dataset.labels()[rows[i]];
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw TrainError("training rows contain a single class");
  const double scale_pos_weight = neg / pos;

  std::vector<std::vector<double>> cuts(width);
  std::vector<std::vector<std::uint16_t>> bins(width, std::vector<std::uint16_t>(n, kMissingBin));
  for (std::size_t k = 0; k < width; ++k) {
    std::vector<double> observed;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = design[i * width + k];
      if (!std::isnan(v)) observed.push_back(v);
    }
    cuts[k] = fit_cuts(std::move(observed), params.max_bin);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = design[i * width + k];
      if (std::isnan(v)) continue;
      bins[k][i] = static_cast<std::uint16_t>(std::upper_bound(cuts[k].begin(), cuts[k].end(), v) - cuts[k].begin());
    }
  }

  std::vector<double> weight(n);
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weight[i] = labels[i] ? scale_pos_weight : 1.0;
    weight_sum += weight[i];
  }
  auto loss_of = [&](const std::vector<double>& margin) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += weight[i] * (softplus(margin[i]) - (labels[i] ? margin[i] : 0.0));
    return total / weight_sum;
  };

  model->base_margin = 0.0;  // base score 0.5
  std::vector<double> margin(n, model->base_margin);
  model->training_loss.push_back(loss_of(margin));

  std::vector<std::size_t> all_features(width);
  std::iota(all_features.begin(), all_features.end(), 0);
  std::vector<double> grad(n);
  std::vector<double> hess(n);
  Rng rng(mix_seed(spec.seed, fnv1a("gbdt")));
  TreeBuilder builder(params, bins, cuts, grad, hess);
  for (std::size_t round = 0; round < params.n_estimators; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = weight[i] * (p - (labels[i] ? 1.0 : 0.0));
      hess[i] = std::max(weight[i] * p * (1.0 - p), 1e-16);
    }
    std::vector<std::size_t> sample;
    if (params.subsample >= 1.0) {
      sample.resize(n);
      std::iota(sample.begin(), sample.end(), 0);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (rng.bernoulli(params.subsample)) sample.push_back(i);
      }
      if (sample.empty()) sample.push_back(rng.below(n));
    }
    const auto features = params.colsample_bytree >= 1.0
                              ? all_features
                              : TreeBuilder::subsample_features(all_features, params.colsample_bytree, rng);
    Tree tree = builder.build(std::move(sample), features, rng);
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += tree.predict(std::span<const double>(design.data() + i * width, width));
    }
    model->trees.push_back(std::move(tree));
    model->training_loss.push_back(loss_of(margin));
  }
  return model;
}

}  // namespace medfeat::learners
