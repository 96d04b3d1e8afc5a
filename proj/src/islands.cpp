#include "medfeat/islands.hpp"

#include <set>

#include "medfeat/error.hpp"

namespace medfeat::islands {

std::size_t draw_index(std::span<const double> weights, Rng& rng) {
  if (weights.empty()) throw ConfigError("cannot draw from an empty distribution");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return static_cast<std::size_t>(rng.below(weights.size()));
  const double u = rng.uniform01() * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    cumulative += weights[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;  // rounding at the upper end
}

std::vector<std::size_t> draw_without_replacement(std::span<const double> weights, std::size_t count, Rng& rng) {
  if (count > weights.size()) throw ConfigError("cannot draw more entries than exist");
  std::vector<double> remaining(weights.begin(), weights.end());
  std::vector<std::size_t> alive(weights.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  std::vector<std::size_t> out;
  for (std::size_t d = 0; d < count; ++d) {
    const std::size_t pick = draw_index(remaining, rng);
    out.push_back(alive[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

Island make_island(std::vector<FeatureGroup> groups, std::size_t iteration, std::size_t index) {
  Island island{iteration, index, std::move(groups), {}};
  std::set<std::string> seen;
  for (const auto& g : island.groups) {
    for (const auto& col : g.member_columns) {
      if (seen.insert(col).second) island.columns.push_back(col);
    }
  }
  return island;
}

namespace {

std::vector<Island> sample_with_weights(std::span<const double> weights, std::span<const FeatureGroup> groups,
                                        std::size_t k, std::size_t m, std::uint64_t seed, std::size_t iteration) {
  if (k < 1) throw ConfigError("island count must be at least 1");
  if (m < 1) throw ConfigError("island size must be at least 1");
  if (m > groups.size()) {
    throw ConfigError("island size " + std::to_string(m) + " exceeds the " + std::to_string(groups.size()) +
                      " available feature groups");
  }
  std::vector<Island> out;
  for (std::size_t i = 0; i < k; ++i) {
    Rng rng(mix_seed(seed, fnv1a("island"), iteration, i));
    std::vector<FeatureGroup> chosen;
    for (auto g : draw_without_replacement(weights, m, rng)) chosen.push_back(groups[g]);
    out.push_back(make_island(std::move(chosen), iteration, i));
  }
  return out;
}

}  // namespace

std::vector<Island> sample_islands(const explain::ImportanceVector& importance, std::span<const FeatureGroup> groups,
                                   std::size_t k, std::size_t m, std::uint64_t seed, std::size_t iteration) {
  std::vector<double> weights;
  for (const auto& g : groups) {
    const auto it = importance.entries.find(g.group_id);
    weights.push_back(it == importance.entries.end() ? 0.0 : it->second.normalized);
  }
  return sample_with_weights(weights, groups, k, m, seed, iteration);
}

std::vector<Island> sample_islands_uniform(std::span<const FeatureGroup> groups, std::size_t k, std::size_t m,
                                           std::uint64_t seed, std::size_t iteration) {
  const std::vector<double> weights(groups.size(), 1.0);
  return sample_with_weights(weights, groups, k, m, seed, iteration);
}

}  // namespace medfeat::islands
