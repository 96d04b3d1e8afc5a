#pragma once

// Importance-weighted sampling of small feature-group subsets.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "medfeat/datamodel.hpp"
#include "medfeat/explain.hpp"
#include "medfeat/random.hpp"

namespace medfeat::islands {

struct Island {
  std::size_t iteration = 0;
  std::size_t index = 0;
  std::vector<FeatureGroup> groups;
  /// Member columns of every group, in group order, without duplicates.
  std::vector<std::string> columns;
};

/// One categorical draw proportional to `weights`; uniform when they sum to zero.
std::size_t draw_index(std::span<const double> weights, Rng& rng);

/// Draws `count` distinct indices by successive draws renormalized over the remaining entries.
std::vector<std::size_t> draw_without_replacement(std::span<const double> weights, std::size_t count, Rng& rng);

Island make_island(std::vector<FeatureGroup> groups, std::size_t iteration, std::size_t index);

/// K islands of m groups each. Group weights are the normalized importance
/// (0 for groups absent from the vector). Islands are drawn independently.
std::vector<Island> sample_islands(const explain::ImportanceVector& importance, std::span<const FeatureGroup> groups,
                                   std::size_t k, std::size_t m, std::uint64_t seed, std::size_t iteration = 0);

/// Same draw with every group weighted equally.
std::vector<Island> sample_islands_uniform(std::span<const FeatureGroup> groups, std::size_t k, std::size_t m,
                                           std::uint64_t seed, std::size_t iteration = 0);

}  // namespace medfeat::islands
