#include "medfeat/islands.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "medfeat/error.hpp"

namespace medfeat::islands {
namespace {

std::vector<FeatureGroup> statics(std::size_t n) {
  std::vector<FeatureGroup> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(FeatureGroup{"f" + std::to_string(i), {"f" + std::to_string(i)}, false});
  return out;
}

explain::ImportanceVector importance_of(const std::vector<FeatureGroup>& groups, const std::vector<double>& raw) {
  std::map<std::string, double> m;
  for (std::size_t i = 0; i < groups.size(); ++i) m[groups[i].group_id] = raw[i];
  return explain::normalize(m);
}

TEST(Islands, DegenerateDistributionAlwaysPicksMassOneGroup) {
  const auto groups = statics(5);
  const auto imp = importance_of(groups, {0, 0, 1, 0, 0});
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (const auto& island : sample_islands(imp, groups, 3, 1, seed)) {
      ASSERT_EQ(island.groups.size(), 1u);
      EXPECT_EQ(island.groups[0].group_id, "f2");
    }
  }
}

TEST(Islands, UniformInclusionFrequencyMatchesAnalyticValue) {
  const auto groups = statics(10);
  const auto imp = importance_of(groups, std::vector<double>(10, 1.0));
  const auto islands = sample_islands(imp, groups, 10000, 3, 42);
  std::map<std::string, int> counts;
  for (const auto& island : islands) {
    for (const auto& g : island.groups) ++counts[g.group_id];
  }
  // Inclusion probability m / G = 0.3 for every group.
  const double sd = std::sqrt(0.3 * 0.7 / 10000.0);
  for (const auto& g : groups) EXPECT_NEAR(counts[g.group_id] / 10000.0, 0.3, 3 * sd) << g.group_id;
}

TEST(Islands, FirstDrawFrequenciesConvergeToImportance) {
  const auto groups = statics(6);
  const std::vector<double> raw{5, 3, 1, 0.5, 0.5, 0};
  const auto imp = importance_of(groups, raw);
  const auto islands = sample_islands(imp, groups, 50000, 2, 7);
  std::map<std::string, double> freq;
  for (const auto& island : islands) freq[island.groups[0].group_id] += 1.0 / 50000.0;
  double tv = 0.0;
  for (const auto& g : groups) tv += 0.5 * std::abs(freq[g.group_id] - imp.entries.at(g.group_id).normalized);
  EXPECT_LE(tv, 0.01);
}

TEST(Islands, FullSizeIslandIsEveryGroup) {
  const auto groups = statics(7);
  const auto imp = importance_of(groups, {1, 2, 3, 4, 5, 6, 7});
  for (const auto& island : sample_islands(imp, groups, 5, 7, 3)) {
    std::set<std::string> ids;
    for (const auto& g : island.groups) ids.insert(g.group_id);
    EXPECT_EQ(ids.size(), 7u);
  }
}

TEST(Islands, ZeroWeightGroupsFillOnlyAfterPositiveOnesRunOut) {
  const auto groups = statics(4);
  const auto imp = importance_of(groups, {1, 0, 0, 0});
  for (const auto& island : sample_islands(imp, groups, 20, 3, 9)) EXPECT_EQ(island.groups[0].group_id, "f0");
}

TEST(Islands, RejectsBadSizes) {
  const auto groups = statics(3);
  const auto imp = importance_of(groups, {1, 1, 1});
  EXPECT_THROW(sample_islands(imp, groups, 1, 4, 0), ConfigError);
  EXPECT_THROW(sample_islands(imp, groups, 0, 1, 0), ConfigError);
  EXPECT_THROW(sample_islands(imp, groups, 1, 0, 0), ConfigError);
}

TEST(Islands, TemporalGroupBringsAllMembers) {
  std::vector<FeatureGroup> groups{FeatureGroup{"hr", {"hr_0", "hr_1", "hr_2"}, true}, FeatureGroup{"age", {"age"}, false}};
  const auto imp = importance_of(groups, {1, 0});
  const auto island = sample_islands(imp, groups, 1, 1, 0)[0];
  EXPECT_EQ(island.columns, (std::vector<std::string>{"hr_0", "hr_1", "hr_2"}));
}

TEST(Islands, FuzzedCallsKeepInvariants) {
  Rng rng(5);
  for (int call = 0; call < 10000; ++call) {
    const std::size_t g = 1 + rng.below(12);
    std::vector<FeatureGroup> groups;
    std::vector<double> raw;
    for (std::size_t i = 0; i < g; ++i) {
      if (rng.bernoulli(0.3)) {
        groups.push_back(FeatureGroup{"t" + std::to_string(i), {"t" + std::to_string(i) + "_a", "t" + std::to_string(i) + "_b"}, true});
      } else {
        groups.push_back(FeatureGroup{"s" + std::to_string(i), {"s" + std::to_string(i)}, false});
      }
      raw.push_back(rng.bernoulli(0.3) ? 0.0 : rng.uniform01());
    }
    const auto imp = importance_of(groups, raw);
    const std::size_t m = 1 + rng.below(g);
    for (const auto& island : sample_islands(imp, groups, 1 + rng.below(3), m, rng.next(), call)) {
      ASSERT_EQ(island.groups.size(), m);
      std::set<std::string> ids;
      for (const auto& grp : island.groups) ids.insert(grp.group_id);
      ASSERT_EQ(ids.size(), m);
      std::set<std::string> cols(island.columns.begin(), island.columns.end());
      ASSERT_EQ(cols.size(), island.columns.size());
      ASSERT_EQ(cols.count("y"), 0u);
    }
  }
}

TEST(Islands, DeterministicPerSeedAndIteration) {
  const auto groups = statics(8);
  const auto imp = importance_of(groups, {1, 2, 3, 4, 5, 6, 7, 8});
  auto ids = [](const std::vector<Island>& islands) {
    std::vector<std::string> out;
    for (const auto& i : islands) {
      for (const auto& g : i.groups) out.push_back(g.group_id);
    }
    return out;
  };
  EXPECT_EQ(ids(sample_islands(imp, groups, 4, 3, 11, 1)), ids(sample_islands(imp, groups, 4, 3, 11, 1)));
  EXPECT_NE(ids(sample_islands(imp, groups, 4, 3, 11, 1)), ids(sample_islands(imp, groups, 4, 3, 11, 2)));
}

TEST(Islands, UniformVariantIgnoresImportance) {
  const auto groups = statics(5);
  const auto islands = sample_islands_uniform(groups, 50000, 1, 3);
  std::map<std::string, double> freq;
  for (const auto& island : islands) freq[island.groups[0].group_id] += 1.0 / 50000.0;
  for (const auto& g : groups) EXPECT_NEAR(freq[g.group_id], 0.2, 0.01);
}

}  // namespace
}  // namespace medfeat::islands
