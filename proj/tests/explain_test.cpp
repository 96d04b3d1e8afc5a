#include "medfeat/explain.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "medfeat/error.hpp"
#include "medfeat/fdsl.hpp"
#include "medfeat/random.hpp"
#include "medfeat/synthdata.hpp"
#include "medfeat/text.hpp"
#include "support.hpp"

namespace medfeat::explain {
namespace {

using testing::label_schema;
using testing::num;

// Model scoring rows with an arbitrary function of the named columns.
class FnModel final : public learners::Model {
 public:
  using Fn = std::function<double(const std::vector<double>&)>;
  FnModel(std::vector<std::string> columns, Fn fn) : columns_(std::move(columns)), fn_(std::move(fn)) {}

  std::vector<double> predict_scores(const Dataset& d, std::span<const std::size_t> rows) const override {
    std::vector<double> out;
    for (auto r : rows) {
      std::vector<double> x;
      for (const auto& c : columns_) x.push_back(d.find(c)->numbers[r].value_or(0.0));
      out.push_back(1.0 / (1.0 + std::exp(-fn_(x))));
    }
    return out;
  }
  const std::vector<std::string>& input_columns() const override { return columns_; }

 private:
  std::vector<std::string> columns_;
  Fn fn_;
};

FeatureGroup single(std::string name) { return FeatureGroup{name, {name}, false}; }

// a = label + noise (perfectly separable), b = noise.
Dataset separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::optional<double>> a, b, u, w;
  std::vector<std::uint8_t> y;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t label = i % 2;
    const double shared = rng.normal();
    a.push_back(label + 0.3 * rng.uniform01());
    b.push_back(rng.normal());
    u.push_back(shared);
    w.push_back(shared);
    y.push_back(label);
  }
  return Dataset({num("a", a), num("b", b), testing::temporal("u", "g", 0, u), testing::temporal("w", "g", 1, w)},
                 label_schema(), y);
}

TEST(Normalize, ProportionalAndUniformFallback) {
  const auto v = normalize(std::map<std::string, double>{{"x", 2.0}, {"y", 1.0}, {"z", 1.0}});
  EXPECT_EQ(v.entries.at("x").normalized, 0.5);
  EXPECT_EQ(v.entries.at("y").normalized, 0.25);
  EXPECT_EQ(v.entries.at("z").normalized, 0.25);
  // Tie between y and z broken by name.
  EXPECT_EQ(v.ranked(), (std::vector<std::string>{"x", "y", "z"}));

  const auto zero = normalize(std::map<std::string, double>{{"a", 0}, {"b", 0}, {"c", 0}, {"d", 0}});
  for (const auto& [g, e] : zero.entries) EXPECT_EQ(e.normalized, 0.25);
}

TEST(Normalize, SumsToOneOnRandomVectors) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::map<std::string, double> raw;
    const auto g = 1 + rng.below(30);
    for (std::size_t i = 0; i < g; ++i) {
      raw["g" + std::to_string(i)] = rng.bernoulli(0.2) ? 0.0 : rng.uniform01() * std::pow(10.0, rng.uniform(-6, 2));
    }
    const auto v = normalize(raw);
    double sum = 0.0;
    std::vector<int> ranks;
    for (const auto& [name, e] : v.entries) {
      sum += e.normalized;
      ranks.push_back(e.rank);
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    std::sort(ranks.begin(), ranks.end());
    for (std::size_t i = 0; i < ranks.size(); ++i) EXPECT_EQ(ranks[i], static_cast<int>(i + 1));
  }
}

TEST(PermutationImportance, IgnoredFeatureScoresExactlyZero) {
  const Dataset d = separable(400, 1);
  const auto rows = testing::all_rows(d);
  const FnModel model({"a", "b"}, [](const auto& x) { return 4.0 * x[0] + 0.0 * x[1]; });
  const std::vector<FeatureGroup> groups{single("a"), single("b")};
  const auto v = grouped_permutation_importance(model, d, rows, groups, 5, 3);
  EXPECT_EQ(v.entries.at("b").raw, 0.0);
  EXPECT_GT(v.entries.at("a").raw, 0.3);
}

TEST(PermutationImportance, ColumnOutsideModelScoresExactlyZero) {
  const Dataset d = separable(200, 2);
  const FnModel model({"a"}, [](const auto& x) { return x[0]; });
  const std::vector<FeatureGroup> groups{single("a"), single("b")};
  const auto v = grouped_permutation_importance(model, d, testing::all_rows(d), groups, 3, 0);
  EXPECT_EQ(v.entries.at("b").raw, 0.0);
  EXPECT_EQ(v.entries.at("a").rank, 1);
}

TEST(PermutationImportance, PerfectFeatureDropsToChance) {
  const Dataset d = separable(2000, 4);
  const FnModel model({"a"}, [](const auto& x) { return x[0]; });
  const std::vector<FeatureGroup> groups{single("a")};
  const auto v = grouped_permutation_importance(model, d, testing::all_rows(d), groups, 5, 9);
  // AUC 1 before; a row-permuted score is independent of the label, AUC ~ 0.5.
  EXPECT_NEAR(v.entries.at("a").raw, 0.5, 0.05);
}

TEST(PermutationImportance, GroupMembersArePermutedJointly) {
  // u == w on every row; the model is destroyed by any row where they differ.
  const Dataset d = separable(300, 5);
  const FnModel model({"a", "u", "w"}, [](const auto& x) { return 4.0 * x[0] - 50.0 * (x[1] - x[2]) * (x[1] - x[2]); });
  const std::vector<FeatureGroup> joint{single("a"), FeatureGroup{"g", {"u", "w"}, true}};
  EXPECT_EQ(grouped_permutation_importance(model, d, testing::all_rows(d), joint, 5, 1).entries.at("g").raw, 0.0);
  const std::vector<FeatureGroup> split{single("a"), single("u"), single("w")};
  EXPECT_GT(grouped_permutation_importance(model, d, testing::all_rows(d), split, 5, 1).entries.at("u").raw, 0.1);
}

TEST(PermutationImportance, DeterministicPerSeed) {
  const Dataset d = separable(300, 6);
  const FnModel model({"a", "b"}, [](const auto& x) { return x[0] + 0.5 * x[1]; });
  const std::vector<FeatureGroup> groups{single("a"), single("b")};
  const auto rows = testing::all_rows(d);
  EXPECT_EQ(grouped_permutation_importance(model, d, rows, groups, 4, 7),
            grouped_permutation_importance(model, d, rows, groups, 4, 7));
}

TEST(PermutationImportance, SingleClassValidationIsAnError) {
  const Dataset d = separable(20, 7);
  const FnModel model({"a"}, [](const auto& x) { return x[0]; });
  const std::vector<FeatureGroup> groups{single("a")};
  const std::vector<std::size_t> rows{0, 2, 4};
  EXPECT_THROW(grouped_permutation_importance(model, d, rows, groups, 1, 0), DataError);
}

TEST(PermutationImportance, PlantedGroupRanksFirst) {
  int first = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    synthdata::SynthSpec spec;
    spec.n_rows = 1500;
    spec.planted = synthdata::Planted::temporal_slope;
    spec.seed = seed;
    const auto data = synthdata::generate(spec);
    const auto split = stratified_split(data.dataset, {}, seed);
    const auto model = learners::train(data.dataset, split.train, {learners::LearnerKind::gbdt, {}, seed});
    const auto groups = feature_groups(data.dataset);
    const auto v = grouped_permutation_importance(*model, data.dataset, split.val, groups, 5, seed);
    first += v.entries.at("g0").rank == 1;
  }
  EXPECT_GE(first, 18);
}

TEST(Report, GeneratedFlagsAndTopFraction) {
  const auto v = normalize(std::map<std::string, double>{{"a", 3}, {"b", 2}, {"new", 1}});
  EXPECT_EQ(importance_report(v, {}).top_k_generated_fraction(), 0.0);

  fdsl::TransformationSet sigma;
  for (const char* name : {"a", "b", "new"}) {
    sigma.push_back(fdsl::FittedTransformation{fdsl::parse(std::string("feature ") + name + " = 1"), {}, true, {}});
  }
  EXPECT_EQ(importance_report(v, sigma).top_k_generated_fraction(), 1.0);
}

TEST(Report, WorkedExampleRankingReplaysFromDisk) {
  // Final ranking values from the worked example log.
  const auto v = normalize(std::map<std::string, double>{{"age", 0.0974},
                                                         {"hours_since_admission", 0.0731},
                                                         {"age_imd_interaction", 0.0646},
                                                         {"index_of_multiple_deprivation_score", 0.0400},
                                                         {"n_unique_meds_received_last_24h", 0.0274}});
  fdsl::TransformationSet sigma{fdsl::FittedTransformation{
      fdsl::parse("feature age_imd_interaction = col(age) * col(index_of_multiple_deprivation_score)"), {}, true, {}}};
  testing::TempDir dir("report");
  write_file(dir / "importance.json", to_json(importance_report(v, sigma)));
  const auto back = report_from_json(read_file(dir / "importance.json"));
  ASSERT_EQ(back.entries.size(), 5u);
  EXPECT_EQ(back.entries[2].group, "age_imd_interaction");
  EXPECT_EQ(back.entries[2].rank, 3);
  EXPECT_TRUE(back.entries[2].generated);
  EXPECT_EQ(back.entries[2].raw, 0.0646);
  EXPECT_NEAR(back.top_k_generated_fraction(), 0.2, 1e-12);
  EXPECT_EQ(importance_from_json(to_json(v)), v);
}

}  // namespace
}  // namespace medfeat::explain
