#include "medfeat/datamodel.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "medfeat/error.hpp"
#include "medfeat/fdsl.hpp"
#include "medfeat/random.hpp"
#include "medfeat/text.hpp"
#include "support.hpp"

namespace medfeat {
namespace {

using testing::NA;
using testing::TempDir;

constexpr char kSchema[] = R"({
  "schema_version": 1,
  "columns": [
    {"name": "age", "kind": "numeric", "description": "age in years"},
    {"name": "sex", "kind": "categorical", "description": "recorded sex"},
    {"name": "dead", "kind": "binary", "description": "died within 24h", "is_label": true}
  ]
})";

TEST(LoadDataset, ParsesDeclaredKinds) {
  TempDir dir("load");
  write_file(dir / "t.csv", "age,sex,dead\n50,F,0\n61.5,M,1\n70,F,0\n");
  write_file(dir / "s.json", kSchema);
  const Dataset d = load_dataset(dir / "t.csv", dir / "s.json");
  EXPECT_EQ(d.num_rows(), 3u);
  EXPECT_EQ(d.num_columns(), 2u);
  EXPECT_EQ(d.column(0).numbers[1], 61.5);
  EXPECT_EQ(*d.column(1).tokens[1], "M");
  EXPECT_EQ(d.labels()[1], 1);
  EXPECT_EQ(d.label_schema().name, "dead");
}

TEST(LoadDataset, EmptyCellIsMissing) {
  TempDir dir("missing");
  write_file(dir / "t.csv", "age,sex,dead\n50,F,0\n,M,1\n70,,0\n");
  write_file(dir / "s.json", kSchema);
  const Dataset d = load_dataset(dir / "t.csv", dir / "s.json");
  EXPECT_TRUE(d.column(0).is_missing(1));
  EXPECT_TRUE(d.column(1).is_missing(2));
  EXPECT_FALSE(d.column(0).is_missing(0));
}

TEST(LoadDataset, ConfigurableMissingTokenAndDelimiter) {
  Schema schema = schema_from_json(kSchema);
  schema.missing_token = "NA";
  schema.delimiter = ';';
  const Dataset d = parse_dataset("age;sex;dead\nNA;F;0\n3;NA;1\n", schema);
  EXPECT_TRUE(d.column(0).is_missing(0));
  EXPECT_TRUE(d.column(1).is_missing(1));
}

TEST(LoadDataset, SchemaColumnAbsentFromHeader) {
  const Schema schema = schema_from_json(kSchema);
  try {
    parse_dataset("age,dead\n50,0\n", schema);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("undeclared column"), std::string::npos);
  }
}

TEST(LoadDataset, HeaderColumnAbsentFromSchema) {
  const Schema schema = schema_from_json(kSchema);
  EXPECT_THROW(parse_dataset("age,sex,bmi,dead\n50,F,22,0\n", schema), DataError);
}

TEST(LoadDataset, RejectsBadCells) {
  const Schema schema = schema_from_json(kSchema);
  EXPECT_THROW(parse_dataset("age,sex,dead\nfifty,F,0\n", schema), DataError);
  EXPECT_THROW(parse_dataset("age,sex,dead\n50,F,2\n", schema), DataError);
  EXPECT_THROW(parse_dataset("age,sex,dead\n50,F,\n", schema), DataError);
  EXPECT_THROW(parse_dataset("age,sex,dead\n50,F\n", schema), DataError);
}

TEST(Schema, RequiresExactlyOneBinaryLabel) {
  EXPECT_THROW(schema_from_json(R"({"schema_version":1,"columns":[{"name":"a","kind":"numeric"}]})"), DataError);
  EXPECT_THROW(
      schema_from_json(R"({"schema_version":1,"columns":[{"name":"a","kind":"numeric","is_label":true}]})"),
      DataError);
  EXPECT_THROW(schema_from_json(R"({"schema_version":2,"columns":[]})"), DataError);
}

TEST(Schema, TemporalGroupWithOneMemberIsInvalid) {
  EXPECT_THROW(schema_from_json(R"({"schema_version":1,"columns":[
      {"name":"hr@0h","kind":"numeric","temporal_group":{"group_id":"hr","time_offset":0}},
      {"name":"y","kind":"binary","is_label":true}]})"),
               DataError);
}

TEST(Schema, TemporalOffsetsMustBeDistinct) {
  EXPECT_THROW(schema_from_json(R"({"schema_version":1,"columns":[
      {"name":"hr@0h","kind":"numeric","temporal_group":{"group_id":"hr","time_offset":0}},
      {"name":"hr@1h","kind":"numeric","temporal_group":{"group_id":"hr","time_offset":0}},
      {"name":"y","kind":"binary","is_label":true}]})"),
               DataError);
}

TEST(FeatureGroups, TemporalMembersCollapseIntoOneGroup) {
  std::vector<ColumnSchema> schema{
      testing::numeric_schema("age"),
      ColumnSchema{"sex", ColumnKind::categorical, "", std::nullopt, false},
      testing::temporal_schema("hr@3h", "hr", 3.0),
      testing::temporal_schema("hr@0h", "hr", 0.0),
      testing::label_schema(),
  };
  const auto groups = feature_groups(schema);
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups[0], (FeatureGroup{"age", {"age"}, false}));
  EXPECT_EQ(groups[1], (FeatureGroup{"sex", {"sex"}, false}));
  EXPECT_EQ(groups[2], (FeatureGroup{"hr", {"hr@0h", "hr@3h"}, true}));
}

TEST(FeatureGroups, StaticOnlySchemaIsAllSingletons) {
  std::vector<ColumnSchema> schema{testing::numeric_schema("a"), testing::numeric_schema("b"), testing::label_schema()};
  for (const auto& g : feature_groups(schema)) {
    EXPECT_FALSE(g.is_temporal);
    EXPECT_EQ(g.member_columns.size(), 1u);
  }
}

Dataset labelled(std::vector<std::uint8_t> labels) {
  std::vector<std::optional<double>> x(labels.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  return Dataset({testing::num("x", x)}, testing::label_schema(), std::move(labels));
}

std::set<std::array<std::size_t, 3>> admissible_allocations(std::size_t n, SplitFractions f) {
  // Every (a, b, c) summing to n with each part within 1 of its exact share.
  std::set<std::array<std::size_t, 3>> out;
  const double exact[3] = {n * f.train, n * f.val, n * f.test};
  for (std::size_t a = 0; a <= n; ++a) {
    for (std::size_t b = 0; a + b <= n; ++b) {
      const std::size_t c = n - a - b;
      if (std::abs(a - exact[0]) < 1.0 && std::abs(b - exact[1]) < 1.0 && std::abs(c - exact[2]) < 1.0) {
        out.insert({a, b, c});
      }
    }
  }
  return out;
}

std::array<std::size_t, 3> class_counts(const Dataset& d, const SplitIndices& s, std::uint8_t cls) {
  auto count = [&](const std::vector<std::size_t>& part) {
    return static_cast<std::size_t>(std::count_if(part.begin(), part.end(), [&](auto i) { return d.labels()[i] == cls; }));
  };
  return {count(s.train), count(s.val), count(s.test)};
}

TEST(StratifiedSplit, TenRowsFourPositive) {
  const Dataset d = labelled({1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
  const SplitFractions f{0.6, 0.2, 0.2};
  const auto s = stratified_split(d, f, 7);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  const auto pos = class_counts(d, s, 1);
  EXPECT_TRUE(pos[0] == 2 || pos[0] == 3);
  EXPECT_TRUE(admissible_allocations(4, f).count(pos));
  EXPECT_TRUE(admissible_allocations(6, f).count(class_counts(d, s, 0)));
}

TEST(StratifiedSplit, SingleClassIsAnError) {
  EXPECT_THROW(stratified_split(labelled({0, 0, 0, 0, 0, 0}), {}, 1), DataError);
  EXPECT_THROW(stratified_split(labelled({0, 0, 0, 0, 1, 1}), {}, 1), DataError);
}

TEST(StratifiedSplit, DeterministicPerSeed) {
  const Dataset d = labelled({1, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 1});
  EXPECT_EQ(stratified_split(d, {}, 3), stratified_split(d, {}, 3));
  EXPECT_NE(stratified_split(d, {}, 3), stratified_split(d, {}, 4));
}

TEST(StratifiedSplit, PropertyDisjointExhaustiveBalanced) {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 6 + rng.below(200);
    std::vector<std::uint8_t> labels(n);
    for (auto& l : labels) l = rng.bernoulli(0.3) ? 1 : 0;
    labels[0] = labels[1] = labels[2] = 1;
    labels[3] = labels[4] = labels[5] = 0;
    const Dataset d = labelled(labels);
    const double a = 0.2 + 0.6 * rng.uniform01();
    const double b = (1.0 - a) * (0.1 + 0.8 * rng.uniform01());
    const SplitFractions f{a, b, 1.0 - a - b};
    const auto s = stratified_split(d, f, rng.next());
    std::vector<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      ASSERT_FALSE(part->empty());
      all.insert(all.end(), part->begin(), part->end());
    }
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all, testing::all_rows(d));
    for (std::uint8_t cls : {0, 1}) {
      const auto n_c = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), cls));
      const auto counts = class_counts(d, s, cls);
      const double exact[3] = {n_c * f.train, n_c * f.val, n_c * f.test};
      for (int p = 0; p < 3; ++p) EXPECT_LT(std::abs(counts[p] - exact[p]), 1.0) << "trial " << trial;
    }
  }
}

fdsl::FittedTransformation fitted(const std::string& text, const Dataset& d) {
  return fdsl::fit(fdsl::parse(text), d, testing::all_rows(d));
}

TEST(Augment, EmptySigmaIsIdentity) {
  const Dataset d({testing::num("age", {50, NA, 70})}, testing::label_schema(), {0, 1, 0});
  const Dataset out = augment(d, {});
  EXPECT_EQ(out.num_columns(), 1u);
  EXPECT_EQ(out.column(0), d.column(0));
}

TEST(Augment, AppendsPointwiseColumnWithMissingPropagation) {
  const Dataset d({testing::num("age", {50, NA, 70})}, testing::label_schema(), {0, 1, 0});
  const Dataset out = augment(d, {fitted("feature age2 = col(age) * 2", d)});
  ASSERT_EQ(out.num_columns(), 2u);
  EXPECT_EQ(out.column(0), d.column(0));
  EXPECT_EQ(out.column(1).schema.name, "age2");
  EXPECT_EQ(out.column(1).numbers, (std::vector<std::optional<double>>{100.0, NA, 140.0}));
}

TEST(Augment, LaterTransformationSeesEarlierOutput) {
  const Dataset d({testing::num("a", {1, 2}), testing::num("b", {3, 5})}, testing::label_schema(), {0, 1});
  const auto programs = std::vector<fdsl::Program>{fdsl::parse("feature f = col(a) + col(b)"),
                                                   fdsl::parse("feature g = col(f) * col(a)")};
  const auto sigma = fdsl::fit_all(programs, d, testing::all_rows(d));
  const Dataset out = augment(d, sigma);
  // By hand: f = (4, 7), g = (4, 14).
  EXPECT_EQ(out.find("f")->numbers, (std::vector<std::optional<double>>{4.0, 7.0}));
  EXPECT_EQ(out.find("g")->numbers, (std::vector<std::optional<double>>{4.0, 14.0}));
}

TEST(Augment, RejectsUnfittedAndCollisions) {
  const Dataset d({testing::num("a", {1, 2})}, testing::label_schema(), {0, 1});
  fdsl::FittedTransformation raw;
  raw.program = fdsl::parse("feature z = col(a)");
  EXPECT_THROW(augment(d, {raw}), FitError);
  EXPECT_THROW(augment(d, {fitted("feature a = col(a) + 1", d)}), DataError);
}

TEST(Augment, AssociativeOverConcatenation) {
  const Dataset d({testing::num("a", {1, NA, 3, 4}), testing::num("b", {2, 2, NA, 8})}, testing::label_schema(),
                  {0, 1, 0, 1});
  const auto rows = testing::all_rows(d);
  const auto sa = fdsl::fit(fdsl::parse("feature p = col(a) - trainmean(col(a))"), d, rows);
  const Dataset step = augment(d, {sa});
  const auto sb = fdsl::fit(fdsl::parse("feature q = coalesce(col(p), 0) * col(b)"), step, rows);
  const Dataset once = augment(d, {sa, sb});
  const Dataset twice = augment(augment(d, {sa}), {sb});
  ASSERT_EQ(once.num_columns(), twice.num_columns());
  for (std::size_t j = 0; j < once.num_columns(); ++j) EXPECT_EQ(once.column(j), twice.column(j));
}

TEST(SaveDataset, RoundTripWithExtendedSchema) {
  TempDir dir("roundtrip");
  const Dataset d({testing::num("age", {50.25, NA, 1e-7}), testing::cat("sex", {"F", std::nullopt, "a,b"}),
                   testing::temporal("hr@0h", "hr", 0, {80, 81, NA}), testing::temporal("hr@6h", "hr", 6, {90, NA, 70})},
                  testing::label_schema("dead"), {0, 1, 1});
  const Dataset aug = augment(d, {fitted("feature slope = gslope(hr) / 3", d)});
  save_dataset(aug, dir / "t.csv", dir / "s.json");
  const Dataset back = load_dataset(dir / "t.csv", dir / "s.json");
  ASSERT_EQ(back.num_columns(), aug.num_columns());
  for (std::size_t j = 0; j < aug.num_columns(); ++j) EXPECT_EQ(back.column(j), aug.column(j));
  EXPECT_EQ(std::vector<std::uint8_t>(back.labels().begin(), back.labels().end()),
            std::vector<std::uint8_t>(aug.labels().begin(), aug.labels().end()));
}

}  // namespace
}  // namespace medfeat
