#include "medfeat/explain.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/metrics.hpp"
#include "medfeat/random.hpp"

namespace medfeat::explain {

std::vector<std::string> ImportanceVector::ranked() const {
  std::vector<std::string> out(entries.size());
  for (const auto& [group, entry] : entries) {
    if (entry.rank >= 1 && static_cast<std::size_t>(entry.rank) <= out.size()) out[entry.rank - 1] = group;
  }
  return out;
}

ImportanceVector normalize(const std::map<std::string, double>& raw) {
  ImportanceVector out;
  double total = 0.0;
  for (const auto& [group, value] : raw) {
    if (!(value >= 0.0)) throw DataError("raw importance of '" + group + "' is negative or NaN");
    total += value;
  }
  const double uniform = raw.empty() ? 0.0 : 1.0 / static_cast<double>(raw.size());
  for (const auto& [group, value] : raw) {
    out.entries[group] = ImportanceEntry{value, total > 0.0 ? value / total : uniform, 0};
  }
  std::vector<std::string> order;
  for (const auto& [group, value] : raw) order.push_back(group);
  // Map iteration is already name-ordered, so a stable sort breaks ties by name.
  std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) { return raw.at(a) > raw.at(b); });
  for (std::size_t i = 0; i < order.size(); ++i) out.entries[order[i]].rank = static_cast<int>(i + 1);
  return out;
}

ImportanceVector normalize(const ImportanceVector& importance) {
  std::map<std::string, double> raw;
  for (const auto& [group, entry] : importance.entries) raw[group] = entry.raw;
  return normalize(raw);
}

ImportanceVector grouped_permutation_importance(const learners::Model& model, const Dataset& dataset,
                                                std::span<const std::size_t> val_rows,
                                                std::span<const FeatureGroup> groups, int repeats, std::uint64_t seed) {
  if (repeats < 1) throw ConfigError("permutation repeats must be at least 1");
  std::vector<std::uint8_t> labels;
  labels.reserve(val_rows.size());
  for (auto r : val_rows) labels.push_back(dataset.labels()[r]);
  const double reference = metrics::auc(model.predict_scores(dataset, val_rows), labels);

  const auto& used = model.input_columns();
  const std::set<std::string> used_set(used.begin(), used.end());

  std::map<std::string, double> raw;
  for (const auto& group : groups) {
    std::vector<std::size_t> members;
    for (const auto& name : group.member_columns) {
      if (!used_set.count(name)) continue;
      const auto index = dataset.index_of(name);
      if (!index) throw DataError("group member '" + name + "' absent from dataset");
      members.push_back(*index);
    }
    if (members.empty()) {
      raw[group.group_id] = 0.0;
      continue;
    }
    double total = 0.0;
    for (int repeat = 0; repeat < repeats; ++repeat) {
      std::vector<std::size_t> perm(val_rows.begin(), val_rows.end());
      Rng rng(mix_seed(seed, fnv1a(group.group_id), static_cast<std::uint64_t>(repeat)));
      rng.shuffle(std::span<std::size_t>(perm));
      // Row val_rows[i] receives the member cells of row perm[i], the same permutation for every member.
      Dataset permuted = dataset;
      for (auto index : members) {
        Column col = dataset.column(index);
        const Column& source = dataset.column(index);
        for (std::size_t i = 0; i < val_rows.size(); ++i) {
          if (col.is_categorical()) {
            col.tokens[val_rows[i]] = source.tokens[perm[i]];
          } else {
            col.numbers[val_rows[i]] = source.numbers[perm[i]];
          }
        }
        permuted = permuted.with_replaced_column(index, std::move(col));
      }
      const double shuffled = metrics::auc(model.predict_scores(permuted, val_rows), labels);
      total += std::max(0.0, reference - shuffled);
    }
    raw[group.group_id] = total / repeats;
  }
  return normalize(raw);
}

PermutationExplainer::PermutationExplainer(int repeats) : repeats_(repeats) {
  if (repeats < 1) throw ConfigError("permutation repeats must be at least 1");
}

ImportanceVector PermutationExplainer::explain(const learners::Model& model, const Dataset& dataset,
                                               std::span<const std::size_t> val_rows,
                                               std::span<const FeatureGroup> groups, std::uint64_t seed) const {
  return grouped_permutation_importance(model, dataset, val_rows, groups, repeats_, seed);
}

double ImportanceReport::top_k_generated_fraction(std::size_t k) const {
  const std::size_t n = std::min(k, entries.size());
  if (n == 0) return 0.0;
  std::size_t generated = 0;
  for (std::size_t i = 0; i < n; ++i) generated += entries[i].generated ? 1 : 0;
  return static_cast<double>(generated) / static_cast<double>(n);
}

ImportanceReport importance_report(const ImportanceVector& importance, const fdsl::TransformationSet& sigma) {
  std::set<std::string> generated;
  for (const auto& t : sigma) generated.insert(t.program.name);
  ImportanceReport report;
  for (const auto& group : importance.ranked()) {
    const auto& e = importance.entries.at(group);
    report.entries.push_back(ReportEntry{e.rank, group, e.raw, e.normalized, generated.count(group) > 0});
  }
  return report;
}

std::string to_json(const ImportanceVector& importance) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [group, e] : importance.entries) {
    doc[group] = {{"raw", e.raw}, {"normalized", e.normalized}, {"rank", e.rank}};
  }
  return doc.dump(1) + "\n";
}

ImportanceVector importance_from_json(std::string_view text) {
  ImportanceVector out;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& [group, e] : doc.items()) {
      out.entries[group] =
          ImportanceEntry{e.at("raw").get<double>(), e.at("normalized").get<double>(), e.at("rank").get<int>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed importance document: ") + e.what());
  }
  return out;
}

std::string to_json(const ImportanceReport& report) {
  auto entries = nlohmann::json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"rank", e.rank},
                       {"group", e.group},
                       {"raw", e.raw},
                       {"normalized", e.normalized},
                       {"generated", e.generated}});
  }
  nlohmann::json doc;
  doc["entries"] = std::move(entries);
  doc["top10_generated_fraction"] = report.top_k_generated_fraction(10);
  return doc.dump(1) + "\n";
}

ImportanceReport report_from_json(std::string_view text) {
  ImportanceReport out;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& e : doc.at("entries")) {
      out.entries.push_back(ReportEntry{e.at("rank").get<int>(), e.at("group").get<std::string>(),
                                        e.at("raw").get<double>(), e.at("normalized").get<double>(),
                                        e.at("generated").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed importance report: ") + e.what());
  }
  return out;
}

}  // namespace medfeat::explain
