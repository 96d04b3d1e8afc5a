#pragma once

// Synthetic clinical panel with a planted signal, used in place of restricted
// cohorts by the tests and the CLI.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "medfeat/datamodel.hpp"

namespace medfeat::synthdata {

enum class Planted { none, interaction, temporal_slope };

std::string_view to_string(Planted planted);
Planted planted_from_string(std::string_view text);

struct SynthSpec {
  std::size_t n_rows = 4000;
  std::size_t n_static_numeric = 6;
  std::size_t n_static_categorical = 1;
  std::size_t n_temporal_groups = 2;
  std::size_t group_length = 4;
  double missing_rate = 0.05;
  double positive_rate = 0.3;
  Planted planted = Planted::interaction;
  double noise_sd = 0.5;
  /// Logit scale of the planted signal.
  double signal_strength = 3.0;
  std::uint64_t seed = 0;
  /// Constant added to every static numeric mean (cross-cohort shift). The
  /// planted interaction is a fixed function of x0 and x1, so shifts and drift
  /// move the marginals without changing the outcome mechanism.
  double marginal_shift = 0.0;
  /// When > 0, a numeric "period" column (0..n_periods-1) is added and each
  /// static numeric mean moves by drift * period.
  std::size_t n_periods = 0;
  double drift = 0.0;
};

/// Throws ConfigError on out-of-domain fields.
void validate(const SynthSpec& spec);

struct GroundTruth {
  Planted planted = Planted::none;
  /// Columns the label depends on (the pair for interaction, the group members for slope).
  std::vector<std::string> columns;
  std::string group;
  double intercept = 0.0;
  std::string description;
};

struct SynthResult {
  Dataset dataset;
  GroundTruth truth;
};

SynthResult generate(const SynthSpec& spec);

/// Writes the table, its schema sidecar and a truth.json next to them.
void write(const SynthResult& result, const std::filesystem::path& table_path, const std::filesystem::path& schema_path);

}  // namespace medfeat::synthdata
