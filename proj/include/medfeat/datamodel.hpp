#pragma once

// Tabular binary-classification datasets: column schema, typed cells with
// first-class missing values, file ingestion, and stratified splitting.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace medfeat {

enum class ColumnKind { numeric, categorical, binary };

std::string_view to_string(ColumnKind kind);
ColumnKind column_kind_from_string(std::string_view text);

struct TemporalTag {
  std::string group_id;
  /// Hours, wave index, or any monotone time unit shared by the group.
  double time_offset = 0.0;

  bool operator==(const TemporalTag&) const = default;
};

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::string description;
  std::optional<TemporalTag> temporal_group;
  bool is_label = false;

  bool operator==(const ColumnSchema&) const = default;
};

/// Column declarations plus file-format settings.
struct Schema {
  static constexpr int kVersion = 1;

  std::vector<ColumnSchema> columns;
  std::string missing_token;
  char delimiter = ',';

  /// Throws DataError when any schema invariant is violated.
  void validate() const;
  const ColumnSchema* find(std::string_view name) const;
  const ColumnSchema& label() const;
};

Schema load_schema(const std::filesystem::path& path);
void save_schema(const Schema& schema, const std::filesystem::path& path);
std::string schema_to_json(const Schema& schema);
Schema schema_from_json(std::string_view text);

/// One feature column. Numeric and binary columns populate `numbers`,
/// categorical columns populate `tokens`; a disengaged optional is missing.
struct Column {
  ColumnSchema schema;
  std::vector<std::optional<double>> numbers;
  std::vector<std::optional<std::string>> tokens;

  std::size_t size() const;
  bool is_missing(std::size_t row) const;
  bool is_categorical() const { return schema.kind == ColumnKind::categorical; }

  static Column numeric(ColumnSchema schema, std::vector<std::optional<double>> values);
  static Column categorical(ColumnSchema schema, std::vector<std::optional<std::string>> values);

  bool operator==(const Column&) const = default;
};

/// Immutable table of feature columns and binary labels. Columns are held by
/// shared pointer so derived datasets (augmented, permuted) share storage.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Column> columns, ColumnSchema label, std::vector<std::uint8_t> labels);

  std::size_t num_rows() const { return labels_.size(); }
  std::size_t num_columns() const { return columns_.size(); }

  const Column& column(std::size_t index) const { return *columns_.at(index); }
  const Column* find(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  std::span<const std::uint8_t> labels() const { return labels_; }
  const ColumnSchema& label_schema() const { return label_; }

  /// Feature column schemas in column order (label excluded).
  std::vector<ColumnSchema> feature_schemas() const;
  /// Full schema: features in order, label last.
  Schema schema() const;

  Dataset with_column(Column column) const;
  Dataset with_replaced_column(std::size_t index, Column column) const;
  Dataset without_column(std::string_view name) const;
  Dataset select_rows(std::span<const std::size_t> rows) const;

 private:
  std::vector<std::shared_ptr<const Column>> columns_;
  ColumnSchema label_;
  std::vector<std::uint8_t> labels_;
};

/// Parses a delimiter-separated table against a schema sidecar.
Dataset load_dataset(const std::filesystem::path& table_path, const std::filesystem::path& schema_path);
Dataset parse_dataset(std::string_view table_text, const Schema& schema);

/// Writes the table and its sidecar; reloading yields identical cells.
void save_dataset(const Dataset& dataset, const std::filesystem::path& table_path,
                  const std::filesystem::path& schema_path);
std::string format_table(const Dataset& dataset, char delimiter = ',', std::string_view missing_token = "");

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  bool operator==(const SplitIndices&) const = default;
};

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Per-class largest-remainder allocation followed by a seeded shuffle. Each
/// part receives, per class, a count within 1 of its exact proportion.
SplitIndices stratified_split(const Dataset& dataset, SplitFractions fractions, std::uint64_t seed);

/// Per-class part sizes used by stratified_split; exposed for testing.
std::array<std::size_t, 3> allocate_class(std::size_t class_size, SplitFractions fractions);

struct FeatureGroup {
  std::string group_id;
  std::vector<std::string> member_columns;
  bool is_temporal = false;

  bool operator==(const FeatureGroup&) const = default;
};

/// One singleton group per static feature column and one group per temporal
/// group id (members ordered by time offset), in order of first appearance.
std::vector<FeatureGroup> feature_groups(std::span<const ColumnSchema> schema);
std::vector<FeatureGroup> feature_groups(const Dataset& dataset);

/// Temporal group members sorted by time offset; empty if the id is unknown.
std::vector<const ColumnSchema*> temporal_members(std::span<const ColumnSchema> schema, std::string_view group_id);

}  // namespace medfeat
