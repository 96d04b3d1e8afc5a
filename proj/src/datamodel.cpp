#include "medfeat/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/random.hpp"
#include "medfeat/text.hpp"

namespace medfeat {

using nlohmann::json;

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::binary: return "binary";
  }
  return "numeric";
}

ColumnKind column_kind_from_string(std::string_view text) {
  if (text == "numeric") return ColumnKind::numeric;
  if (text == "categorical") return ColumnKind::categorical;
  if (text == "binary") return ColumnKind::binary;
  throw DataError("unknown column kind '" + std::string(text) + "'");
}

// --- Schema -----------------------------------------------------------------

void Schema::validate() const {
  std::set<std::string, std::less<>> names;
  std::size_t labels = 0;
  std::map<std::string, std::vector<double>> groups;
  for (const auto& col : columns) {
    if (col.name.empty()) throw DataError("column with empty name");
    if (!names.insert(col.name).second) throw DataError("duplicate column '" + col.name + "'");
    if (col.is_label) {
      ++labels;
      if (col.kind != ColumnKind::binary) throw DataError("label column '" + col.name + "' must be binary");
      if (col.temporal_group) throw DataError("label column '" + col.name + "' cannot be temporal");
    }
    if (col.temporal_group) {
      if (col.kind != ColumnKind::numeric) {
        throw DataError("temporal group member '" + col.name + "' must be numeric");
      }
      if (!std::isfinite(col.temporal_group->time_offset)) {
        throw DataError("temporal group member '" + col.name + "' has a non-finite time offset");
      }
      groups[col.temporal_group->group_id].push_back(col.temporal_group->time_offset);
    }
  }
  if (labels != 1) throw DataError("schema must declare exactly one label column");
  for (auto& [id, offsets] : groups) {
    if (names.count(id) != 0) throw DataError("temporal group id '" + id + "' collides with a column name");
    if (offsets.size() < 2) throw DataError("temporal group '" + id + "' has fewer than 2 members");
    std::sort(offsets.begin(), offsets.end());
    if (std::adjacent_find(offsets.begin(), offsets.end()) != offsets.end()) {
      throw DataError("temporal group '" + id + "' has duplicate time offsets");
    }
  }
}

const ColumnSchema* Schema::find(std::string_view name) const {
  for (const auto& col : columns) {
    if (col.name == name) return &col;
  }
  return nullptr;
}

const ColumnSchema& Schema::label() const {
  for (const auto& col : columns) {
    if (col.is_label) return col;
  }
  throw DataError("missing label column");
}

std::string schema_to_json(const Schema& schema) {
  json doc;
  doc["schema_version"] = Schema::kVersion;
  doc["delimiter"] = std::string(1, schema.delimiter);
  doc["missing_token"] = schema.missing_token;
  json cols = json::array();
  for (const auto& col : schema.columns) {
    json entry;
    entry["name"] = col.name;
    entry["kind"] = std::string(to_string(col.kind));
    entry["description"] = col.description;
    entry["is_label"] = col.is_label;
    if (col.temporal_group) {
      entry["temporal_group"] = {{"group_id", col.temporal_group->group_id},
                                 {"time_offset", col.temporal_group->time_offset}};
    } else {
      entry["temporal_group"] = nullptr;
    }
    cols.push_back(std::move(entry));
  }
  doc["columns"] = std::move(cols);
  return doc.dump(2) + "\n";
}

Schema schema_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("schema is not valid JSON: ") + e.what());
  }
  if (!doc.contains("schema_version") || doc["schema_version"] != Schema::kVersion) {
    throw DataError("unsupported schema_version (expected 1)");
  }
  Schema schema;
  try {
    if (doc.contains("delimiter")) {
      const auto delim = doc["delimiter"].get<std::string>();
      if (delim.size() != 1) throw DataError("delimiter must be a single character");
      schema.delimiter = delim[0];
    }
    schema.missing_token = doc.value("missing_token", std::string{});
    for (const auto& entry : doc.at("columns")) {
      ColumnSchema col;
      col.name = entry.at("name").get<std::string>();
      col.kind = column_kind_from_string(entry.at("kind").get<std::string>());
      col.description = entry.value("description", std::string{});
      col.is_label = entry.value("is_label", false);
      if (entry.contains("temporal_group") && !entry["temporal_group"].is_null()) {
        const auto& tg = entry["temporal_group"];
        col.temporal_group = TemporalTag{tg.at("group_id").get<std::string>(), tg.at("time_offset").get<double>()};
      }
      schema.columns.push_back(std::move(col));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed schema: ") + e.what());
  }
  schema.validate();
  return schema;
}

Schema load_schema(const std::filesystem::path& path) { return schema_from_json(read_file(path)); }

void save_schema(const Schema& schema, const std::filesystem::path& path) {
  write_file(path, schema_to_json(schema));
}

// --- Column / Dataset -------------------------------------------------------

std::size_t Column::size() const { return is_categorical() ? tokens.size() : numbers.size(); }

bool Column::is_missing(std::size_t row) const {
  return is_categorical() ? !tokens[row].has_value() : !numbers[row].has_value();
}

Column Column::numeric(ColumnSchema schema, std::vector<std::optional<double>> values) {
  Column col;
  col.schema = std::move(schema);
  col.numbers = std::move(values);
  return col;
}

Column Column::categorical(ColumnSchema schema, std::vector<std::optional<std::string>> values) {
  Column col;
  col.schema = std::move(schema);
  col.schema.kind = ColumnKind::categorical;
  col.tokens = std::move(values);
  return col;
}

Dataset::Dataset(std::vector<Column> columns, ColumnSchema label, std::vector<std::uint8_t> labels)
    : label_(std::move(label)), labels_(std::move(labels)) {
  label_.is_label = true;
  for (auto v : labels_) {
    if (v > 1) throw DataError("labels must be 0 or 1");
  }
  std::set<std::string, std::less<>> names{label_.name};
  for (auto& col : columns) {
    if (col.schema.is_label) throw DataError("feature column '" + col.schema.name + "' flagged as label");
    if (!names.insert(col.schema.name).second) throw DataError("duplicate column '" + col.schema.name + "'");
    if (col.size() != labels_.size()) throw DataError("column '" + col.schema.name + "' has wrong row count");
    for (const auto& v : col.numbers) {
      if (v && !std::isfinite(*v)) throw DataError("non-finite cell in column '" + col.schema.name + "'");
    }
    columns_.push_back(std::make_shared<const Column>(std::move(col)));
  }
}

const Column* Dataset::find(std::string_view name) const {
  for (const auto& col : columns_) {
    if (col->schema.name == name) return col.get();
  }
  return nullptr;
}

std::optional<std::size_t> Dataset::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i]->schema.name == name) return i;
  }
  return std::nullopt;
}

std::vector<ColumnSchema> Dataset::feature_schemas() const {
  std::vector<ColumnSchema> out;
  out.reserve(columns_.size());
  for (const auto& col : columns_) out.push_back(col->schema);
  return out;
}

Schema Dataset::schema() const {
  Schema schema;
  schema.columns = feature_schemas();
  schema.columns.push_back(label_);
  return schema;
}

Dataset Dataset::with_column(Column column) const {
  if (column.size() != num_rows()) throw DataError("column '" + column.schema.name + "' has wrong row count");
  if (find(column.schema.name) != nullptr || column.schema.name == label_.name) {
    throw DataError("name collision: column '" + column.schema.name + "' already exists");
  }
  Dataset out = *this;
  out.columns_.push_back(std::make_shared<const Column>(std::move(column)));
  return out;
}

Dataset Dataset::with_replaced_column(std::size_t index, Column column) const {
  if (column.size() != num_rows()) throw DataError("column '" + column.schema.name + "' has wrong row count");
  Dataset out = *this;
  out.columns_.at(index) = std::make_shared<const Column>(std::move(column));
  return out;
}

Dataset Dataset::without_column(std::string_view name) const {
  Dataset out = *this;
  std::erase_if(out.columns_, [&](const auto& col) { return col->schema.name == name; });
  return out;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> cols;
  cols.reserve(columns_.size());
  for (const auto& src : columns_) {
    Column col;
    col.schema = src->schema;
    if (src->is_categorical()) {
      col.tokens.reserve(rows.size());
      for (auto r : rows) col.tokens.push_back(src->tokens.at(r));
    } else {
      col.numbers.reserve(rows.size());
      for (auto r : rows) col.numbers.push_back(src->numbers.at(r));
    }
    cols.push_back(std::move(col));
  }
  std::vector<std::uint8_t> labels;
  labels.reserve(rows.size());
  for (auto r : rows) labels.push_back(labels_.at(r));
  return Dataset(std::move(cols), label_, std::move(labels));
}

// --- File ingestion ---------------------------------------------------------

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

Dataset parse_dataset(std::string_view table_text, const Schema& schema) {
  schema.validate();
  auto lines = split_lines(table_text);
  if (lines.empty()) throw DataError("table has no header row");
  std::string_view header_line = lines[0];
  if (header_line.size() >= 3 && header_line.substr(0, 3) == "\xEF\xBB\xBF") header_line.remove_prefix(3);
  const auto header = split_record(header_line, schema.delimiter);

  std::vector<const ColumnSchema*> declared;
  for (const auto& name : header) {
    const auto* col = schema.find(name);
    if (col == nullptr) throw DataError("undeclared column '" + name + "'");
    declared.push_back(col);
  }
  for (const auto& col : schema.columns) {
    if (std::find(header.begin(), header.end(), col.name) == header.end()) {
      throw DataError("undeclared column '" + col.name + "': declared in schema but absent from header");
    }
  }
  std::set<std::string> seen;
  for (const auto& name : header) {
    if (!seen.insert(name).second) throw DataError("duplicate header column '" + name + "'");
  }

  const std::size_t n_rows = lines.size() - 1;
  std::vector<Column> columns;
  std::vector<std::uint8_t> labels;
  labels.reserve(n_rows);
  std::size_t label_pos = 0;
  std::vector<std::size_t> feature_pos;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (declared[j]->is_label) {
      label_pos = j;
      continue;
    }
    Column col;
    col.schema = *declared[j];
    feature_pos.push_back(j);
    columns.push_back(std::move(col));
  }

  auto is_missing_text = [&](const std::string& cell) {
    return cell.empty() || (!schema.missing_token.empty() && cell == schema.missing_token);
  };

  for (std::size_t i = 0; i < n_rows; ++i) {
    const auto fields = split_record(lines[i + 1], schema.delimiter);
    if (fields.size() != header.size()) {
      throw DataError("row " + std::to_string(i + 1) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    {
      const auto& cell = fields[label_pos];
      if (cell == "0") {
        labels.push_back(0);
      } else if (cell == "1") {
        labels.push_back(1);
      } else {
        throw DataError("row " + std::to_string(i + 1) + ": label must be 0 or 1, got '" + cell + "'");
      }
    }
    for (std::size_t c = 0; c < feature_pos.size(); ++c) {
      const auto& cell = fields[feature_pos[c]];
      auto& col = columns[c];
      if (col.is_categorical()) {
        col.tokens.push_back(is_missing_text(cell) ? std::nullopt : std::optional<std::string>(cell));
        continue;
      }
      if (is_missing_text(cell)) {
        col.numbers.push_back(std::nullopt);
        continue;
      }
      double value = 0.0;
      if (!parse_double(cell, value)) {
        throw DataError("row " + std::to_string(i + 1) + ": non-parsable numeric cell '" + cell + "' in column '" +
                        col.schema.name + "'");
      }
      if (col.schema.kind == ColumnKind::binary && value != 0.0 && value != 1.0) {
        throw DataError("row " + std::to_string(i + 1) + ": binary column '" + col.schema.name + "' holds '" + cell +
                        "'");
      }
      col.numbers.push_back(value);
    }
  }
  return Dataset(std::move(columns), *declared[label_pos], std::move(labels));
}

Dataset load_dataset(const std::filesystem::path& table_path, const std::filesystem::path& schema_path) {
  return parse_dataset(read_file(table_path), load_schema(schema_path));
}

std::string format_table(const Dataset& dataset, char delimiter, std::string_view missing_token) {
  std::ostringstream out;
  for (std::size_t j = 0; j < dataset.num_columns(); ++j) {
    out << quote_field(dataset.column(j).schema.name, delimiter) << delimiter;
  }
  out << quote_field(dataset.label_schema().name, delimiter) << '\n';
  for (std::size_t i = 0; i < dataset.num_rows(); ++i) {
    for (std::size_t j = 0; j < dataset.num_columns(); ++j) {
      const auto& col = dataset.column(j);
      if (col.is_missing(i)) {
        out << missing_token;
      } else if (col.is_categorical()) {
        out << quote_field(*col.tokens[i], delimiter);
      } else {
        out << format_double(*col.numbers[i]);
      }
      out << delimiter;
    }
    out << static_cast<int>(dataset.labels()[i]) << '\n';
  }
  return out.str();
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& table_path,
                  const std::filesystem::path& schema_path) {
  Schema schema = dataset.schema();
  write_file(table_path, format_table(dataset, schema.delimiter, schema.missing_token));
  save_schema(schema, schema_path);
}

// --- Splitting --------------------------------------------------------------

std::array<std::size_t, 3> allocate_class(std::size_t class_size, SplitFractions fractions) {
  const std::array<double, 3> frac{fractions.train, fractions.val, fractions.test};
  std::array<double, 3> exact{};
  std::array<std::size_t, 3> count{};
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    exact[p] = static_cast<double>(class_size) * frac[p];
    count[p] = static_cast<std::size_t>(std::floor(exact[p]));
    assigned += count[p];
  }
  // Largest remainder; ties go to the earlier part.
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return exact[a] - static_cast<double>(count[a]) > exact[b] - static_cast<double>(count[b]);
  });
  for (std::size_t k = 0; assigned < class_size; ++k, ++assigned) ++count[order[k % 3]];

  return count;
}

SplitIndices stratified_split(const Dataset& dataset, SplitFractions fractions, std::uint64_t seed) {
  const std::array<double, 3> frac{fractions.train, fractions.val, fractions.test};
  for (double f : frac) {
    if (!(f > 0.0)) throw DataError("split fractions must be positive");
  }
  if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9) throw DataError("split fractions must sum to 1");

  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < dataset.num_rows(); ++i) by_class[dataset.labels()[i]].push_back(i);

  std::array<std::array<std::size_t, 3>, 2> counts{};
  std::array<std::array<double, 3>, 2> exact{};
  for (int cls = 0; cls < 2; ++cls) {
    if (by_class[cls].size() < 3) {
      throw DataError("class " + std::to_string(cls) + " has " + std::to_string(by_class[cls].size()) +
                      " members, fewer than the 3 split parts");
    }
    counts[cls] = allocate_class(by_class[cls].size(), fractions);
    for (std::size_t p = 0; p < 3; ++p) exact[cls][p] = static_cast<double>(by_class[cls].size()) * frac[p];
  }
  // A part left empty by both classes takes one member from a part holding more
  // than its exact share, which keeps every count within 1 of proportion.
  for (std::size_t p = 0; p < 3; ++p) {
    if (counts[0][p] + counts[1][p] != 0) continue;
    bool moved = false;
    for (int cls = 0; cls < 2 && !moved; ++cls) {
      for (std::size_t q = 0; q < 3 && !moved; ++q) {
        if (q == p || static_cast<double>(counts[cls][q]) <= exact[cls][q]) continue;
        if (counts[0][q] + counts[1][q] < 2) continue;
        --counts[cls][q];
        ++counts[cls][p];
        moved = true;
      }
    }
  }

  SplitIndices split;
  std::array<std::vector<std::size_t>*, 3> parts{&split.train, &split.val, &split.test};
  for (int cls = 0; cls < 2; ++cls) {
    auto& members = by_class[cls];
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
    rng.shuffle(std::span<std::size_t>(members));
    std::size_t offset = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      parts[p]->insert(parts[p]->end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                       members.begin() + static_cast<std::ptrdiff_t>(offset + counts[cls][p]));
      offset += counts[cls][p];
    }
  }
  for (auto* part : parts) {
    if (part->empty()) throw DataError("split produced an empty part");
    std::sort(part->begin(), part->end());
  }
  return split;
}

// --- Feature groups ---------------------------------------------------------

std::vector<const ColumnSchema*> temporal_members(std::span<const ColumnSchema> schema, std::string_view group_id) {
  std::vector<const ColumnSchema*> members;
  for (const auto& col : schema) {
    if (!col.is_label && col.temporal_group && col.temporal_group->group_id == group_id) members.push_back(&col);
  }
  std::stable_sort(members.begin(), members.end(), [](const ColumnSchema* a, const ColumnSchema* b) {
    return a->temporal_group->time_offset < b->temporal_group->time_offset;
  });
  return members;
}

std::vector<FeatureGroup> feature_groups(std::span<const ColumnSchema> schema) {
  std::vector<FeatureGroup> groups;
  std::set<std::string> seen_temporal;
  for (const auto& col : schema) {
    if (col.is_label) continue;
    if (!col.temporal_group) {
      groups.push_back(FeatureGroup{col.name, {col.name}, false});
      continue;
    }
    const auto& id = col.temporal_group->group_id;
    if (!seen_temporal.insert(id).second) continue;
    FeatureGroup group{id, {}, true};
    for (const auto* member : temporal_members(schema, id)) group.member_columns.push_back(member->name);
    groups.push_back(std::move(group));
  }
  return groups;
}

std::vector<FeatureGroup> feature_groups(const Dataset& dataset) {
  const auto schemas = dataset.feature_schemas();
  return feature_groups(std::span<const ColumnSchema>(schemas));
}

}  // namespace medfeat
