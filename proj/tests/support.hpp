#pragma once

// Small fixture builders shared by the test suites.

#include <cmath>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "medfeat/datamodel.hpp"

namespace medfeat::testing {

inline constexpr std::optional<double> NA = std::nullopt;

inline ColumnSchema numeric_schema(std::string name) {
  return ColumnSchema{std::move(name), ColumnKind::numeric, "", std::nullopt, false};
}

inline ColumnSchema temporal_schema(std::string name, std::string group, double offset) {
  return ColumnSchema{std::move(name), ColumnKind::numeric, "", TemporalTag{std::move(group), offset}, false};
}

inline ColumnSchema label_schema(std::string name = "y") {
  return ColumnSchema{std::move(name), ColumnKind::binary, "", std::nullopt, true};
}

inline Column num(std::string name, std::vector<std::optional<double>> values) {
  return Column::numeric(numeric_schema(std::move(name)), std::move(values));
}

inline Column temporal(std::string name, std::string group, double offset, std::vector<std::optional<double>> values) {
  return Column::numeric(temporal_schema(std::move(name), std::move(group), offset), std::move(values));
}

inline Column cat(std::string name, std::vector<std::optional<std::string>> values) {
  return Column::categorical(ColumnSchema{std::move(name), ColumnKind::categorical, "", std::nullopt, false},
                             std::move(values));
}

inline std::vector<std::size_t> all_rows(const Dataset& d) {
  std::vector<std::size_t> rows(d.num_rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

inline std::vector<std::size_t> iota(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> rows;
  for (std::size_t i = begin; i < end; ++i) rows.push_back(i);
  return rows;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("medfeat_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace medfeat::testing
