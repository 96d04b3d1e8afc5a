#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace medfeat {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Parses a full-string double; returns false on trailing garbage or overflow.
bool parse_double(std::string_view text, double& out);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Splits one record of delimiter-separated text, honouring double quotes.
std::vector<std::string> split_record(std::string_view line, char delimiter);
std::string quote_field(std::string_view field, char delimiter);

}  // namespace medfeat
