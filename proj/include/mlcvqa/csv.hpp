#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mlcvqa::csv {

/// Minimal comma-separated table: no quoting, first non-comment line is the
/// header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// Lines starting with '#', without the marker.
  std::vector<std::string> comments;

  /// Index of a header column, or throws ParseError naming the file.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  std::string source;
};

Table read(const std::filesystem::path& path);
Table parse(std::string_view text, std::string source = "<memory>");

double to_double(std::string_view field, const Table& table, std::size_t row);
long long to_int(std::string_view field, const Table& table, std::size_t row);

/// Shortest representation that round-trips a double; "inf", "-inf", "nan"
/// for non-finite values.
std::string format_double(double value);

}  // namespace mlcvqa::csv
