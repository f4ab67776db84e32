// SPDX-License-Identifier: Apache-2.0
// Internal helpers for the CSV and plain-text formats.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace carboneval::text {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

struct CsvRow {
  std::size_t line = 0;  // 1-based line number of the row in the file
  std::vector<std::string> fields;
};

// RFC 4180 style: comma separated, double-quoted fields may contain commas,
// quotes ("") and newlines. Blank lines are skipped. CRLF is accepted.
std::vector<CsvRow> parse_csv(std::string_view text);

std::string csv_escape(std::string_view field);

// Strict full-string number parse accepting scientific notation. Leading and
// trailing blanks are ignored; anything else makes it fail.
std::optional<double> parse_double(std::string_view s);

std::string trim(std::string_view s);

// Shortest representation that round-trips to the same double.
std::string shortest(double value);

// Fixed-point rendering with the given number of decimals.
std::string fixed(double value, int decimals);

}  // namespace carboneval::text
