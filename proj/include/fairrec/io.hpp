#pragma once

#include "fairrec/common.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace fairrec::io {

// Splits one CSV line on commas. Quoting is not supported; none of the file
// formats here carry embedded commas.
std::vector<std::string_view> split_csv(std::string_view line);

// Reads a CSV file line by line, skipping blank lines. The header row is
// passed to on_header, every following row to on_row with its 1-based line
// number.
void read_csv(const std::filesystem::path& path,
              const std::function<void(const std::vector<std::string_view>&)>& on_header,
              const std::function<void(const std::vector<std::string_view>&, std::size_t)>& on_row);

long long parse_int(std::string_view s, const std::string& file, std::size_t line);
double parse_double(std::string_view s, const std::string& file, std::size_t line);

// Shortest round-trip representation of a double.
std::string format_double(double v);

// Writes through a temporary sibling file and renames it into place.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace fairrec::io
