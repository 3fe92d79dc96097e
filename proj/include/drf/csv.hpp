#pragma once

#include <filesystem>
#include <iosfwd>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace drf::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// RFC-4180 reader: quoted fields, doubled quotes, embedded separators and
/// newlines, CRLF or LF line endings. Every record must have header width.
Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

/// 17 significant digits, so the text parses back to the same double.
/// NaN is written as the missing-value token "NA".
std::string format_double(double value);

void write_row(std::ostream& out, std::span<const std::string> fields);
inline void write_row(std::ostream& out, std::initializer_list<std::string> fields) {
  write_row(out, std::span<const std::string>(fields.begin(), fields.size()));
}

}  // namespace drf::csv
