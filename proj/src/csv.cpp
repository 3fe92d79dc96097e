#include "drf/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "drf/error.hpp"

namespace drf::csv {

namespace {

// Returns false at end of input. Fields are appended to `record`.
bool read_record(std::istream& in, std::vector<std::string>& record, std::size_t& line) {
  record.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  bool quoted = false;
  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    const char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      if (!field.empty())
        throw Error(ErrorCode::parse_error,
                    "csv: stray quote inside unquoted field on line " + std::to_string(line));
      in_quotes = true;
      quoted = true;
    } else if (ch == ',') {
      record.push_back(std::move(field));
      field.clear();
      quoted = false;
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get();
      ++line;
      record.push_back(std::move(field));
      return true;
    } else if (ch == '\n') {
      ++line;
      record.push_back(std::move(field));
      return true;
    } else {
      if (quoted)
        throw Error(ErrorCode::parse_error,
                    "csv: characters after closing quote on line " + std::to_string(line));
      field.push_back(ch);
    }
  }
  if (in_quotes) throw Error(ErrorCode::parse_error, "csv: unterminated quoted field");
  if (!any) return false;
  record.push_back(std::move(field));
  return true;
}

}  // namespace

Table read(std::istream& in) {
  Table table;
  std::size_t line = 1;
  std::vector<std::string> record;
  if (!read_record(in, record, line)) throw Error(ErrorCode::parse_error, "csv: empty input");
  table.header = record;
  while (read_record(in, record, line)) {
    if (record.size() == 1 && record[0].empty()) continue;  // blank line
    if (record.size() != table.header.size())
      throw Error(ErrorCode::parse_error, "csv: record on line " + std::to_string(line - 1) +
                                              " has " + std::to_string(record.size()) +
                                              " fields, header has " +
                                              std::to_string(table.header.size()));
    table.rows.push_back(record);
  }
  return table;
}

Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return read(in);
}

std::string format_double(double value) {
  if (std::isnan(value)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_row(std::ostream& out, std::span<const std::string> fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      out << f;
      continue;
    }
    out << '"';
    for (char c : f) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  }
  out << '\n';
}

}  // namespace drf::csv
