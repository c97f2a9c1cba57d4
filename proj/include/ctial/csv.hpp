#pragma once

// Minimal strict CSV: UTF-8, comma separator, one header row, '.' decimal
// separator, no quoting. Ragged rows and malformed numbers are reported with
// 1-based line and column positions.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ctial/common.hpp"

namespace ctial {

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return header.size(); }

  /// Column position by header name; throws if absent.
  std::size_t column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw ParseError(path, 1, 0, "column '" + name + "' not found in header");
  }

  bool has_column(const std::string& name) const {
    for (const auto& h : header)
      if (h == name) return true;
    return false;
  }

  /// Numeric cell value; row is 0-based data row index.
  double numeric(std::size_t row, std::size_t col) const {
    const std::string& cell = rows[row][col];
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end)
      throw ParseError(path, row + 2, col + 1,
                       "expected a number, got '" + cell + "'");
    return value;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  out.push_back(field);
  return out;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);

  CsvTable table;
  table.path = path;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    auto fields = detail::split_csv_line(line);
    if (line_no == 1) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size())
      throw ParseError(path, line_no, 0,
                       "ragged row: expected " + std::to_string(table.header.size()) +
                           " fields, got " + std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  if (line_no == 0) throw ParseError(path, 0, 0, "empty file");
  return table;
}

/// Parses every data cell of the table as a number. Shape: rows x columns.
inline Matrix csv_numeric_matrix(const CsvTable& table) {
  Matrix m(static_cast<Index>(table.n_rows()), static_cast<Index>(table.n_cols()));
  for (std::size_t r = 0; r < table.n_rows(); ++r)
    for (std::size_t c = 0; c < table.n_cols(); ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = table.numeric(r, c);
  return m;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open file for writing: " + path);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c > 0) out << ',';
    out << header[c];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out << ',';
      out << row[c];
    }
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

}  // namespace ctial
