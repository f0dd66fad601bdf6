#pragma once

// Minimal comma-separated reader shared by the population and sample loaders.

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "hrsae/error.hpp"

namespace hrsae::detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    return std::nullopt;
  }
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw ParseError(lineno, "expected " + std::to_string(table.header.size()) +
                                   " fields, found " + std::to_string(cells.size()));
    }
    table.rows.push_back({lineno, std::move(cells)});
  }
  if (!have_header) throw DataError("CSV input is empty");
  return table;
}

inline double parse_double(const CsvRow& row, std::size_t col, const std::string& name) {
  const std::string& cell = row.cells[col];
  if (cell.empty()) throw ParseError(row.line, "empty value in column '" + name + "'");
  double v = 0.0;
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || p != cell.data() + cell.size()) {
    throw ParseError(row.line, "non-numeric value '" + cell + "' in column '" + name + "'");
  }
  return v;
}

inline std::int64_t parse_int(const CsvRow& row, std::size_t col, const std::string& name) {
  const std::string& cell = row.cells[col];
  if (cell.empty()) throw ParseError(row.line, "empty value in column '" + name + "'");
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || p != cell.data() + cell.size()) {
    throw ParseError(row.line, "non-integer value '" + cell + "' in column '" + name + "'");
  }
  return v;
}

}  // namespace hrsae::detail
