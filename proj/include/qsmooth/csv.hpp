#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace qsmooth {

using CsvCell = std::variant<double, std::string>;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<CsvCell>> rows;
};

/// Decimal with 9 significant digits.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Header line, then one line per row; every line newline-terminated.
inline void write_csv(std::ostream& os, const CsvTable& table) {
  auto line = [&](const auto& cells, auto&& fmt) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << ',';
      os << fmt(cells[i]);
    }
    os << '\n';
  };
  line(table.header, [](const std::string& s) { return s; });
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) {
      throw std::invalid_argument("CSV row width does not match header");
    }
    line(row, [](const CsvCell& c) {
      return std::holds_alternative<double>(c) ? format_number(std::get<double>(c))
                                               : std::get<std::string>(c);
    });
  }
}

}  // namespace qsmooth
