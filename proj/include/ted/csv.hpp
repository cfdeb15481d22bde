#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ted/error.hpp"

namespace ted::csv {

/// Fixed formatting so logs are byte-reproducible.
inline std::string number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string number(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

inline std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;  // 1-based source line of each row

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError(1, "missing column '" + name + "'");
  }

  std::optional<std::size_t> find_column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }

  /// Numeric cell; empty cells yield nullopt.
  std::optional<double> value(std::size_t row, std::size_t col) const {
    const auto& s = rows.at(row).at(col);
    if (s.empty()) return std::nullopt;
    try {
      std::size_t pos = 0;
      double d = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return d;
    } catch (const std::exception&) {
      throw ParseError(row_lines.at(row), "non-numeric field '" + s + "'");
    }
  }
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline Table parse(std::istream& is) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ParseError(lineno, "expected " + std::to_string(t.header.size()) + " fields, found " +
                                   std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.row_lines.push_back(lineno);
  }
  if (t.header.empty()) throw ParseError(lineno, "missing header row");
  return t;
}

inline Table read(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return parse(is);
}

}  // namespace ted::csv
