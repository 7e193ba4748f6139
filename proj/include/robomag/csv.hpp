#pragma once

// Comma-separated tables with a mandatory header row. Leading lines starting
// with '#' are metadata (artefacts carry "# robomag <json>" there).

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "robomag/core.hpp"

namespace robomag {

struct CsvTable {
  std::vector<std::string> comments;  // without the leading '#'
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column index by name; throws ParseError naming the missing column.
  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error(ErrorKind::ParseError, "missing column '" + name + "'");
  }
};

/// Shortest decimal representation that round-trips; '.' decimal separator.
inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline CsvTable parse_csv(std::istream& in, const std::string& source = "<csv>") {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = detail::trim(line);
    if (s.empty()) continue;
    if (s.front() == '#') {
      if (!have_header) t.comments.push_back(s.substr(1));
      continue;
    }
    auto cells = detail::split_commas(s);
    const std::string where = source + ":" + std::to_string(lineno);
    if (!have_header) {
      for (const auto& c : cells) {
        if (c.empty()) throw Error(ErrorKind::ParseError, where + ": empty header cell");
        double dummy;
        const auto r = std::from_chars(c.data(), c.data() + c.size(), dummy);
        if (r.ec == std::errc() && r.ptr == c.data() + c.size())
          throw Error(ErrorKind::ParseError, where + ": header row required, found numbers");
      }
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(ErrorKind::ParseError, where + ": expected " + std::to_string(t.header.size()) + " fields, found " +
                                             std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      double v = 0.0;
      const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
      if (c.empty() || r.ec != std::errc() || r.ptr != c.data() + c.size())
        throw Error(ErrorKind::ParseError, where + ": column '" + t.header[i] + "': not a number: '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(ErrorKind::ParseError, source + ": no header row");
  return t;
}

inline CsvTable load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, path.string() + ": cannot open");
  return parse_csv(in, path.string());
}

inline void write_csv(std::ostream& out, const CsvTable& t) {
  for (const auto& c : t.comments) out << '#' << c << '\n';
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
    out << '\n';
  }
}

}  // namespace robomag
