#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "patchflow/errors.hpp"

namespace patchflow::io {

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, end);
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    // from_chars rejects "inf"/"nan" spellings some writers emit.
    if (s == "inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-inf" || s == "-Infinity") return -std::numeric_limits<double>::infinity();
    return std::nullopt;
  }
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  return out;
}

/// Comma-separated table with a mandatory header row. Blank lines and lines
/// starting with '#' are skipped.
class CsvTable {
 public:
  struct Row {
    std::size_t line;
    std::vector<std::string> cells;
  };

  static CsvTable read(const std::string& path) {
    auto in = open_in(path);
    CsvTable t;
    t.path_ = path;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
      ++lineno;
      const auto s = trim(line);
      if (s.empty() || s.front() == '#') continue;
      auto cells = split(s, ',');
      if (!have_header) {
        for (std::size_t i = 0; i < cells.size(); ++i) t.columns_[std::string(cells[i])] = i;
        t.header_.assign(cells.begin(), cells.end());
        have_header = true;
        continue;
      }
      if (cells.size() != t.header_.size()) {
        throw ParseError(path, lineno,
                         "expected " + std::to_string(t.header_.size()) + " fields, got " + std::to_string(cells.size()));
      }
      t.rows_.push_back({lineno, std::vector<std::string>(cells.begin(), cells.end())});
    }
    if (!have_header) throw ParseError(path, 0, "missing header row");
    return t;
  }

  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<std::string>& header() const { return header_; }
  const std::string& path() const { return path_; }
  bool has(const std::string& col) const { return columns_.count(col) != 0; }

  std::size_t column(const std::string& col) const {
    const auto it = columns_.find(col);
    if (it == columns_.end()) throw SchemaError(col, "missing column in " + path_);
    return it->second;
  }

  double number(const Row& r, std::size_t col, const std::string& name) const {
    const auto v = parse_double(r.cells[col]);
    if (!v) throw ParseError(path_, r.line, "field '" + name + "' is not a number: '" + r.cells[col] + "'");
    return *v;
  }

  long long integer(const Row& r, std::size_t col, const std::string& name) const {
    const auto v = parse_int(r.cells[col]);
    if (!v) throw ParseError(path_, r.line, "field '" + name + "' is not an integer: '" + r.cells[col] + "'");
    return *v;
  }

 private:
  std::string path_;
  std::vector<std::string> header_;
  std::map<std::string, std::size_t> columns_;
  std::vector<Row> rows_;
};

}  // namespace patchflow::io
