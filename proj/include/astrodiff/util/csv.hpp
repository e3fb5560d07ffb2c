#pragma once
// Minimal CSV support for manifests, logs and metric tables. Fields are
// paths/numbers/enum names, so no quoting is needed; readers tolerate CRLF.
// Numeric formatting helpers are centralized here so reruns stay
// byte-identical.

#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace astrodiff::util {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string to_csv(const CsvTable& t) {
  std::string out;
  auto emit_row = [&out](const std::vector<std::string>& row) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  };
  emit_row(t.header);
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size())
      throw std::runtime_error("csv: row width " + std::to_string(r.size()) +
                               " != header width " + std::to_string(t.header.size()));
    emit_row(r);
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size())
        throw std::runtime_error("csv: malformed row '" + line + "'");
      t.rows.push_back(std::move(fields));
    }
  }
  if (first) throw std::runtime_error("csv: empty input");
  return t;
}

inline int csv_col(const CsvTable& t, const std::string& name) {
  for (size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == name) return static_cast<int>(i);
  throw std::runtime_error("csv: missing column '" + name + "'");
}

// scientific, 3 significant digits (cn2 values in manifests)
inline std::string fmt_sci3(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

inline std::string fmt_f6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string fmt_g12(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::runtime_error("csv: bad number '" + s + "'");
  return v;
}

}  // namespace astrodiff::util
