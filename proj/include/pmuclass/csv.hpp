#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pmuclass/error.hpp"

namespace pmuclass::csv {

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

/// Empty, non-numeric and non-finite fields (including the literal NaN) are absent.
inline std::optional<double> parse_optional_real(std::string_view field) {
  if (field.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

inline double parse_real(std::string_view field, std::string_view what) {
  auto v = parse_optional_real(field);
  if (!v) throw Error(Errc::MalformedRow, "expected a number for " + std::string(what));
  return *v;
}

template <typename Int>
Int parse_int(std::string_view field, std::string_view what) {
  Int value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw Error(Errc::MalformedRow, "expected an integer for " + std::string(what) + ", got '" +
                                        std::string(field) + "'");
  }
  return value;
}

/// Appends `value` with `digits` significant digits, locale independent.
inline void append_real(std::string& out, double value, int digits = 9) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, digits);
  out.append(buf, ptr);
}

/// Shortest representation that parses back to exactly `value`.
inline void append_exact(std::string& out, double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, ptr);
}

inline std::string format_real(double value, int digits = 9) {
  std::string s;
  append_real(s, value, digits);
  return s;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  return out;
}

}  // namespace pmuclass::csv
