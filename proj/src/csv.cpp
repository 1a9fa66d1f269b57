#include "plreg/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace plreg {

std::string format_number(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  // shortest form that parses back to the same double
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }
  return std::string(buf, end);
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(line.substr(start));
      break;
    }
    parts.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

}  // namespace plreg
