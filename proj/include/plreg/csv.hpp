#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace plreg {

/// Shortest round-trippable decimal representation (printf %.17g, trimmed).
std::string format_number(double v);

/// Joins already-formatted fields with commas.
std::string csv_row(const std::vector<std::string>& fields);

std::vector<std::string> split(std::string_view line, char sep);

}  // namespace plreg
