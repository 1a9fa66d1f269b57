#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace plreg {

struct SuiteOptions {
  std::size_t instances = 20;  // random instances per check
  std::uint64_t seed = 20240;
  double h = 1e-5;
  double tolerance = 1e-4;
  // negative control: every check also differentiates an op whose backward is wrong
  bool inject_fault = false;
};

struct SuiteResult {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  std::string failure;  // first non-finite evaluation, if any
  bool passed = false;
};

/// Gradient checks of every loss term and of L_final in both head_input modes.
std::vector<SuiteResult> run_gradcheck_suite(const SuiteOptions& options = {});

/// Prints one line per check; returns 0 iff every check passed, else 1.
int gradcheck_cmd(std::ostream& out, const SuiteOptions& options = {});

}  // namespace plreg
