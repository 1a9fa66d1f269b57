#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "plreg/autodiff.hpp"

namespace plreg {

/// Builds a scalar on `graph` from leaf variables bound to the checked parameters.
using ScalarFn = std::function<Var(Graph& graph, std::span<const Var> params)>;

struct GradCheckReport {
  // max over all entries of |analytic - numeric| / max(1, |numeric|)
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  // empty when every evaluation was finite
  std::string failure;

  bool passed(double tolerance) const { return failure.empty() && max_rel_error < tolerance; }
};

/// Compares reverse-mode gradients with central differences of step `h`.
GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> params, double h = 1e-5);

/// Analytic gradient of `f` at `params`, one tensor per parameter.
std::vector<Tensor> analytic_gradient(const ScalarFn& f, std::span<const Tensor> params);

}  // namespace plreg
