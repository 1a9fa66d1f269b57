#include "plreg/gradcheck.hpp"

#include <cmath>
#include <limits>

#include "plreg/errors.hpp"

namespace plreg {

namespace {

double evaluate(const ScalarFn& f, std::span<const Tensor> params) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(g.constant(p));
  try {
    return f(g, vars).value().item();
  } catch (const DomainError&) {
    // the perturbed point left the objective's domain; reported like a non-finite value
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

std::vector<Tensor> analytic_gradient(const ScalarFn& f, std::span<const Tensor> params) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(g.leaf(p));
  Var root = f(g, vars);
  g.backward(root);
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (const Var& v : vars) {
    // grad_slot zero-fills parameters the root does not depend on
    grads.push_back(g.grad_slot(v.id));
  }
  return grads;
}

GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> params, double h) {
  if (!(h > 0.0)) throw ContractError("grad_check: step h must be positive");
  GradCheckReport report;
  const std::vector<Tensor> analytic = analytic_gradient(f, params);
  std::vector<Tensor> work(params.begin(), params.end());
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double x0 = work[p][i];
      work[p][i] = x0 + h;
      const double fp = evaluate(f, work);
      work[p][i] = x0 - h;
      const double fm = evaluate(f, work);
      work[p][i] = x0;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.failure = "non-finite objective when perturbing parameter " + std::to_string(p) +
                         " index " + std::to_string(i);
        report.worst_param = p;
        report.worst_index = i;
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
      if (err > report.max_rel_error || std::isnan(err)) {
        report.max_rel_error = err;
        report.worst_param = p;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace plreg
