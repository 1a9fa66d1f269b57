#include "plreg/gradcheck_suite.hpp"

#include <functional>
#include <ostream>
#include <random>

#include "plreg/csv.hpp"
#include "plreg/gradcheck.hpp"
#include "plreg/losses.hpp"
#include "plreg/model.hpp"

namespace plreg {

namespace {

// x^2 with a backward pass that forgets the factor 2.
Var faulty_square(Var x) {
  Tensor y = x.value();
  for (double& v : y.data()) v *= v;
  const NodeId a = x.id;
  const Tensor xv = x.value();
  return x.graph->push(std::move(y), {a}, [a, xv](Graph& g, const Tensor& out) {
    Tensor d = out;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= xv[i];
    g.accumulate(a, d);
  });
}

Tensor uniform(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

struct Instance {
  std::vector<Tensor> params;
  ScalarFn fn;
};

using Builder = std::function<Instance(std::mt19937_64&)>;

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

BundleVars vars_from(std::span<const Var> p, const BundleShape& shape) {
  BundleVars v;
  v.shape = shape;
  std::size_t k = 0;
  for (std::size_t l = 0; l < shape.depth; ++l, k += 2) v.encoder.push_back({p[k], p[k + 1]});
  v.head = {p[k], p[k + 1]};
  v.mask_gen = {p[k + 2], p[k + 3]};
  v.partial_cls = {p[k + 4], p[k + 5]};
  return v;
}

// Random bundle whose parameters become the checked leaves; x and labels are fixed.
struct BundleCase {
  BundleShape shape;
  std::vector<Tensor> params;
  Tensor x;
  std::vector<int> labels;
};

BundleCase bundle_case(std::mt19937_64& rng, HeadInput head_input) {
  BundleCase c;
  c.shape.input_dim = pick(rng, 3, 6);
  c.shape.dim = pick(rng, 2, 5);
  c.shape.num_classes = pick(rng, 2, 4);
  c.shape.depth = 2;
  c.shape.head_input = head_input;
  ModelBundle b = init_bundle(c.shape, rng());
  // non-zero biases so every term of the affine maps is exercised
  for (const auto& p : b.parameters())
    for (double& v : p.value->data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  for (const auto& p : b.parameters()) c.params.push_back(*p.value);
  const std::size_t batch = pick(rng, 4, 6);
  c.x = uniform(rng, batch, c.shape.input_dim, -1.5, 1.5);
  for (std::size_t i = 0; i < batch; ++i)
    c.labels.push_back(static_cast<int>(pick(rng, 0, c.shape.num_classes - 1)));
  return c;
}

LossWeights random_weights(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  return {u(rng), u(rng), u(rng)};
}

Instance final_gcd(std::mt19937_64& rng, HeadInput head_input) {
  BundleCase c = bundle_case(rng, head_input);
  const LossWeights w = random_weights(rng);
  const double lambda = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  const std::size_t labeled = c.x.rows() / 2;
  Instance inst;
  inst.params = c.params;
  inst.fn = [c, w, lambda, labeled](Graph& g, std::span<const Var> p) {
    const BundleVars vars = vars_from(p, c.shape);
    const ForwardPass pass = forward(vars, g.constant(c.x));
    const std::vector<int> y(c.labels.begin(), c.labels.begin() + static_cast<std::ptrdiff_t>(labeled));
    Var main = add(loss_cross_entropy(slice_rows(pass.logits, 0, labeled), y),
                   scalar_mul(loss_infomax(slice_rows(pass.logits, labeled, c.x.rows())), lambda));
    return total_loss(loss_plreg(vars, pass, w), main).final_loss;
  };
  return inst;
}

std::vector<std::pair<std::string, Builder>> checks() {
  std::vector<std::pair<std::string, Builder>> out;
  out.emplace_back("l_p1", [](std::mt19937_64& rng) {
    const std::size_t b = pick(rng, 2, 6), d = pick(rng, 2, 5);
    Instance inst;
    inst.params = {uniform(rng, b, d, -2, 2), uniform(rng, d, d, -1, 1), uniform(rng, 1, d, -1, 1),
                   uniform(rng, d, 1, -1, 1), uniform(rng, 1, 1, -1, 1)};
    inst.fn = [](Graph&, std::span<const Var> p) {
      BundleVars v;
      v.mask_gen = {p[1], p[2]};
      v.partial_cls = {p[3], p[4]};
      return loss_p1(v, p[0]);
    };
    return inst;
  });
  out.emplace_back("l_p2", [](std::mt19937_64& rng) {
    Instance inst;
    inst.params = {uniform(rng, pick(rng, 1, 6), pick(rng, 2, 6), 0.02, 0.98)};
    inst.fn = [](Graph&, std::span<const Var> p) { return loss_p2(p[0]); };
    return inst;
  });
  out.emplace_back("l_lreg", [](std::mt19937_64& rng) {
    const std::size_t b = pick(rng, 2, 6);
    Instance inst;
    inst.params = {uniform(rng, b, pick(rng, 2, 4), -2, 2), uniform(rng, b, pick(rng, 2, 5), -1, 1)};
    inst.fn = [](Graph&, std::span<const Var> p) {
      return loss_lreg(softmax(p[0], Axis::Cols), p[1]);
    };
    return inst;
  });
  out.emplace_back("l_plreg", [](std::mt19937_64& rng) {
    BundleCase c = bundle_case(rng, HeadInput::Masked);
    const LossWeights w = random_weights(rng);
    Instance inst;
    inst.params = c.params;
    inst.fn = [c, w](Graph& g, std::span<const Var> p) {
      const BundleVars vars = vars_from(p, c.shape);
      return loss_plreg(vars, forward(vars, g.constant(c.x)), w).plreg;
    };
    return inst;
  });
  out.emplace_back("l_final_gcd_masked_head",
                   [](std::mt19937_64& rng) { return final_gcd(rng, HeadInput::Masked); });
  out.emplace_back("l_final_gcd_raw_head",
                   [](std::mt19937_64& rng) { return final_gcd(rng, HeadInput::Raw); });
  out.emplace_back("l_final_cil_distill", [](std::mt19937_64& rng) {
    BundleCase c = bundle_case(rng, HeadInput::Raw);
    const LossWeights w = random_weights(rng);
    const std::size_t k_old = c.shape.num_classes - 1;
    const Tensor old_logits = uniform(rng, c.x.rows(), k_old, -2, 2);
    Instance inst;
    inst.params = c.params;
    inst.fn = [c, w, k_old, old_logits](Graph& g, std::span<const Var> p) {
      const BundleVars vars = vars_from(p, c.shape);
      const ForwardPass pass = forward(vars, g.constant(c.x));
      Var main = add(loss_cross_entropy(pass.logits, c.labels),
                     loss_distill(slice_cols(pass.logits, 0, k_old), g.constant(old_logits), 2.0));
      return total_loss(loss_plreg(vars, pass, w), main).final_loss;
    };
    return inst;
  });
  return out;
}

}  // namespace

std::vector<SuiteResult> run_gradcheck_suite(const SuiteOptions& options) {
  std::vector<SuiteResult> results;
  std::size_t index = 0;
  for (const auto& [name, build] : checks()) {
    SuiteResult r;
    r.name = name;
    for (std::size_t i = 0; i < options.instances; ++i) {
      std::mt19937_64 rng(options.seed + 1000 * index + i);
      Instance inst = build(rng);
      ScalarFn fn = inst.fn;
      if (options.inject_fault) {
        fn = [inner = inst.fn](Graph& g, std::span<const Var> p) {
          return add(inner(g, p), sum(faulty_square(p[0])));
        };
      }
      const GradCheckReport rep = grad_check(fn, inst.params, options.h);
      ++r.instances;
      r.max_rel_error = std::max(r.max_rel_error, rep.max_rel_error);
      if (!rep.failure.empty()) {
        r.failure = rep.failure;
        break;
      }
    }
    r.passed = r.failure.empty() && r.max_rel_error < options.tolerance;
    results.push_back(std::move(r));
    ++index;
  }
  return results;
}

int gradcheck_cmd(std::ostream& out, const SuiteOptions& options) {
  const auto results = run_gradcheck_suite(options);
  std::size_t failed = 0;
  for (const SuiteResult& r : results) {
    out << (r.passed ? "ok   " : "FAIL ") << r.name << "  instances=" << r.instances
        << "  max_rel_error=" << format_number(r.max_rel_error);
    if (!r.failure.empty()) out << "  (" << r.failure << ")";
    out << '\n';
    failed += !r.passed;
  }
  if (failed) {
    out << failed << " of " << results.size() << " gradient checks failed:";
    for (const SuiteResult& r : results)
      if (!r.passed) out << ' ' << r.name;
    out << '\n';
    return 1;
  }
  out << "all " << results.size() << " gradient checks passed (tolerance "
      << format_number(options.tolerance) << ")\n";
  return 0;
}

}  // namespace plreg
