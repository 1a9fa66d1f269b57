// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "plreg/config.hpp"
#include "plreg/csv.hpp"
#include "plreg/eval.hpp"
#include "plreg/gradcheck_suite.hpp"
#include "plreg/losses.hpp"
#include "plreg/runner.hpp"

#ifndef PLREG_CONFIG_DIR
#define PLREG_CONFIG_DIR "configs"
#endif

using namespace plreg;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("plreg_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1 ---------------------------------------------------------------------------
Verdict gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite({});
  const double secs = seconds_since(t0);
  const std::set<std::string> required = {"l_p1", "l_p2", "l_lreg", "l_plreg",
                                          "l_final_gcd_masked_head", "l_final_gcd_raw_head"};
  bool ok = secs < 30.0;
  double worst = 0.0;
  std::set<std::string> seen;
  for (const auto& r : results) {
    ok = ok && r.passed && r.instances >= 20;
    worst = std::max(worst, r.max_rel_error);
    seen.insert(r.name);
  }
  for (const auto& name : required) ok = ok && seen.count(name);
  return {ok, std::to_string(results.size()) + " checks x 20 instances, max rel err " + fmt(worst) +
                  ", " + fmt(secs) + " s"};
}

// 2 ---------------------------------------------------------------------------
Verdict loss_oracles() {
  std::vector<std::string> bad;
  auto expect = [&](const std::string& what, double got, double want) {
    if (!(std::abs(got - want) <= 1e-9)) bad.push_back(what + "=" + fmt(got));
  };
  {
    Graph g;
    BundleVars v;
    v.partial_cls = {g.leaf(Tensor(3, 1)), g.leaf(Tensor(1, 1))};
    Var z = g.constant(Tensor(2, 3, {0.3, -1.2, 2.0, 0.7, 0.1, -0.4}));
    Var mask = g.constant(Tensor(2, 3, {0.2, 0.9, 0.5, 0.6, 0.1, 0.8}));
    expect("L_P1(zero C)", loss_p1(v, z, mask).value().item(), std::log(2.0));
  }
  {
    Graph g;
    expect("L_P2(uniform, B=1, dim=2)", loss_p2(g.constant(Tensor(1, 2))).value().item(),
           0.34657359027997264);
  }
  auto lreg = [](std::vector<double> a) {
    Graph g;
    return lreg_from_assignment(g.constant(Tensor(2, 2, std::move(a)))).value().item();
  };
  expect("L-Reg(identity)", lreg({1, 0, 0, 1}), -std::log(2.0));
  expect("L-Reg(uniform)", lreg({0.5, 0.5, 0.5, 0.5}), 0.0);
  expect("L-Reg(collapsed)", lreg({1, 1, 0, 0}), 0.0);
  std::string detail = "ln2, 0.346574, -ln2, 0, 0 reproduced to 1e-9";
  if (!bad.empty()) {
    detail = "mismatch:";
    for (const auto& b : bad) detail += " " + b;
  }
  return {bad.empty(), detail};
}

// 3 ---------------------------------------------------------------------------
Verdict bounds() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> wide(-6.0, 6.0), unit(0.0, 1.0);
  auto dims = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto rand_tensor = [&](std::size_t r, std::size_t c, auto& dist) {
    Tensor t(r, c);
    for (double& v : t.data()) v = dist(rng);
    return t;
  };
  std::size_t violations = 0;
  constexpr double eps = 1e-12;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t b = dims(1, 8), dim = dims(2, 8), k = dims(2, 6);
    Graph g;
    // masks in [0,1] with exact 0/1 entries mixed in
    Tensor m = rand_tensor(b, dim, unit);
    if (i % 3 == 0) m[0] = 0.0;
    if (i % 5 == 0) m[m.size() - 1] = 1.0;
    const double p2 = loss_p2(g.constant(m)).value().item();
    violations += !(p2 >= -eps && p2 <= std::log(static_cast<double>(dim)) + eps);

    BundleVars v;
    v.partial_cls = {g.constant(rand_tensor(dim, 1, wide)), g.constant(rand_tensor(1, 1, wide))};
    const double p1 = loss_p1(v, g.constant(rand_tensor(b, dim, wide)), g.constant(m)).value().item();
    violations += !(p1 >= 0.0);

    Var yhat = softmax(g.constant(rand_tensor(b, k, wide)), Axis::Cols);
    const double lr = loss_lreg(yhat, g.constant(rand_tensor(b, dim, wide))).value().item();
    const double lnk = std::log(static_cast<double>(k));
    violations += !(lr >= -lnk - eps && lr <= lnk + eps);
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 10.0,
          "1000 inputs, " + std::to_string(violations) + " violations, " + fmt(secs) + " s"};
}

// 4 ---------------------------------------------------------------------------
Verdict hungarian_optimality() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(4242);
  std::size_t mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + static_cast<std::size_t>(t % 6);
    Tensor c(n, n);
    // integer costs make exact comparison meaningful; ties are frequent
    std::uniform_int_distribution<int> d(-20, 20);
    for (double& v : c.data()) v = d(rng);
    const Assignment a = hungarian(CostMatrix(c));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += c(i, perm[i]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    mismatches += a.total_cost != best;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          "200 matrices n in [2,7], " + std::to_string(mismatches) + " mismatches, " + fmt(secs) + " s"};
}

// 5 ---------------------------------------------------------------------------
Verdict protocols() {
  std::vector<std::string> bad;
  auto check = [&](bool cond, const std::string& what) {
    if (!cond && bad.size() < 5) bad.push_back(what);
  };
  check(long_tail_counts(5, 100, 0.01) == std::vector<std::size_t>{100, 32, 10, 3, 1},
        "long-tail counts");
  auto key = [](const Sample& s) { return s.features; };
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::string tag = " (seed " + std::to_string(seed) + ")";
    SyntheticSpec spec;
    spec.seed = seed;
    spec.imbalance_ratio = seed % 2 ? 0.1 : 1.0;
    const TaskSplit gcd = build_gcd_task(spec, seed + 11);
    std::set<std::vector<double>> labeled;
    for (const Sample& s : gcd.labeled) {
      labeled.insert(key(s));
      check(gcd.known_classes.count(s.class_id) == 1, "labeled sample of an unknown class" + tag);
    }
    for (const Sample& s : gcd.unlabeled) check(!labeled.count(key(s)), "labeled/unlabeled overlap" + tag);
    const auto counts = long_tail_counts(spec.num_classes, spec.samples_per_class_max,
                                         spec.imbalance_ratio);
    std::map<int, std::size_t> n_lab;
    for (const Sample& s : gcd.labeled) ++n_lab[s.class_id];
    for (std::size_t c = 0; c < spec.num_known; ++c)
      check(counts[c] < 2 || n_lab[static_cast<int>(c)] == counts[c] / 2, "half labeled" + tag);
    check(gcd.labeled.size() + gcd.unlabeled.size() ==
              std::accumulate(counts.begin(), counts.end(), std::size_t{0}),
          "GCD pool size" + tag);

    SyntheticSpec mspec = spec;
    mspec.num_domains = 3;
    mspec.domain_dims = 4;
    mspec.domain_shift = 1.0;
    const auto samples = generate(mspec);
    for (int d = 0; d < 3; ++d) {
      const TaskSplit split = make_mdg_gcd_splits(samples, mspec.num_known, d, seed);
      for (const Sample& s : split.labeled) check(s.domain_id != d, "held-out domain leaked" + tag);
      for (const Sample& s : split.unlabeled) check(s.domain_id != d, "held-out domain leaked" + tag);
      for (const Sample& s : split.test) check(s.domain_id == d, "test outside held-out domain" + tag);
      check(split.labeled.size() + split.unlabeled.size() + split.test.size() == samples.size(),
            "mDG partition size" + tag);
    }

    SyntheticSpec cspec = spec;
    cspec.imbalance_ratio = 0.01;
    for (CilStyle style : {CilStyle::Ordered, CilStyle::Shuffled}) {
      const CilSchedule sched = make_cil_schedule(cspec, 5, style, seed);
      std::set<int> all;
      std::size_t total = 0;
      for (const CilSession& s : sched.sessions) {
        for (int c : s.classes) check(all.insert(c).second, "class in two sessions" + tag);
        total += s.classes.size();
      }
      check(sched.sessions.size() == 6 && total == cspec.num_classes, "session cover" + tag);
    }
  }
  std::string detail = "50 seeded generations, GCD/mDG/CIL invariants hold";
  if (!bad.empty()) {
    detail = "violations:";
    for (const auto& b : bad) detail += " " + b + ";";
  }
  return {bad.empty(), detail};
}

std::vector<SeedOutcome> run_all(const ExperimentConfig& c) {
  std::vector<SeedOutcome> out;
  for (std::uint64_t s : c.seeds) {
    out.push_back(run_seed(c, s));
    if (!out.back().error.empty()) throw std::runtime_error(out.back().error);
  }
  return out;
}

ExperimentConfig bench(const std::string& name) {
  return parse_config(fs::path(PLREG_CONFIG_DIR) / (name + ".json"));
}

// 6 ---------------------------------------------------------------------------
Verdict gcd_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  auto mean_unknown = [](const std::vector<SeedOutcome>& r) {
    double s = 0.0;
    for (const auto& o : r) s += o.metrics.acc_unknown;
    return s / static_cast<double>(r.size());
  };
  const ExperimentConfig base = bench("gcd_benchmark_base");
  const ExperimentConfig lreg = bench("gcd_benchmark_lreg");
  const ExperimentConfig pl = bench("gcd_benchmark_plreg");
  const double u_base = mean_unknown(run_all(base));
  const double u_lreg = mean_unknown(run_all(lreg));
  const double u_pl = mean_unknown(run_all(pl));
  const double secs = seconds_since(t0);
  const bool ok = u_pl - u_base >= 0.02 && u_pl >= u_lreg - 0.01 && secs < 300.0;
  return {ok, "unknown acc over " + std::to_string(pl.seeds.size()) + " seeds: main-only " +
                  fmt(u_base) + ", L-Reg " + fmt(u_lreg) + ", PL-Reg " + fmt(u_pl) +
                  " (PL-base " + fmt(100 * (u_pl - u_base)) + " pts, ordering PL " +
                  (u_pl >= u_lreg ? ">=" : "<") + " L-Reg), " + fmt(secs) + " s"};
}

// 7 ---------------------------------------------------------------------------
Verdict cil_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig base = bench("cil_benchmark_base");
  const ExperimentConfig pl = bench("cil_benchmark_plreg");
  const auto rb = run_all(base);
  const auto rp = run_all(pl);
  double a_base = 0.0, a_pl = 0.0;
  std::size_t pairs = 0, differing = 0;
  for (const auto& o : rb) a_base += o.avg_acc / static_cast<double>(rb.size());
  for (const auto& o : rp) {
    a_pl += o.avg_acc / static_cast<double>(rp.size());
    for (std::size_t i = 0; i < o.masks.size(); ++i)
      for (std::size_t j = i + 1; j < o.masks.size(); ++j) {
        ++pairs;
        differing += hamming_distance(o.masks[i], o.masks[j]) > 0;
      }
  }
  const double frac = pairs ? static_cast<double>(differing) / static_cast<double>(pairs) : 0.0;
  const double secs = seconds_since(t0);
  const bool ok = frac >= 0.9 && a_pl >= a_base && secs < 300.0;
  return {ok, "mask pairs differing " + std::to_string(differing) + "/" + std::to_string(pairs) +
                  ", avg acc PL-Reg " + fmt(a_pl) + " vs CE+distill " + fmt(a_base) + ", " +
                  fmt(secs) + " s"};
}

// 8 ---------------------------------------------------------------------------
Verdict separability() {
  ExperimentConfig c = bench("gcd_benchmark_plreg");
  c.seeds = {0, 1, 2};
  double worst = 1.0;
  for (std::uint64_t s : c.seeds) {
    const SeedOutcome o = run_seed(c, s);
    if (!o.error.empty()) return {false, o.error};
    // held-out batch: fresh samples the run never saw
    SyntheticSpec spec = c.spec;
    spec.seed = s;
    std::vector<int> all(spec.num_classes);
    std::iota(all.begin(), all.end(), 0);
    const auto held_out = generate_balanced(spec, all, 20, 0xfeed + s);
    worst = std::min(worst, partial_separability(*o.final_model, features_of(held_out)));
  }
  return {worst > 0.95, "min separability over 3 converged runs " + fmt(worst)};
}

// 9 ---------------------------------------------------------------------------
Verdict determinism() {
  ExperimentConfig c = bench("gcd_benchmark_plreg");
  c.seeds = {3, 4};
  c.train.optim.epochs = 20;
  std::ostringstream log;
  c.output_dir = scratch_dir("det_a").string();
  const int ra = run(c, log);
  const std::string a = slurp(fs::path(c.output_dir) / "metrics.csv");
  c.output_dir = scratch_dir("det_b").string();
  const int rb = run(c, log);
  const std::string b = slurp(fs::path(c.output_dir) / "metrics.csv");
  ExperimentConfig k = bench("cil_benchmark_plreg");
  k.seeds = {1};
  k.train.optim.epochs = 5;
  k.output_dir = scratch_dir("det_c").string();
  const int rc = run(k, log);
  const std::string c1 = slurp(fs::path(k.output_dir) / "metrics.csv");
  k.output_dir = scratch_dir("det_d").string();
  const int rd = run(k, log);
  const std::string c2 = slurp(fs::path(k.output_dir) / "metrics.csv");
  const bool ok = ra == 0 && rb == 0 && rc == 0 && rd == 0 && !a.empty() && a == b && c1 == c2;
  return {ok, std::string("GCD metrics.csv ") + (a == b ? "identical" : "differ") +
                  ", CIL metrics.csv " + (c1 == c2 ? "identical" : "differ")};
}

// 10 --------------------------------------------------------------------------
Verdict sweep_machinery() {
  ExperimentConfig c = bench("gcd_benchmark_plreg");
  c.seeds = {0, 1};
  c.train.optim.epochs = 10;
  c.output_dir = scratch_dir("sweep").string();
  std::ostringstream log;
  const std::vector<double> values{5e-4, 1e-3, 2e-3};
  const int rc = sweep(c, "w_p1", values, log);
  std::ifstream in(fs::path(c.output_dir) / "sweep.csv");
  std::string line;
  std::getline(in, line);
  const auto header = split(line, ',');
  bool ok = rc == 0 && header == std::vector<std::string>{"axis", "value", "seed", "acc_all",
                                                          "acc_known", "acc_unknown"};
  std::size_t seed_rows = 0, summary_rows = 0;
  std::map<std::string, std::vector<double>> per_value;
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    if (f.size() != header.size() || f[0] != "w_p1") {
      ok = false;
      continue;
    }
    if (f[2] == "mean") {
      ++summary_rows;
      const auto& v = per_value[f[1]];
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      ok = ok && std::abs(mean - std::stod(f[3])) <= 1e-12;
    } else {
      ++seed_rows;
      per_value[f[1]].push_back(std::stod(f[3]));
    }
  }
  ok = ok && seed_rows == 6 && summary_rows == 3;
  return {ok, "sweep.csv: " + std::to_string(seed_rows) + " seed rows, " +
                  std::to_string(summary_rows) + " summary rows for w_p1 in {5e-4,1e-3,2e-3}"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient correctness", gradients},
      {"loss oracles", loss_oracles},
      {"loss bounds fuzzing", bounds},
      {"hungarian optimality", hungarian_optimality},
      {"protocol bookkeeping", protocols},
      {"directional GCD claim", gcd_direction},
      {"directional CIL claim", cil_direction},
      {"defined/undefined separability", separability},
      {"determinism", determinism},
      {"sensitivity sweep machinery", sweep_machinery},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::stoul(argv[i])));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": "
              << v.detail << std::endl;
    failed += !v.pass;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed")
            << std::endl;
  return failed ? 1 : 0;
}
