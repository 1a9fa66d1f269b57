#include "plreg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>

#include "plreg/errors.hpp"

namespace plreg {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined inputs
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
  Tensor out(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * x.cols()), x.cols(),
                out.data().begin() + static_cast<std::ptrdiff_t>(i * x.cols()));
  return out;
}

Tensor stack_rows(const Tensor& a, const Tensor& b) {
  std::vector<double> values(a.values());
  values.insert(values.end(), b.values().begin(), b.values().end());
  return Tensor(a.rows() + b.rows(), a.cols(), std::move(values));
}

// Backpropagates `loss` and applies one optimizer step to the bound bundle.
LossBreakdown apply_step(Graph& g, const BundleVars& vars, const FinalLoss& loss,
                         ModelBundle& bundle, AdamState& adam, const OptimConfig& optim) {
  g.backward(loss.final_loss);
  const std::vector<Var> leaves = vars.all();
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (const Var& v : leaves) grads.push_back(g.grad_slot(v.id));
  optimizer_step(bundle.parameters(), grads, adam, optim);
  return breakdown(loss);
}

void check_trace(const LossBreakdown& b, std::size_t epoch) {
  for (double v : {b.l_p1, b.l_p2, b.l_lreg, b.l_main, b.l_plreg, b.l_final}) {
    if (!std::isfinite(v)) {
      throw TrainingAbort("non-finite loss in epoch " + std::to_string(epoch));
    }
  }
}

}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::Gcd: return "gcd";
    case Task::MdgGcd: return "mdg_gcd";
    case Task::Cil: return "cil";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "gcd") return Task::Gcd;
  if (s == "mdg_gcd") return Task::MdgGcd;
  if (s == "cil") return Task::Cil;
  throw ConfigError("task must be one of gcd, mdg_gcd, cil; got '" + s + "'");
}

void OptimConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
}

void TrainRun::validate() const {
  weights.validate();
  optim.validate();
  if (!(lambda_infomax >= 0.0)) throw ConfigError("lambda_infomax must be >= 0");
  if (!(lambda_kd >= 0.0)) throw ConfigError("lambda_kd must be >= 0");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in (0,1)");
}

void optimizer_step(std::span<const ModelBundle::Param> params, std::span<const Tensor> grads,
                    AdamState& state, const OptimConfig& config) {
  if (params.size() != grads.size()) {
    throw ContractError("optimizer_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!grads[p].same_shape(*params[p].value)) {
      throw ShapeError("optimizer_step: gradient of " + params[p].name + " has shape " +
                       grads[p].shape_str() + ", parameter is " + params[p].value->shape_str());
    }
    if (!all_finite(grads[p])) {
      throw TrainingAbort("non-finite gradient for parameter " + params[p].name);
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.emplace_back(p.value->rows(), p.value->cols());
      state.v.emplace_back(p.value->rows(), p.value->cols());
    }
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p].value;
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    const Tensor& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= config.lr * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------

GcdResult train_gcd(const TaskSplit& split, ModelBundle& bundle, const TrainRun& run,
                    const EpochCallback& on_epoch) {
  run.validate();
  if (split.labeled.empty()) throw ConfigError("train_gcd: labeled pool is empty");
  if (split.unlabeled.size() < 2) throw ConfigError("train_gcd: unlabeled pool needs >= 2 samples");

  const Tensor xl = features_of(split.labeled);
  const Tensor xu = features_of(split.unlabeled);
  const std::vector<int> yl = labels_of(split.labeled);
  const std::size_t bu = std::min(run.optim.batch_size, xu.rows());
  const std::size_t bl = std::min(run.optim.batch_size, xl.rows());
  const std::size_t steps = xu.rows() / bu;

  std::mt19937_64 rng(run.optim.seed);
  std::vector<std::size_t> ui(xu.rows()), li(xl.rows());
  std::iota(ui.begin(), ui.end(), 0);
  std::iota(li.begin(), li.end(), 0);
  std::size_t lpos = li.size();
  std::vector<int> batch_labels(bl);

  AdamState adam;
  GcdResult result;
  for (std::size_t epoch = 1; epoch <= run.optim.epochs; ++epoch) {
    std::shuffle(ui.begin(), ui.end(), rng);
    LossBreakdown acc;
    for (std::size_t s = 0; s < steps; ++s) {
      if (lpos + bl > li.size()) {
        std::shuffle(li.begin(), li.end(), rng);
        lpos = 0;
      }
      std::span<const std::size_t> lidx(li.data() + lpos, bl);
      lpos += bl;
      std::span<const std::size_t> uidx(ui.data() + s * bu, bu);
      for (std::size_t k = 0; k < bl; ++k) batch_labels[k] = yl[lidx[k]];

      Graph g;
      BundleVars vars = bind(g, bundle);
      Var x = g.constant(stack_rows(gather_rows(xl, lidx), gather_rows(xu, uidx)));
      ForwardPass pass = forward(vars, x);
      Var logits_l = slice_rows(pass.logits, 0, bl);
      Var logits_u = slice_rows(pass.logits, bl, bl + bu);
      Var main = add(loss_cross_entropy(logits_l, batch_labels),
                     scalar_mul(loss_infomax(logits_u), run.lambda_infomax));
      FinalLoss loss = total_loss(loss_plreg(vars, pass, run.weights), main);
      acc += apply_step(g, vars, loss, bundle, adam, run.optim);
    }
    acc /= static_cast<double>(steps);
    check_trace(acc, epoch);
    result.trace.push_back(acc);
    if (on_epoch) on_epoch(epoch, bundle);
  }
  return result;
}

Metrics evaluate_gcd(const ModelBundle& bundle, const TaskSplit& split) {
  if (split.test.empty()) throw ContractError("evaluate_gcd: split has no test samples");
  const std::size_t k = std::max(split.total_class_count, bundle.num_classes());
  return cluster_accuracy(predict(bundle, features_of(split.test)), labels_of(split.test),
                          split.known_classes, k);
}

std::size_t select_checkpoint(std::span<const double> curve) {
  if (curve.empty()) throw ContractError("select_checkpoint: empty validation curve");
  return static_cast<std::size_t>(std::max_element(curve.begin(), curve.end()) - curve.begin());
}

MdgResult train_mdg_gcd_split(const TaskSplit& split, ModelBundle bundle, const TrainRun& run,
                              int held_out_domain) {
  run.validate();
  // hold out part of the seen-domain labeled data for model selection
  TaskSplit train = split;
  std::vector<std::size_t> order(split.labeled.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(run.optim.seed, 0x7a11d, static_cast<std::uint64_t>(held_out_domain)));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(
      std::lround(run.validation_fraction * static_cast<double>(order.size())));
  if (n_val == 0 || n_val >= order.size()) {
    throw ConfigError("train_mdg_gcd: labeled pool too small for a validation split");
  }
  std::vector<char> is_val(order.size(), 0);
  for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = 1;
  std::vector<Sample> val;
  train.labeled.clear();
  for (std::size_t i = 0; i < split.labeled.size(); ++i)
    (is_val[i] ? val : train.labeled).push_back(split.labeled[i]);
  const Tensor xv = features_of(val);
  const std::vector<int> yv = labels_of(val);

  MdgResult result;
  result.held_out_domain = held_out_domain;
  std::vector<ModelBundle> checkpoints;
  auto on_epoch = [&](std::size_t epoch, const ModelBundle& b) {
    if (epoch % run.eval_interval != 0 && epoch != run.optim.epochs) return;
    result.eval_epochs.push_back(epoch);
    result.validation_curve.push_back(accuracy(predict(b, xv), yv));
    checkpoints.push_back(b);
  };
  result.trace = train_gcd(train, bundle, run, on_epoch).trace;

  const std::size_t best = select_checkpoint(result.validation_curve);
  result.best_epoch = result.eval_epochs[best];
  result.best_validation = result.validation_curve[best];
  result.metrics = evaluate_gcd(checkpoints[best], train);
  result.checkpoint = std::move(checkpoints[best]);
  return result;
}

std::vector<MdgResult> train_mdg_gcd(std::span<const Sample> samples, std::size_t num_known,
                                     const std::function<ModelBundle()>& factory,
                                     const TrainRun& run, std::uint64_t split_seed) {
  int num_domains = 0;
  for (const Sample& s : samples) num_domains = std::max(num_domains, s.domain_id + 1);
  if (num_domains < 2) throw ContractError("train_mdg_gcd: needs at least 2 domains");
  std::vector<MdgResult> out;
  for (int d = 0; d < num_domains; ++d) {
    TaskSplit split = make_mdg_gcd_splits(samples, num_known, d,
                                          derive_seed(split_seed, static_cast<std::uint64_t>(d)));
    out.push_back(train_mdg_gcd_split(split, factory(), run, d));
  }
  return out;
}

// ---------------------------------------------------------------------------

CilData build_cil_data(const SyntheticSpec& spec, const CilSchedule& schedule,
                       std::size_t test_per_class, std::uint64_t seed) {
  CilData data;
  std::vector<int> all(spec.num_classes);
  std::iota(all.begin(), all.end(), 0);
  const std::vector<Sample> test_pool =
      generate_balanced(spec, all, test_per_class, derive_seed(seed, 0x7e57));
  std::vector<int> seen;
  for (std::size_t i = 0; i < schedule.sessions.size(); ++i) {
    const CilSession& s = schedule.sessions[i];
    data.train.push_back(generate_with_counts(spec, s.counts, s.classes, derive_seed(seed, 0x5e55, i)));
    seen.insert(seen.end(), s.classes.begin(), s.classes.end());
    data.seen.push_back(seen);
    SessionEval eval;
    for (const Sample& t : test_pool)
      if (std::find(seen.begin(), seen.end(), t.class_id) != seen.end()) eval.test.push_back(t);
    data.eval.push_back(std::move(eval));
  }
  return data;
}

CilResult train_cil(const CilSchedule& schedule, const CilData& data, ModelBundle& bundle,
                    const TrainRun& run) {
  run.validate();
  const std::size_t sessions = schedule.sessions.size();
  if (sessions == 0) throw ContractError("train_cil: empty schedule");
  if (data.train.size() != sessions || data.eval.size() != sessions) {
    throw ContractError("train_cil: data has " + std::to_string(data.train.size()) +
                        " sessions, schedule has " + std::to_string(sessions));
  }
  if (bundle.num_classes() > schedule.sessions.front().classes.size()) {
    throw ContractError("train_cil: head has " + std::to_string(bundle.num_classes()) +
                        " columns but session 0 introduces only " +
                        std::to_string(schedule.sessions.front().classes.size()) + " classes");
  }

  std::map<int, std::size_t> column_of;
  std::vector<int> seen;
  CilResult result;
  std::vector<Predictor> snapshots;

  for (std::size_t i = 0; i < sessions; ++i) {
    const CilSession& session = schedule.sessions[i];
    for (int c : session.classes) {
      if (column_of.count(c)) {
        throw ContractError("train_cil: class " + std::to_string(c) + " of session " +
                            std::to_string(i) + " was already introduced");
      }
    }
    std::optional<ModelBundle> frozen;
    if (i > 0) frozen = bundle;
    const std::size_t k_old = seen.size();
    for (int c : session.classes) {
      column_of[c] = seen.size();
      seen.push_back(c);
    }
    const std::size_t k_new = session.classes.size();

    reinit_mask(bundle, derive_seed(run.optim.seed, 0x3a5c, i), run.reinit_partial_cls);
    expand_head(bundle, seen.size(), derive_seed(run.optim.seed, 0x4ead, i));

    const std::vector<Sample>& train = data.train[i];
    if (train.empty()) throw ContractError("train_cil: session " + std::to_string(i) + " has no data");
    const Tensor x_all = features_of(train);
    std::vector<int> y_all;
    for (const Sample& s : train) {
      auto it = column_of.find(s.class_id);
      if (it == column_of.end() ||
          std::find(session.classes.begin(), session.classes.end(), s.class_id) == session.classes.end()) {
        throw ContractError("train_cil: sample of class " + std::to_string(s.class_id) +
                            " does not belong to session " + std::to_string(i));
      }
      y_all.push_back(static_cast<int>(it->second));
    }
    const double kd_scale =
        run.lambda_kd * std::sqrt(static_cast<double>(k_old) / static_cast<double>(k_new));

    std::mt19937_64 rng(derive_seed(run.optim.seed, 0xba7c, i));
    std::vector<std::size_t> order(x_all.rows());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t b = std::min(run.optim.batch_size, order.size());
    AdamState adam;
    std::vector<LossBreakdown> trace;
    std::vector<int> labels;
    for (std::size_t epoch = 1; epoch <= run.optim.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      LossBreakdown acc;
      std::size_t steps = 0;
      for (std::size_t start = 0; start < order.size(); start += b, ++steps) {
        const std::size_t end = std::min(order.size(), start + b);
        std::span<const std::size_t> idx(order.data() + start, end - start);
        labels.clear();
        for (std::size_t k : idx) labels.push_back(y_all[k]);
        const Tensor xb = gather_rows(x_all, idx);

        Graph g;
        BundleVars vars = bind(g, bundle);
        ForwardPass pass = forward(vars, g.constant(xb));
        Var main = loss_cross_entropy(pass.logits, labels);
        if (frozen && k_old > 0 && kd_scale > 0.0) {
          Var old_logits = g.constant(predict_logits(*frozen, xb));
          Var kd = loss_distill(slice_cols(pass.logits, 0, k_old), old_logits, run.temperature);
          main = add(main, scalar_mul(kd, kd_scale));
        }
        FinalLoss loss = total_loss(loss_plreg(vars, pass, run.weights), main);
        acc += apply_step(g, vars, loss, bundle, adam, run.optim);
      }
      acc /= static_cast<double>(steps);
      check_trace(acc, epoch);
      trace.push_back(acc);
    }
    result.traces.push_back(std::move(trace));
    result.masks.push_back(snapshot_mask(bundle, i));
    snapshots.push_back(bundle_predictor(bundle, seen));
  }
  result.metrics = cil_metrics(data.eval, snapshots);
  return result;
}

double partial_separability(const ModelBundle& bundle, const Tensor& x) {
  Graph g;
  BundleVars vars = bind(g, bundle, false);
  Var z = encode(vars, g.constant(x));
  Var mask = mask_forward(vars, z);
  Var probs = partial_forward(vars, concat_rows(mul(z, mask), mul(z, scalar_sub(1.0, mask))));
  const Tensor& p = probs.value();
  const std::size_t n = x.rows();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    correct += p[i] > 0.5;
    correct += p[n + i] < 0.5;
  }
  return static_cast<double>(correct) / static_cast<double>(2 * n);
}

}  // namespace plreg
