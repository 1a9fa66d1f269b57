#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "plreg/eval.hpp"
#include "plreg/losses.hpp"
#include "plreg/model.hpp"
#include "plreg/protocols.hpp"

namespace plreg {

/// Independent stream seed for (base, a, b).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

enum class Task { Gcd, MdgGcd, Cil };

std::string to_string(Task t);
Task parse_task(const std::string& s);

/// Adam with bias correction.
struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainRun {
  LossWeights weights;
  double lambda_infomax = 1.0;
  double lambda_kd = 1.0;
  double temperature = 2.0;
  bool reinit_partial_cls = true;
  std::size_t eval_interval = 5;  // mDG+GCD validation period in epochs
  double validation_fraction = 0.2;
  OptimConfig optim;

  void validate() const;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

/// One Adam update. Throws TrainingAbort naming the parameter on a non-finite gradient.
void optimizer_step(std::span<const ModelBundle::Param> params, std::span<const Tensor> grads,
                    AdamState& state, const OptimConfig& config);

/// Called after every epoch with the 1-based epoch number.
using EpochCallback = std::function<void(std::size_t epoch, const ModelBundle& bundle)>;

struct GcdResult {
  std::vector<LossBreakdown> trace;  // one averaged entry per epoch
};

/// Labeled CE + lambda_infomax * InfoMax(unlabeled) as L_main, plus PL-Reg.
GcdResult train_gcd(const TaskSplit& split, ModelBundle& bundle, const TrainRun& run,
                    const EpochCallback& on_epoch = {});

/// Hungarian-matched accuracy of the bundle on `split.test`.
Metrics evaluate_gcd(const ModelBundle& bundle, const TaskSplit& split);

/// Index of the first maximum of a validation curve.
std::size_t select_checkpoint(std::span<const double> curve);

struct MdgResult {
  int held_out_domain = 0;
  Metrics metrics;                      // on the unseen domain, best checkpoint
  std::vector<std::size_t> eval_epochs;
  std::vector<double> validation_curve;  // seen-domain known-class accuracy
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
  ModelBundle checkpoint;  // parameters at best_epoch
  std::vector<LossBreakdown> trace;
};

/// Trains on one leave-one-domain-out split with seen-domain model selection.
MdgResult train_mdg_gcd_split(const TaskSplit& split, ModelBundle bundle, const TrainRun& run,
                              int held_out_domain);

/// Runs every held-out domain in turn; `factory` supplies a fresh bundle per domain.
std::vector<MdgResult> train_mdg_gcd(std::span<const Sample> samples, std::size_t num_known,
                                     const std::function<ModelBundle()>& factory,
                                     const TrainRun& run, std::uint64_t split_seed);

/// Training and evaluation data for every CIL session.
struct CilData {
  std::vector<std::vector<Sample>> train;
  std::vector<SessionEval> eval;        // balanced over all classes seen so far
  std::vector<std::vector<int>> seen;   // head column -> class id after each session
};

CilData build_cil_data(const SyntheticSpec& spec, const CilSchedule& schedule,
                       std::size_t test_per_class, std::uint64_t seed);

struct CilResult {
  CilMetrics metrics;
  std::vector<MaskReport> masks;
  std::vector<std::vector<LossBreakdown>> traces;  // per session
};

/// Sequential sessions with per-session mask re-initialization and head growth.
/// L_main = CE + lambda_kd * sqrt(K_old / K_new) * distill against the pre-session model.
CilResult train_cil(const CilSchedule& schedule, const CilData& data, ModelBundle& bundle,
                    const TrainRun& run);

/// Fraction of rows of [Z*Mask ; Z*(1-Mask)] that C classifies correctly (threshold 0.5).
double partial_separability(const ModelBundle& bundle, const Tensor& x);

}  // namespace plreg
