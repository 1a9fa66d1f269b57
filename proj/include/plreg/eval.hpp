#pragma once

#include <cstddef>
#include <functional>
#include <set>
#include <span>
#include <vector>

#include "plreg/model.hpp"
#include "plreg/protocols.hpp"
#include "plreg/tensor.hpp"

namespace plreg {

/// Square matrix of finite assignment costs.
class CostMatrix {
 public:
  explicit CostMatrix(Tensor cost);
  std::size_t n() const { return cost_.rows(); }
  double operator()(std::size_t r, std::size_t c) const { return cost_(r, c); }
  const Tensor& tensor() const { return cost_; }

 private:
  Tensor cost_;
};

struct Assignment {
  std::vector<std::size_t> row_to_col;
  double total_cost = 0.0;
};

/// Minimum-cost perfect assignment, O(n^3). Among several optima the
/// lexicographically smallest row_to_col is returned.
Assignment hungarian(const CostMatrix& cost);

struct Metrics {
  double acc_all = 0.0;
  double acc_known = 0.0;
  double acc_unknown = 0.0;
  std::size_t n_all = 0;
  std::size_t n_known = 0;
  std::size_t n_unknown = 0;
};

/// Clustering accuracy under one global optimal cluster->class map.
///
/// The contingency matrix has one row per distinct predicted id (ascending)
/// and one column per class, padded with zero rows to square. Known/unknown
/// accuracies are taken over samples whose true class is known/unknown.
/// An empty subset reports accuracy 0.
Metrics cluster_accuracy(std::span<const int> predicted, std::span<const int> truth,
                         const std::set<int>& known_classes, std::size_t num_classes);

struct CilMetrics {
  std::vector<double> per_session_acc;
  double average = 0.0;
};

/// Evaluation set of one CIL session: balanced test data of every class seen so far.
struct SessionEval {
  std::vector<Sample> test;
};

/// Returns a predicted class id per row of the input.
using Predictor = std::function<std::vector<int>(const Tensor& x)>;

CilMetrics cil_metrics(std::span<const SessionEval> sessions, std::span<const Predictor> models);
CilMetrics cil_metrics_from(std::vector<double> per_session_acc);

/// Maps head columns back to class ids (column i predicts seen_classes[i]).
Predictor bundle_predictor(const ModelBundle& bundle, std::vector<int> seen_classes);

/// 1 - matched accuracy of hard assignments against ground-truth membership.
double generalization_gap(std::span<const int> predicted, std::span<const int> truth,
                          std::size_t num_classes);
double generalization_gap(const ModelBundle& model, std::span<const Sample> unseen,
                          std::size_t num_classes);

/// Plain accuracy of `predicted` against `truth`.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

}  // namespace plreg
