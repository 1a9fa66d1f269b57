#include "plreg/eval.hpp"

#include <map>

#include "plreg/errors.hpp"

namespace plreg {

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw ContractError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw ContractError("accuracy: empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

Metrics cluster_accuracy(std::span<const int> predicted, std::span<const int> truth,
                         const std::set<int>& known_classes, std::size_t num_classes) {
  if (predicted.size() != truth.size()) {
    throw ContractError("cluster_accuracy: prediction and label counts differ");
  }
  if (truth.empty()) throw ContractError("cluster_accuracy: empty evaluation set");
  const int k = static_cast<int>(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] < 0 || predicted[i] >= k || truth[i] < 0 || truth[i] >= k) {
      throw ContractError("cluster_accuracy: id outside [0," + std::to_string(k) + ") at sample " +
                          std::to_string(i));
    }
  }

  std::map<int, std::size_t> row_of;  // predicted id -> contingency row, ascending ids
  for (int p : predicted) row_of.emplace(p, 0);
  std::size_t next = 0;
  for (auto& [id, row] : row_of) row = next++;

  Tensor cost(num_classes, num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i)
    cost(row_of[predicted[i]], static_cast<std::size_t>(truth[i])) -= 1.0;
  const Assignment a = hungarian(CostMatrix(std::move(cost)));

  Metrics m;
  std::size_t hit_all = 0, hit_known = 0, hit_unknown = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int mapped = static_cast<int>(a.row_to_col[row_of[predicted[i]]]);
    const bool hit = mapped == truth[i];
    const bool known = known_classes.count(truth[i]) != 0;
    hit_all += hit;
    ++m.n_all;
    if (known) {
      hit_known += hit;
      ++m.n_known;
    } else {
      hit_unknown += hit;
      ++m.n_unknown;
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.acc_all = ratio(hit_all, m.n_all);
  m.acc_known = ratio(hit_known, m.n_known);
  m.acc_unknown = ratio(hit_unknown, m.n_unknown);
  return m;
}

CilMetrics cil_metrics_from(std::vector<double> per_session_acc) {
  CilMetrics m;
  m.per_session_acc = std::move(per_session_acc);
  double s = 0.0;
  for (double a : m.per_session_acc) s += a;
  m.average = m.per_session_acc.empty() ? 0.0 : s / static_cast<double>(m.per_session_acc.size());
  return m;
}

CilMetrics cil_metrics(std::span<const SessionEval> sessions, std::span<const Predictor> models) {
  if (sessions.size() != models.size()) {
    throw ContractError("cil_metrics: " + std::to_string(sessions.size()) + " sessions but " +
                        std::to_string(models.size()) + " model snapshots");
  }
  std::vector<double> acc;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& test = sessions[i].test;
    acc.push_back(accuracy(models[i](features_of(test)), labels_of(test)));
  }
  return cil_metrics_from(std::move(acc));
}

Predictor bundle_predictor(const ModelBundle& bundle, std::vector<int> seen_classes) {
  return [bundle, seen = std::move(seen_classes)](const Tensor& x) {
    const Tensor logits = predict_logits(bundle, x);
    const std::size_t width = std::min(seen.size(), logits.cols());
    std::vector<int> out(logits.rows(), -1);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < width; ++j)
        if (logits(i, j) > logits(i, best)) best = j;
      if (width > 0) out[i] = seen[best];
    }
    return out;
  };
}

double generalization_gap(std::span<const int> predicted, std::span<const int> truth,
                          std::size_t num_classes) {
  if (truth.empty()) throw ContractError("generalization_gap: empty unseen subset");
  return 1.0 - cluster_accuracy(predicted, truth, {}, num_classes).acc_all;
}

double generalization_gap(const ModelBundle& model, std::span<const Sample> unseen,
                          std::size_t num_classes) {
  if (unseen.empty()) throw ContractError("generalization_gap: empty unseen subset");
  return generalization_gap(predict(model, features_of(unseen)), labels_of(unseen), num_classes);
}

}  // namespace plreg
