#include "plreg/losses.hpp"

#include <cmath>

#include "plreg/errors.hpp"

namespace plreg {

namespace {

// log with the probability floor used by every cross-entropy style term
Var safe_log(Var p) { return log(clamp(p, kProbFloor, 1.0)); }

double dim_of(const Var& v) { return static_cast<double>(v.cols()); }

}  // namespace

void LossWeights::validate() const {
  for (auto [name, w] : {std::pair{"w_p1", w_p1}, {"w_p2", w_p2}, {"w_lreg", w_lreg}}) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ConfigError(std::string(name) + " must be finite and >= 0, got " + std::to_string(w));
    }
  }
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  l_p1 += o.l_p1;
  l_p2 += o.l_p2;
  l_lreg += o.l_lreg;
  l_main += o.l_main;
  l_plreg += o.l_plreg;
  l_final += o.l_final;
  return *this;
}

LossBreakdown& LossBreakdown::operator/=(double n) {
  l_p1 /= n;
  l_p2 /= n;
  l_lreg /= n;
  l_main /= n;
  l_plreg /= n;
  l_final /= n;
  return *this;
}

// ---------------------------------------------------------------------------

Var partial_logic_bce(const LayerVars& partial_cls, Var z, Var mask) {
  if (!z.value().same_shape(mask.value())) {
    throw ShapeError("loss_p1: Z " + z.value().shape_str() + " and Mask " +
                     mask.value().shape_str() + " differ");
  }
  const std::size_t b = z.rows();
  if (b == 0) throw ContractError("loss_p1: empty batch");
  Var defined = mul(z, mask);
  Var undefined = mul(z, scalar_sub(1.0, mask));
  Var zcat = concat_rows(defined, undefined);
  if (zcat.cols() != partial_cls.weight.rows()) {
    throw ShapeError("loss_p1: classifier expects width " +
                     std::to_string(partial_cls.weight.rows()) + ", got " +
                     zcat.value().shape_str());
  }
  Var probs = sigmoid(affine(partial_cls, zcat));
  // labels are 1 for the first B rows (defined), 0 for the last B (undefined)
  Var p = clamp(probs, kProbFloor, 1.0 - kProbFloor);
  Var pos = sum(log(slice_rows(p, 0, b)));
  Var neg = sum(log(scalar_sub(1.0, slice_rows(p, b, 2 * b))));
  return scalar_mul(add(pos, neg), -1.0 / static_cast<double>(2 * b));
}

Var loss_p1(const BundleVars& vars, Var z) { return loss_p1(vars, z, mask_forward(vars, z)); }

Var loss_p1(const BundleVars& vars, Var z, Var mask) {
  return partial_logic_bce(vars.partial_cls, z, mask);
}

Var loss_p2(Var mask) {
  if (mask.rows() == 0 || mask.cols() < 2) {
    throw ContractError("loss_p2: needs B >= 1 and dim >= 2, got " + mask.value().shape_str());
  }
  Var m = softmax(mask, Axis::Cols);
  return scalar_mul(mean(xlogx(m)), -1.0);
}

Var lreg_from_assignment(Var a) {
  const double dim = dim_of(a);
  Var term1 = scalar_mul(sum(xlogx(a)), -1.0 / dim);
  Var class_marginal = mean(a, Axis::Cols);  // K x 1
  Var term2 = sum(xlogx(class_marginal));
  return add(term1, term2);
}

Var loss_lreg(Var yhat, Var zin) {
  const Tensor& y = yhat.value();
  if (y.rows() != zin.rows()) {
    throw ShapeError("loss_lreg: Yhat " + y.shape_str() + " and Zin " + zin.value().shape_str() +
                     " have different batch sizes");
  }
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) s += y(i, j);
    if (std::abs(s - 1.0) > 1e-6) {
      throw ContractError("loss_lreg: row " + std::to_string(i) + " of Yhat sums to " +
                          std::to_string(s) + ", expected a probability vector");
    }
  }
  // class x dimension scores, normalized over classes for every dimension
  Var scores = matmul(transpose(yhat), zin);
  return lreg_from_assignment(softmax(scores, Axis::Rows));
}

PlRegTerms loss_plreg(const BundleVars& vars, const ForwardPass& pass, const LossWeights& w) {
  PlRegTerms t;
  t.p1 = loss_p1(vars, pass.z, pass.mask);
  t.p2 = loss_p2(pass.mask);
  t.lreg = loss_lreg(softmax(pass.logits, Axis::Cols), pass.defined);
  t.plreg = add(add(scalar_mul(t.p1, w.w_p1), scalar_mul(t.p2, w.w_p2)),
                scalar_mul(t.lreg, w.w_lreg));
  return t;
}

// ---------------------------------------------------------------------------

Var loss_cross_entropy(Var logits, std::span<const int> labels) {
  const std::size_t b = logits.rows(), k = logits.cols();
  if (labels.size() != b) {
    throw ShapeError("loss_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     logits.value().shape_str() + " logits");
  }
  if (b == 0) throw ContractError("loss_cross_entropy: empty batch");
  Tensor onehot(b, k);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ContractError("loss_cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                          std::to_string(i) + " outside [0," + std::to_string(k) + ")");
    }
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  Graph& g = *logits.graph;
  Var logp = safe_log(softmax(logits, Axis::Cols));
  return scalar_mul(sum(mul(logp, g.constant(std::move(onehot)))), -1.0 / static_cast<double>(b));
}

Var loss_infomax(Var logits) {
  const std::size_t b = logits.rows();
  if (b < 2) throw ContractError("loss_infomax: needs at least 2 samples");
  Var p = softmax(logits, Axis::Cols);
  Var cond_entropy = scalar_mul(sum(xlogx(p)), -1.0 / static_cast<double>(b));
  Var marginal_entropy = scalar_mul(sum(xlogx(mean(p, Axis::Rows))), -1.0);
  return sub(cond_entropy, marginal_entropy);
}

Var loss_distill(Var logits_new, Var logits_old, double temperature) {
  if (!logits_new.value().same_shape(logits_old.value())) {
    throw ShapeError("loss_distill: new logits " + logits_new.value().shape_str() +
                     " vs old logits " + logits_old.value().shape_str());
  }
  if (!(temperature > 0.0)) throw ContractError("loss_distill: temperature must be > 0");
  const double inv_t = 1.0 / temperature;
  Var q_old = softmax(scalar_mul(logits_old, inv_t), Axis::Cols);
  Var log_q_new = safe_log(softmax(scalar_mul(logits_new, inv_t), Axis::Cols));
  Var kl = sub(xlogx(q_old), mul(q_old, log_q_new));
  return scalar_mul(sum(kl), 1.0 / static_cast<double>(logits_new.rows()));
}

FinalLoss total_loss(const PlRegTerms& terms, Var main) {
  return FinalLoss{add(terms.plreg, main), terms, main};
}

LossBreakdown breakdown(const FinalLoss& loss) {
  LossBreakdown b;
  b.l_p1 = loss.terms.p1.value().item();
  b.l_p2 = loss.terms.p2.value().item();
  b.l_lreg = loss.terms.lreg.value().item();
  b.l_plreg = loss.terms.plreg.value().item();
  b.l_main = loss.main.value().item();
  b.l_final = loss.final_loss.value().item();
  return b;
}

}  // namespace plreg
