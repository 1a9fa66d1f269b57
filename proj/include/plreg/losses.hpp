#pragma once

#include <span>
#include <string>

#include "plreg/autodiff.hpp"
#include "plreg/model.hpp"

namespace plreg {

/// Lower clamp applied to probabilities before every log in BCE/CE terms.
inline constexpr double kProbFloor = 1e-12;

struct LossWeights {
  double w_p1 = 0.0;
  double w_p2 = 0.0;
  double w_lreg = 0.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Scalar values of every loss component of one step (or an average of steps).
struct LossBreakdown {
  double l_p1 = 0.0;
  double l_p2 = 0.0;
  double l_lreg = 0.0;
  double l_main = 0.0;
  double l_plreg = 0.0;
  double l_final = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown& operator/=(double n);
};

// --- partial logic terms ---------------------------------------------------

/// Binary cross-entropy of C on [Z*Mask ; Z*(1-Mask)] with labels [1 ; 0].
Var partial_logic_bce(const LayerVars& partial_cls, Var z, Var mask);
/// L_P1 with the mask produced by the bundle's own generator.
Var loss_p1(const BundleVars& vars, Var z);
/// L_P1 from an already computed mask.
Var loss_p1(const BundleVars& vars, Var z, Var mask);

/// Mean entropy of the row-softmaxed mask: -(1/(B*dim)) sum m log m.
Var loss_p2(Var mask);

/// L-Reg from the class-by-dimension assignment matrix a [K x dim]
/// (each column a distribution over classes).
Var lreg_from_assignment(Var assignment);
/// L-Reg on probabilities Yhat [B x K] and features Zin [B x dim].
/// Throws ContractError when a row of Yhat does not sum to 1 within 1e-6.
Var loss_lreg(Var yhat, Var zin);

struct PlRegTerms {
  Var p1;
  Var p2;
  Var lreg;
  Var plreg;
};
/// Weighted sum of the three terms for one forward pass.
PlRegTerms loss_plreg(const BundleVars& vars, const ForwardPass& pass, const LossWeights& weights);

// --- main losses -------------------------------------------------------------

/// Mean negative log softmax probability of the true class.
Var loss_cross_entropy(Var logits, std::span<const int> labels);
/// Mean per-sample prediction entropy minus entropy of the mean prediction.
Var loss_infomax(Var logits);
/// Batch-mean KL(softmax(old/T) || softmax(new/T)).
Var loss_distill(Var logits_new, Var logits_old, double temperature = 2.0);

struct FinalLoss {
  Var final_loss;
  PlRegTerms terms;
  Var main;
};
/// L_final = L_PL-Reg + L_main.
FinalLoss total_loss(const PlRegTerms& terms, Var main);

/// Reads the scalar values of a composed loss.
LossBreakdown breakdown(const FinalLoss& loss);

}  // namespace plreg
