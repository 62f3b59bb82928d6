#pragma once

#include <cstddef>
#include <vector>

#include "mphil/protobank.hpp"
#include "mphil/tape.hpp"

namespace mphil {

/// Objective knobs: beta weights the prototype matching term, tau is the
/// similarity temperature (the inverse concentration of the hyperspherical
/// model).
struct LossConfig {
  double beta = 0.1;
  double tau = 0.1;
};

/// Counters surfaced by the loss terms. cls_clamp_count tracks how often a
/// true-class probability had to be floored at 1e-12 before the log.
struct LossStats {
  std::size_t cls_clamp_count = 0;
  bool ps_k1_fallback = false;
};

/// Invariant prototype matching loss. Numerator: the K prototypes of the
/// true class; denominator adds every prototype of every other class.
/// Always positive (the log argument is strictly inside (0,1)).
Var loss_ipm(Tape& tape, Var zhat, const std::vector<int>& labels, const BankVars& bank,
             double tau);

/// Prototype separation loss: same-class similarity over cross-class
/// similarity, averaged over all C*K prototypes. For K = 1 the intra-class
/// sum is empty; the numerator falls back to exp(1/tau) (self-similarity of
/// a unit vector) and a warning is recorded.
Var loss_ps(Tape& tape, const BankVars& bank, double tau, LossStats* stats = nullptr);

/// Cross-entropy over prototype-based probabilities with the 1/(B*C)
/// normalization. True-class probabilities are floored at 1e-12 (counted in
/// stats) so the log stays finite.
Var loss_cls(Tape& tape, Var probabilities, const std::vector<int>& labels,
             LossStats* stats = nullptr);

/// L = L_C + L_PS + beta * L_IPM.
Var total_loss(Tape& tape, Var l_c, Var l_ps, Var l_ipm, double beta);

/// Conventional -mean log softmax(logits)[y]; used by the plain-GIN
/// reference head.
Var softmax_cross_entropy(Tape& tape, Var logits, const std::vector<int>& labels);

}  // namespace mphil
