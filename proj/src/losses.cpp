#include "mphil/losses.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mphil {

namespace {

constexpr double kProbFloor = 1e-12;

void check_labels(const std::vector<int>& labels, std::size_t batch,
                  std::size_t num_classes, const char* op) {
  if (labels.size() != batch) {
    throw std::invalid_argument(std::string(op) + ": label count " +
                                std::to_string(labels.size()) + " != batch " +
                                std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument(std::string(op) + ": label " + std::to_string(y) +
                                  " out of range");
    }
  }
}

}  // namespace

Var loss_ipm(Tape& tape, Var zhat, const std::vector<int>& labels, const BankVars& bank,
             double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("loss_ipm: tau must be > 0");
  const std::size_t batch = tape.value(zhat).rows();
  if (batch == 0) throw std::invalid_argument("loss_ipm: empty batch");
  const std::size_t num_classes = bank.class_protos.size();
  check_labels(labels, batch, num_classes, "loss_ipm");
  const std::size_t per_class = tape.value(bank.class_protos[0]).rows();

  Var full_bank = tape.concat_rows(bank.class_protos);  // [C*K x d_p]
  Var sims = tape.scale(tape.matmul(zhat, tape.transpose(full_bank)), 1.0 / tau);
  Var e = tape.exp(sims);  // [B x C*K]

  Tensor true_mask(batch, num_classes * per_class);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t k = 0; k < per_class; ++k)
      true_mask.at(i, static_cast<std::size_t>(labels[i]) * per_class + k) = 1.0;

  Var numer = tape.reduce(ReduceKind::sum, tape.mul(e, tape.constant(true_mask)),
                          Axis::cols);               // [B x 1]
  Var denom = tape.reduce(ReduceKind::sum, e, Axis::cols);
  Var ratio = tape.log(tape.div_colvec(numer, denom));
  return tape.scale(tape.sum_all(ratio), -1.0 / static_cast<double>(batch));
}

Var loss_ps(Tape& tape, const BankVars& bank, double tau, LossStats* stats) {
  if (!(tau > 0.0)) throw std::invalid_argument("loss_ps: tau must be > 0");
  const std::size_t num_classes = bank.class_protos.size();
  if (num_classes < 2) throw std::invalid_argument("loss_ps: need >= 2 classes");
  const std::size_t per_class = tape.value(bank.class_protos[0]).rows();
  const std::size_t total = num_classes * per_class;

  Var full_bank = tape.concat_rows(bank.class_protos);
  Var sims = tape.scale(tape.matmul(full_bank, tape.transpose(full_bank)), 1.0 / tau);
  Var e = tape.exp(sims);  // [C*K x C*K]

  Tensor cross_mask(total, total);
  for (std::size_t r = 0; r < total; ++r)
    for (std::size_t q = 0; q < total; ++q)
      if (r / per_class != q / per_class) cross_mask.at(r, q) = 1.0;
  Var denom = tape.reduce(ReduceKind::sum, tape.mul(e, tape.constant(cross_mask)),
                          Axis::cols);  // [C*K x 1]

  Var numer;
  if (per_class == 1) {
    // The paper's intra-class sum is empty for a single prototype per class;
    // fall back to the self-similarity of a unit vector.
    static bool warned = false;
    if (!warned) {
      std::fprintf(stderr,
                   "loss_ps: K = 1, substituting exp(1/tau) for the empty "
                   "intra-class sum\n");
      warned = true;
    }
    if (stats) stats->ps_k1_fallback = true;
    numer = tape.constant(Tensor::full(total, 1, std::exp(1.0 / tau)));
  } else {
    Tensor intra_mask(total, total);
    for (std::size_t r = 0; r < total; ++r)
      for (std::size_t q = 0; q < total; ++q)
        if (r != q && r / per_class == q / per_class) intra_mask.at(r, q) = 1.0;
    numer = tape.reduce(ReduceKind::sum, tape.mul(e, tape.constant(intra_mask)),
                        Axis::cols);
  }

  Var ratio = tape.log(tape.div_colvec(numer, denom));
  return tape.scale(tape.sum_all(ratio), -1.0 / static_cast<double>(total));
}

Var loss_cls(Tape& tape, Var probabilities, const std::vector<int>& labels,
             LossStats* stats) {
  const Tensor& p = tape.value(probabilities);
  const std::size_t batch = p.rows();
  const std::size_t num_classes = p.cols();
  if (batch == 0) throw std::invalid_argument("loss_cls: empty batch");
  check_labels(labels, batch, num_classes, "loss_cls");

  Tensor onehot(batch, num_classes);
  for (std::size_t i = 0; i < batch; ++i)
    onehot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;

  Var p_true = tape.reduce(ReduceKind::sum, tape.mul(probabilities, tape.constant(onehot)),
                           Axis::cols);  // [B x 1]
  if (stats) {
    const Tensor& pt = tape.value(p_true);
    for (std::size_t i = 0; i < pt.size(); ++i)
      if (pt.data()[i] <= kProbFloor) ++stats->cls_clamp_count;
  }
  Var logs = tape.log(tape.clamp_min(p_true, kProbFloor));
  return tape.scale(tape.sum_all(logs),
                    -1.0 / static_cast<double>(batch * num_classes));
}

Var total_loss(Tape& tape, Var l_c, Var l_ps, Var l_ipm, double beta) {
  if (beta < 0.0) throw std::invalid_argument("total_loss: beta must be >= 0");
  return tape.add(tape.add(l_c, l_ps), tape.scale(l_ipm, beta));
}

Var softmax_cross_entropy(Tape& tape, Var logits, const std::vector<int>& labels) {
  const Tensor& l = tape.value(logits);
  check_labels(labels, l.rows(), l.cols(), "softmax_cross_entropy");
  Var p = tape.softmax_rows(logits);
  Tensor onehot(l.rows(), l.cols());
  for (std::size_t i = 0; i < l.rows(); ++i)
    onehot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  Var p_true = tape.reduce(ReduceKind::sum, tape.mul(p, tape.constant(onehot)), Axis::cols);
  Var logs = tape.log(tape.clamp_min(p_true, kProbFloor));
  return tape.scale(tape.sum_all(logs), -1.0 / static_cast<double>(l.rows()));
}

}  // namespace mphil
