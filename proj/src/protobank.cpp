#include "mphil/protobank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mphil {

Tensor PrototypeBank::class_block(std::size_t c) const {
  Tensor block(per_class, dim);
  for (std::size_t k = 0; k < per_class; ++k)
    for (std::size_t j = 0; j < dim; ++j) block.at(k, j) = m.at(row_of(c, k), j);
  return block;
}

PrototypeBank init_prototypes(std::size_t num_classes, std::size_t per_class,
                              std::size_t dim, RngStream& rng) {
  if (num_classes < 2 || per_class < 1 || dim < 1) {
    throw std::invalid_argument("init_prototypes: need C >= 2, K >= 1, d_p >= 1");
  }
  PrototypeBank bank;
  bank.num_classes = num_classes;
  bank.per_class = per_class;
  bank.dim = dim;
  bank.m = Tensor(num_classes * per_class, dim);
  for (std::size_t r = 0; r < bank.m.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      bank.m.at(r, j) = rng.normal();
      sq += bank.m.at(r, j) * bank.m.at(r, j);
    }
    const double norm = std::sqrt(sq);
    for (std::size_t j = 0; j < dim; ++j) bank.m.at(r, j) /= norm;
  }
  return bank;
}

AttentionParams make_attention_params(std::size_t dim, std::size_t proj_dim,
                                      RngStream& rng) {
  if (dim == 0 || proj_dim == 0) {
    throw std::invalid_argument("make_attention_params: zero dimension");
  }
  const double bound = 1.0;  // sharp scores: soft attention collapses the bank
  auto draw = [&] {
    Tensor t(dim, proj_dim);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
  };
  return AttentionParams{draw(), draw()};
}

AttentionVars bind(Tape& tape, const AttentionParams& params, bool requires_grad) {
  return AttentionVars{tape.leaf(params.wq, requires_grad),
                       tape.leaf(params.wk, requires_grad)};
}

BankVars bind_frozen(Tape& tape, const PrototypeBank& bank) {
  BankVars vars;
  for (std::size_t c = 0; c < bank.num_classes; ++c)
    vars.class_protos.push_back(tape.constant(bank.class_block(c)));
  return vars;
}

Var assignment_weights(Tape& tape, const AttentionVars& att, Var zhat,
                       Var class_protos) {
  Var q = tape.matmul(zhat, att.wq);
  Var k = tape.matmul(class_protos, att.wk);
  const double d_prime = static_cast<double>(tape.value(q).cols());
  Var scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(d_prime));
  return tape.softmax_rows(scores);
}

namespace {

/// 0/1 keep-mask for the top-n entries per row, ties to the lower index.
Tensor top_n_mask(const Tensor& w, std::size_t n) {
  Tensor mask(w.rows(), w.cols());
  std::vector<std::size_t> order(w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return w.at(i, a) > w.at(i, b);
    });
    for (std::size_t r = 0; r < n; ++r) mask.at(i, order[r]) = 1.0;
  }
  return mask;
}

}  // namespace

Var prune_weights(Tape& tape, Var weights, std::size_t n) {
  const Tensor& w = tape.value(weights);
  if (n < 1 || n > w.cols()) {
    throw std::invalid_argument("prune_weights: n = " + std::to_string(n) +
                                " out of range for " + w.shape_str());
  }
  if (n == w.cols()) return weights;
  Var masked = tape.mul(weights, tape.constant(top_n_mask(w, n)));
  Var sums = tape.reduce(ReduceKind::sum, masked, Axis::cols);
  return tape.div_colvec(masked, sums);
}

BankVars ema_update_tape(Tape& tape, const PrototypeBank& old_bank, Var zhat,
                         const std::vector<int>& labels,
                         const std::vector<Var>& pruned_weights, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("ema_update: alpha must be in [0,1]");
  }
  if (labels.size() != tape.value(zhat).rows()) {
    throw std::invalid_argument("ema_update: label count mismatch");
  }
  BankVars fresh;
  for (std::size_t c = 0; c < old_bank.num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == static_cast<int>(c)) members.push_back(i);
    Var old_block = tape.constant(old_bank.class_block(c));
    if (members.empty() || alpha == 1.0) {
      fresh.class_protos.push_back(old_block);
      continue;
    }
    Var wc = tape.gather_rows(pruned_weights[c], members);  // [Bc x K]
    Var zc = tape.gather_rows(zhat, members);               // [Bc x d_p]
    Var weighted = tape.matmul(tape.transpose(wc), zc);     // [K x d_p], batch order
    Var blended = tape.add(tape.scale(old_block, alpha), tape.scale(weighted, 1.0 - alpha));
    fresh.class_protos.push_back(tape.l2_normalize_rows(blended));
  }
  return fresh;
}

Var class_probabilities_tape(Tape& tape, Var zhat, const BankVars& bank,
                             const std::vector<Var>& pruned_weights, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("class_probabilities: tau must be > 0");
  const std::size_t num_classes = bank.class_protos.size();
  if (pruned_weights.size() != num_classes) {
    throw std::invalid_argument("class_probabilities: weight blocks != classes");
  }
  std::vector<Var> per_class;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const Tensor& w = tape.value(pruned_weights[c]);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      bool any = false;
      for (std::size_t k = 0; k < w.cols(); ++k) any = any || w.at(i, k) > 0.0;
      if (!any) {
        throw std::invalid_argument("class_probabilities: sample " + std::to_string(i) +
                                    " has no positive weight for class " +
                                    std::to_string(c));
      }
    }
    Var sims = tape.scale(tape.matmul(zhat, tape.transpose(bank.class_protos[c])),
                          1.0 / tau);
    Var scored = tape.mul(pruned_weights[c], tape.exp(sims));
    per_class.push_back(tape.reduce(ReduceKind::max, scored, Axis::cols));  // [B x 1]
  }
  Var scores = tape.concat_cols(per_class);                       // [B x C]
  Var denom = tape.reduce(ReduceKind::sum, scores, Axis::cols);   // [B x 1]
  return tape.div_colvec(scores, denom);
}

// ---- value-level wrappers -------------------------------------------------

Tensor assignment_weights(const AttentionParams& att, const Tensor& zhat,
                          const PrototypeBank& bank, std::size_t c) {
  Tape tape;
  AttentionVars av = bind(tape, att, false);
  Var w = assignment_weights(tape, av, tape.constant(zhat),
                             tape.constant(bank.class_block(c)));
  return tape.value(w);
}

Tensor prune_weights(const Tensor& weights, std::size_t n) {
  Tape tape;
  return tape.value(prune_weights(tape, tape.constant(weights), n));
}

PrototypeBank ema_update(const PrototypeBank& bank, const Tensor& zhat,
                         const std::vector<int>& labels,
                         const std::vector<Tensor>& pruned_weights, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("ema_update: alpha must be in [0,1]");
  }
  PrototypeBank out = bank;
  if (alpha == 1.0) return out;  // exact identity: prototypes already unit norm
  for (std::size_t c = 0; c < bank.num_classes; ++c) {
    bool present = false;
    for (int y : labels) present = present || y == static_cast<int>(c);
    if (!present) continue;
    const Tensor& w = pruned_weights[c];
    for (std::size_t k = 0; k < bank.per_class; ++k) {
      // weighted batch sum in ascending sample order, then blend + normalize
      std::vector<double> acc(bank.dim, 0.0);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != static_cast<int>(c)) continue;
        const double wik = w.at(i, k);
        for (std::size_t j = 0; j < bank.dim; ++j) acc[j] += wik * zhat.at(i, j);
      }
      std::vector<double> blended(bank.dim);
      for (std::size_t j = 0; j < bank.dim; ++j)
        blended[j] = alpha * bank.m.at(bank.row_of(c, k), j) + (1.0 - alpha) * acc[j];
      double sq = 0.0;
      for (std::size_t j = 0; j < bank.dim; ++j) sq += blended[j] * blended[j];
      const double norm = std::sqrt(sq);
      if (norm < Tape::kNormFloor) {
        throw std::domain_error("ema_update: degenerate prototype (" + std::to_string(c) +
                                "," + std::to_string(k) + ")");
      }
      for (std::size_t j = 0; j < bank.dim; ++j)
        out.m.at(out.row_of(c, k), j) = blended[j] / norm;
    }
  }
  return out;
}

std::vector<double> class_probabilities(const PrototypeBank& bank, const Tensor& weights,
                                        const Tensor& zhat_row, double tau) {
  if (weights.rows() != bank.num_classes || weights.cols() != bank.per_class) {
    throw std::invalid_argument("class_probabilities: weights must be [C x K], got " +
                                weights.shape_str());
  }
  Tape tape;
  BankVars bv = bind_frozen(tape, bank);
  std::vector<Var> per_class;
  for (std::size_t c = 0; c < bank.num_classes; ++c) {
    Tensor row(1, bank.per_class);
    for (std::size_t k = 0; k < bank.per_class; ++k) row.at(0, k) = weights.at(c, k);
    per_class.push_back(tape.constant(row));
  }
  Var p = class_probabilities_tape(tape, tape.constant(zhat_row), bv, per_class, tau);
  return tape.value(p).values();
}

std::vector<std::vector<std::size_t>> nearest_samples(const PrototypeBank& bank,
                                                      const Tensor& embeddings,
                                                      std::size_t top_m) {
  if (embeddings.rows() == 0) {
    throw std::invalid_argument("nearest_samples: empty embedding set");
  }
  if (embeddings.cols() != bank.dim) {
    throw std::invalid_argument("nearest_samples: dim mismatch: " +
                                embeddings.shape_str());
  }
  const std::size_t m = std::min<std::size_t>(top_m, embeddings.rows());
  std::vector<std::vector<std::size_t>> result;
  for (std::size_t r = 0; r < bank.m.rows(); ++r) {
    std::vector<std::pair<double, std::size_t>> sims;
    sims.reserve(embeddings.rows());
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < bank.dim; ++j) dot += bank.m.at(r, j) * embeddings.at(i, j);
      sims.push_back({dot, i});
    }
    std::stable_sort(sims.begin(), sims.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < m; ++i) ids.push_back(sims[i].second);
    result.push_back(std::move(ids));
  }
  return result;
}

}  // namespace mphil
