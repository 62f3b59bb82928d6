#pragma once

#include <vector>

#include "mphil/rng.hpp"
#include "mphil/tape.hpp"

namespace mphil {

/// K unit-norm prototypes per class, stored row-major as [C*K x d_p] with
/// prototype (c,k) at row c*K + k. Every row keeps unit L2 norm after init
/// and after every EMA update.
struct PrototypeBank {
  std::size_t num_classes = 0;  // C >= 2
  std::size_t per_class = 0;    // K >= 1
  std::size_t dim = 0;          // d_p
  Tensor m;

  Tensor class_block(std::size_t c) const;  // [K x d_p]
  std::size_t row_of(std::size_t c, std::size_t k) const { return c * per_class + k; }
};

/// Gaussian draws normalized onto the sphere; random directions keep the
/// prototypes spread out at the start of training.
PrototypeBank init_prototypes(std::size_t num_classes, std::size_t per_class,
                              std::size_t dim, RngStream& rng);

/// Query/key maps of the attention-based matching mechanism.
struct AttentionParams {
  Tensor wq;  // [d_p x d']
  Tensor wk;  // [d_p x d']
};

AttentionParams make_attention_params(std::size_t dim, std::size_t proj_dim,
                                      RngStream& rng);

struct AttentionVars {
  Var wq, wk;
};

AttentionVars bind(Tape& tape, const AttentionParams& params, bool requires_grad);

/// Per-class prototype handles on a tape. Frozen bindings are constants;
/// within a training step the EMA update produces differentiable blocks.
struct BankVars {
  std::vector<Var> class_protos;  // C entries, each [K x d_p]
};

BankVars bind_frozen(Tape& tape, const PrototypeBank& bank);

// ---- tape-side pipeline (used by training and inference) -----------------

/// softmax(Q K^T / sqrt(d')) rows: one probability row over the K prototypes
/// of one class per sample.
Var assignment_weights(Tape& tape, const AttentionVars& att, Var zhat,
                       Var class_protos);

/// Keep the n largest weights per row (ties to the lower prototype index),
/// zero the rest, rescale survivors to sum 1. n == K returns the input
/// unchanged.
Var prune_weights(Tape& tape, Var weights, std::size_t n);

/// Differentiable EMA update for the classes present in the batch; absent
/// classes come through as frozen constants. `pruned_weights[c]` is the
/// [B x K] post-pruning weight block for class c.
BankVars ema_update_tape(Tape& tape, const PrototypeBank& old_bank, Var zhat,
                         const std::vector<int>& labels,
                         const std::vector<Var>& pruned_weights, double alpha);

/// p(y=c|z) = max_k w_k^(c) exp(mu_k^(c).z / tau), normalized over classes.
/// Throws if any (sample, class) weight row is all zero.
Var class_probabilities_tape(Tape& tape, Var zhat, const BankVars& bank,
                             const std::vector<Var>& pruned_weights, double tau);

// ---- value-level entry points (wrap a scratch tape) -----------------------

Tensor assignment_weights(const AttentionParams& att, const Tensor& zhat,
                          const PrototypeBank& bank, std::size_t c);

Tensor prune_weights(const Tensor& weights, std::size_t n);

/// mu <- Norm(alpha*mu + (1-alpha) * sum_i 1(y_i=c) w_{i,k} z_i), summed in
/// ascending batch order; classes absent from the batch are untouched.
PrototypeBank ema_update(const PrototypeBank& bank, const Tensor& zhat,
                         const std::vector<int>& labels,
                         const std::vector<Tensor>& pruned_weights, double alpha);

/// Single-sample probabilities; `weights` is [C x K].
std::vector<double> class_probabilities(const PrototypeBank& bank, const Tensor& weights,
                                        const Tensor& zhat_row, double tau);

/// For each prototype, the ids of the `top_m` embeddings with the highest
/// dot-product similarity, descending. Indexed [c*K + k].
std::vector<std::vector<std::size_t>> nearest_samples(const PrototypeBank& bank,
                                                      const Tensor& embeddings,
                                                      std::size_t top_m);

}  // namespace mphil
