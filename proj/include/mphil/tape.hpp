#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "mphil/tensor.hpp"

namespace mphil {

/// Handle to a node on a Tape. Only valid for the tape that issued it.
struct Var {
  std::uint32_t id = 0;
};

enum class UnaryKind { sigmoid, relu, exp, log, neg };
enum class ReduceKind { sum, mean, max };

/// Reduction axis: `rows` collapses the row dimension ([m x n] -> [1 x n]),
/// `cols` collapses the column dimension ([m x n] -> [m x 1]).
enum class Axis { rows, cols };

/// Reverse-mode computation tape over dense 2-D tensors.
///
/// Nodes are recorded in topological order (inputs always precede their
/// consumers), so backward() is a single reverse sweep that visits each node
/// at most once. Gradients of a value consumed twice accumulate.
///
/// Summation order is pinned everywhere (ascending flat/edge index, inner
/// matmul dimension ascending) so results are bit-reproducible and the
/// scalar reference implementations in the tests can match exactly.
///
/// A tape and its tensors belong to one worker; model parameters are copied
/// in as leaves at the start of a step and their gradients read out after
/// backward().
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Insert a leaf. If `requires_grad`, backward() accumulates into it.
  Var leaf(Tensor value, bool requires_grad = false);

  /// Leaf that never receives gradient (masks, data, frozen prototypes).
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // ---- primitive operations -------------------------------------------

  /// [m x k] * [k x n] -> [m x n]. dA = dC*B^T, dB = A^T*dC.
  Var matmul(Var a, Var b);
  Var transpose(Var x);

  Var add(Var a, Var b);  // same shape
  Var sub(Var a, Var b);  // same shape
  Var mul(Var a, Var b);  // elementwise, same shape

  /// [m x n] + [1 x n] bias row broadcast over rows (the only broadcast add).
  Var add_rowvec(Var a, Var bias);

  /// Divide each row of `a` [m x n] by the matching entry of `b` [m x 1].
  Var div_colvec(Var a, Var b);

  /// Multiply every entry by the 1x1 tensor `s` (e.g. the learnable GIN eps).
  Var scalar_mul(Var s, Var x);

  Var scale(Var x, double factor);     // constant factor
  Var add_const(Var x, double value);  // constant shift

  /// max(x, floor) with subgradient 1 where x > floor, else 0.
  Var clamp_min(Var x, double floor);

  Var apply_unary(UnaryKind kind, Var x);
  Var sigmoid(Var x) { return apply_unary(UnaryKind::sigmoid, x); }
  Var relu(Var x) { return apply_unary(UnaryKind::relu, x); }
  Var exp(Var x) { return apply_unary(UnaryKind::exp, x); }
  Var log(Var x) { return apply_unary(UnaryKind::log, x); }
  Var neg(Var x) { return apply_unary(UnaryKind::neg, x); }

  /// Row-wise softmax with max subtraction; each output row sums to 1.
  Var softmax_rows(Var x);

  /// Row-wise v / ||v||2. Rows with norm below `kNormFloor` are errors:
  /// a degenerate representation means a broken upstream, not data to clamp.
  Var l2_normalize_rows(Var x);

  /// Row s of the output is the sum (ascending input index) of the rows
  /// whose segment id is s. Empty segments stay zero.
  Var segment_sum(Var values, const std::vector<std::size_t>& segment_ids,
                  std::size_t num_segments);

  /// Select rows by index, in the given order; backward scatter-adds.
  Var gather_rows(Var x, const std::vector<std::size_t>& row_ids);

  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);

  Var reduce(ReduceKind kind, Var x, Axis axis);

  /// Sum / mean over all entries in row-major order -> 1x1.
  Var sum_all(Var x);
  Var mean_all(Var x);

  // ---- backward --------------------------------------------------------

  /// Reverse sweep from a 1x1 loss; accumulates d(loss)/d(leaf) into every
  /// requires_grad node. Grad of a leaf is then available via grad().
  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[v.id].tensor; }

  /// Gradient of `v` after backward(); zeros if it never received one.
  Tensor grad(Var v) const;

  std::size_t num_nodes() const { return nodes_.size(); }

  static constexpr double kNormFloor = 1e-12;

private:
  struct Node {
    Tensor tensor;  // value + (requires_grad, grad accumulator)
    std::function<void(Tape&)> backward;  // null for leaves
  };

  // deque: references returned by value() stay valid as ops are recorded
  std::deque<Node> nodes_;

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> backward,
           const char* op);
  bool wants_grad(Var v) const { return nodes_[v.id].tensor.requires_grad; }

  /// Grad buffer of `v`, allocated zeroed on first use.
  std::vector<double>& grad_buf(Var v);
  const std::vector<double>& out_grad(Var v) const { return nodes_[v.id].tensor.grad; }
};

// ---- plain-value kernels (shared by forward ops and test oracles) -------

/// C = A*B accumulating the inner dimension in ascending order.
Tensor matmul_value(const Tensor& a, const Tensor& b);

}  // namespace mphil
