#pragma once

#include <vector>

#include "mphil/graph.hpp"
#include "mphil/rng.hpp"
#include "mphil/tape.hpp"

namespace mphil {

/// One GIN layer: h_v <- MLP((1 + eps) * h_v + sum_{u in N(v)} h_u) with a
/// two-affine ReLU MLP of widths d_in -> d_h -> d_out. eps is learnable and
/// starts at 0.
struct GinLayer {
  Tensor eps;  // [1x1]
  Tensor w1, b1, w2, b2;
};

/// The two GNN stacks: GNN_E produces node representations H, GNN_S the
/// separation scores S. Same architecture, independent weights.
struct EncoderParams {
  std::vector<GinLayer> gnn_e;
  std::vector<GinLayer> gnn_s;
  std::size_t hidden_dim = 0;  // output dim d of both stacks
};

GinLayer make_gin_layer(std::size_t d_in, std::size_t d_h, std::size_t d_out,
                        RngStream& rng);
EncoderParams make_encoder_params(std::size_t depth, std::size_t feature_dim,
                                  std::size_t hidden_dim, RngStream& rng);

/// Tape handles for one layer / the full encoder.
struct GinLayerVars {
  Var eps, w1, b1, w2, b2;
};
struct EncoderVars {
  std::vector<GinLayerVars> gnn_e;
  std::vector<GinLayerVars> gnn_s;
};

GinLayerVars bind(Tape& tape, const GinLayer& layer, bool requires_grad);
EncoderVars bind(Tape& tape, const EncoderParams& params, bool requires_grad);

/// Several graphs packed as one disjoint union so a whole batch runs through
/// single matmuls. Per-node results are identical to processing each graph
/// alone (no cross-graph edges, per-graph readout segments).
struct BatchGraph {
  Tensor features;  // [N x f]
  std::vector<std::size_t> src;  // directed edges, both directions per stored edge
  std::vector<std::size_t> dst;
  std::vector<std::size_t> graph_of_node;  // [N]
  std::vector<std::size_t> node_counts;    // per graph
  std::size_t num_graphs = 0;
  std::size_t num_nodes = 0;

  static BatchGraph from(const std::vector<const Graph*>& graphs);
  static BatchGraph from(const Graph& graph);
};

Var gin_layer_forward(Tape& tape, const GinLayerVars& layer, Var node_feats,
                      const std::vector<std::size_t>& src,
                      const std::vector<std::size_t>& dst, std::size_t num_nodes);

struct EncodeOut {
  Var h;  // [N x d]
  Var s;  // [N x d], sigmoid output in (0,1)
};

/// H = GNN_E(G), S = sigmoid(GNN_S(G)). Throws on an empty batch.
EncodeOut encode(Tape& tape, const EncoderVars& enc, const BatchGraph& batch);

enum class ReadoutKind { mean, sum };

/// Graph-level representation: readout over nodes of H .* S. The batched
/// form returns one row per graph.
Var gated_readout(Tape& tape, Var h, Var s, ReadoutKind kind = ReadoutKind::mean);
Var gated_readout_batch(Tape& tape, Var h, Var s, const BatchGraph& batch,
                        ReadoutKind kind = ReadoutKind::mean);

}  // namespace mphil
