#include "mphil/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace mphil {

namespace {

Tensor fan_in_uniform(std::size_t rows, std::size_t cols, RngStream& rng) {
  // uniform in +-1/sqrt(fan_in); fan_in = rows for a [in x out] weight
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

}  // namespace

GinLayer make_gin_layer(std::size_t d_in, std::size_t d_h, std::size_t d_out,
                        RngStream& rng) {
  GinLayer layer;
  layer.eps = Tensor::scalar(0.0);
  layer.w1 = fan_in_uniform(d_in, d_h, rng);
  layer.b1 = fan_in_uniform(1, d_h, rng);
  layer.w2 = fan_in_uniform(d_h, d_out, rng);
  layer.b2 = fan_in_uniform(1, d_out, rng);
  return layer;
}

EncoderParams make_encoder_params(std::size_t depth, std::size_t feature_dim,
                                  std::size_t hidden_dim, RngStream& rng) {
  if (depth == 0 || hidden_dim == 0 || feature_dim == 0) {
    throw std::invalid_argument("make_encoder_params: zero dimension");
  }
  EncoderParams params;
  params.hidden_dim = hidden_dim;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t d_in = l == 0 ? feature_dim : hidden_dim;
    params.gnn_e.push_back(make_gin_layer(d_in, hidden_dim, hidden_dim, rng));
  }
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t d_in = l == 0 ? feature_dim : hidden_dim;
    params.gnn_s.push_back(make_gin_layer(d_in, hidden_dim, hidden_dim, rng));
  }
  return params;
}

GinLayerVars bind(Tape& tape, const GinLayer& layer, bool requires_grad) {
  return GinLayerVars{tape.leaf(layer.eps, requires_grad),
                      tape.leaf(layer.w1, requires_grad),
                      tape.leaf(layer.b1, requires_grad),
                      tape.leaf(layer.w2, requires_grad),
                      tape.leaf(layer.b2, requires_grad)};
}

EncoderVars bind(Tape& tape, const EncoderParams& params, bool requires_grad) {
  EncoderVars vars;
  for (const GinLayer& l : params.gnn_e) vars.gnn_e.push_back(bind(tape, l, requires_grad));
  for (const GinLayer& l : params.gnn_s) vars.gnn_s.push_back(bind(tape, l, requires_grad));
  return vars;
}

BatchGraph BatchGraph::from(const std::vector<const Graph*>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("BatchGraph: empty batch");
  BatchGraph b;
  b.num_graphs = graphs.size();
  std::size_t total_nodes = 0;
  const std::size_t f = graphs[0]->node_features.cols();
  for (const Graph* g : graphs) {
    if (g->num_nodes == 0) throw std::invalid_argument("BatchGraph: empty graph");
    if (g->node_features.cols() != f) {
      throw std::invalid_argument("BatchGraph: feature dim mismatch: " +
                                  g->node_features.shape_str());
    }
    total_nodes += g->num_nodes;
  }
  b.num_nodes = total_nodes;
  b.features = Tensor(total_nodes, f);
  std::size_t offset = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph* g = graphs[gi];
    for (std::size_t v = 0; v < g->num_nodes; ++v) {
      for (std::size_t k = 0; k < f; ++k)
        b.features.at(offset + v, k) = g->node_features.at(v, k);
      b.graph_of_node.push_back(gi);
    }
    for (const auto& [s, d] : g->edges) {
      b.src.push_back(offset + s);
      b.dst.push_back(offset + d);
      b.src.push_back(offset + d);
      b.dst.push_back(offset + s);
    }
    b.node_counts.push_back(g->num_nodes);
    offset += g->num_nodes;
  }
  return b;
}

BatchGraph BatchGraph::from(const Graph& graph) {
  return from(std::vector<const Graph*>{&graph});
}

Var gin_layer_forward(Tape& tape, const GinLayerVars& layer, Var node_feats,
                      const std::vector<std::size_t>& src,
                      const std::vector<std::size_t>& dst, std::size_t num_nodes) {
  Var self_term = tape.scalar_mul(tape.add_const(layer.eps, 1.0), node_feats);
  Var agg = self_term;
  if (!src.empty()) {
    Var neighbor_sum = tape.segment_sum(tape.gather_rows(node_feats, src), dst, num_nodes);
    agg = tape.add(self_term, neighbor_sum);
  }
  Var hidden = tape.relu(tape.add_rowvec(tape.matmul(agg, layer.w1), layer.b1));
  return tape.add_rowvec(tape.matmul(hidden, layer.w2), layer.b2);
}

EncodeOut encode(Tape& tape, const EncoderVars& enc, const BatchGraph& batch) {
  if (batch.num_nodes == 0) throw std::invalid_argument("encode: empty graph");
  Var feats = tape.constant(batch.features);
  Var h = feats;
  for (const GinLayerVars& layer : enc.gnn_e)
    h = gin_layer_forward(tape, layer, h, batch.src, batch.dst, batch.num_nodes);
  Var s = feats;
  for (const GinLayerVars& layer : enc.gnn_s)
    s = gin_layer_forward(tape, layer, s, batch.src, batch.dst, batch.num_nodes);
  return EncodeOut{h, tape.sigmoid(s)};
}

Var gated_readout(Tape& tape, Var h, Var s, ReadoutKind kind) {
  Var gated = tape.mul(h, s);
  return tape.reduce(kind == ReadoutKind::mean ? ReduceKind::mean : ReduceKind::sum,
                     gated, Axis::rows);
}

Var gated_readout_batch(Tape& tape, Var h, Var s, const BatchGraph& batch,
                        ReadoutKind kind) {
  Var gated = tape.mul(h, s);
  Var sums = tape.segment_sum(gated, batch.graph_of_node, batch.num_graphs);
  if (kind == ReadoutKind::sum) return sums;
  Tensor counts(batch.num_graphs, 1);
  for (std::size_t g = 0; g < batch.num_graphs; ++g)
    counts.at(g, 0) = static_cast<double>(batch.node_counts[g]);
  return tape.div_colvec(sums, tape.constant(counts));
}

}  // namespace mphil
