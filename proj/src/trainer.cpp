#include "mphil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "mphil/metrics.hpp"

namespace mphil {

std::string to_string(Preset p) {
  return p == Preset::synthetic ? "synthetic" : "molecular";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_ipm: return "no-ipm";
    case Variant::no_ps: return "no-ps";
    case Variant::no_projector: return "no-projector";
    case Variant::single_proto: return "single-proto";
    case Variant::no_update: return "no-update";
    case Variant::no_prune: return "no-prune";
    case Variant::erm: return "erm";
  }
  return "?";
}

std::string to_string(ValMetric m) {
  return m == ValMetric::accuracy ? "accuracy" : "roc_auc";
}

Preset preset_from_string(const std::string& s) {
  if (s == "synthetic") return Preset::synthetic;
  if (s == "molecular") return Preset::molecular;
  throw std::invalid_argument("unknown preset: " + s);
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no-ipm") return Variant::no_ipm;
  if (s == "no-ps") return Variant::no_ps;
  if (s == "no-projector") return Variant::no_projector;
  if (s == "single-proto") return Variant::single_proto;
  if (s == "no-update") return Variant::no_update;
  if (s == "no-prune") return Variant::no_prune;
  if (s == "erm") return Variant::erm;
  throw std::invalid_argument("unknown variant: " + s);
}

ValMetric val_metric_from_string(const std::string& s) {
  if (s == "accuracy") return ValMetric::accuracy;
  if (s == "roc_auc") return ValMetric::roc_auc;
  throw std::invalid_argument("unknown val metric: " + s);
}

std::size_t TrainConfig::encoder_depth() const {
  if (depth_override) return depth_override;
  return preset == Preset::synthetic ? 4 : 3;
}

std::size_t TrainConfig::encoder_hidden() const {
  if (hidden_override) return hidden_override;
  return preset == Preset::synthetic ? 128 : 300;
}

std::size_t TrainConfig::projector_dim() const {
  if (proj_dim_override) return proj_dim_override;
  return encoder_hidden() / 2;
}

std::size_t TrainConfig::attention_dim() const {
  const std::size_t bank_dim =
      variant == Variant::no_projector ? encoder_hidden() : projector_dim();
  return std::max<std::size_t>(1, bank_dim / 2);
}

std::size_t TrainConfig::effective_k() const {
  return variant == Variant::single_proto ? 1 : prototypes_per_class;
}

std::size_t TrainConfig::effective_prune_n() const {
  return std::min(prune_n, effective_k());
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("TrainConfig: zero epochs/batch");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (prototypes_per_class == 0) throw std::invalid_argument("TrainConfig: K must be >= 1");
  if (beta < 0.0) throw std::invalid_argument("TrainConfig: beta must be >= 0");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("TrainConfig: alpha not in [0,1]");
  if (!(tau > 0.0)) throw std::invalid_argument("TrainConfig: tau must be > 0");
  if (prune_n == 0) throw std::invalid_argument("TrainConfig: prune n must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("TrainConfig: need >= 2 classes");
}

ModelParams make_model_params(const TrainConfig& config, std::size_t feature_dim,
                              RngStream& rng) {
  config.validate();
  if (feature_dim == 0) throw std::invalid_argument("make_model_params: zero feature dim");
  const std::size_t d = config.encoder_hidden();
  ModelParams params;
  params.feature_dim = feature_dim;
  params.encoder =
      make_encoder_params(config.encoder_depth(), feature_dim, d, rng);
  if (config.variant == Variant::erm) {
    params.encoder.gnn_s.clear();  // plain encoder, no separation scores
    params.bank_dim = d;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    params.head_w = Tensor(d, config.num_classes);
    for (std::size_t i = 0; i < params.head_w.size(); ++i)
      params.head_w.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    params.head_b = Tensor(1, config.num_classes);
    return params;
  }
  if (config.variant == Variant::no_projector) {
    params.bank_dim = d;
  } else {
    params.projector = make_projector_params(d, config.projector_dim(), rng);
    params.bank_dim = config.projector_dim();
  }
  params.attention = make_attention_params(params.bank_dim, config.attention_dim(), rng);
  return params;
}

namespace {

template <typename Params, typename Fn>
void visit_params_impl(Params& params, const Fn& fn) {
  auto visit_stack = [&](auto& layers, const std::string& prefix) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base = prefix + std::to_string(l) + ".";
      fn(base + "eps", layers[l].eps);
      fn(base + "w1", layers[l].w1);
      fn(base + "b1", layers[l].b1);
      fn(base + "w2", layers[l].w2);
      fn(base + "b2", layers[l].b2);
    }
  };
  visit_stack(params.encoder.gnn_e, "gnn_e.");
  visit_stack(params.encoder.gnn_s, "gnn_s.");
  if (params.projector.output_dim > 0) {
    fn("proj.w1", params.projector.w1);
    fn("proj.b1", params.projector.b1);
    fn("proj.w2", params.projector.w2);
    fn("proj.b2", params.projector.b2);
  }
  if (params.attention.wq.size() > 0) {
    fn("att.wq", params.attention.wq);
    fn("att.wk", params.attention.wk);
  }
  if (params.head_w.size() > 0) {
    fn("head.w", params.head_w);
    fn("head.b", params.head_b);
  }
}

}  // namespace

void visit_params(ModelParams& params,
                  const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_params_impl(params, fn);
}

void visit_params(const ModelParams& params,
                  const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_params_impl(params, fn);
}

BoundModel bind_model(Tape& tape, const ModelParams& params, bool requires_grad) {
  BoundModel bound;
  auto bind_stack = [&](const std::vector<GinLayer>& layers,
                        std::vector<GinLayerVars>& out) {
    for (const GinLayer& layer : layers) {
      GinLayerVars vars = bind(tape, layer, requires_grad);
      out.push_back(vars);
      bound.ordered.insert(bound.ordered.end(),
                           {vars.eps, vars.w1, vars.b1, vars.w2, vars.b2});
    }
  };
  bind_stack(params.encoder.gnn_e, bound.encoder.gnn_e);
  bind_stack(params.encoder.gnn_s, bound.encoder.gnn_s);
  if (params.projector.output_dim > 0) {
    bound.projector = bind(tape, params.projector, requires_grad);
    bound.ordered.insert(bound.ordered.end(), {bound.projector.w1, bound.projector.b1,
                                               bound.projector.w2, bound.projector.b2});
  }
  if (params.attention.wq.size() > 0) {
    bound.attention = bind(tape, params.attention, requires_grad);
    bound.ordered.insert(bound.ordered.end(), {bound.attention.wq, bound.attention.wk});
  }
  if (params.head_w.size() > 0) {
    bound.head_w = tape.leaf(params.head_w, requires_grad);
    bound.head_b = tape.leaf(params.head_b, requires_grad);
    bound.ordered.insert(bound.ordered.end(), {bound.head_w, bound.head_b});
  }
  return bound;
}

void AdamOptimizer::step(const std::string& name, Tensor& param, const Tensor& grad) {
  if (!param.same_shape(grad)) {
    throw std::invalid_argument("adam_step: grad " + grad.shape_str() +
                                " does not match param " + param.shape_str());
  }
  Slot& slot = slots_[name];
  if (slot.m.empty()) {
    slot.m.assign(param.size(), 0.0);
    slot.v.assign(param.size(), 0.0);
  }
  ++slot.t;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(slot.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(slot.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.data()[i];
    slot.m[i] = kBeta1 * slot.m[i] + (1.0 - kBeta1) * g;
    slot.v[i] = kBeta2 * slot.v[i] + (1.0 - kBeta2) * g * g;
    const double m_hat = slot.m[i] / bc1;
    const double v_hat = slot.v[i] / bc2;
    param.data()[i] -= lr_ * (m_hat / (std::sqrt(v_hat) + kEps));
  }
}

namespace {

void fire(const TrainHooks* hooks, const char* event) {
  if (hooks && hooks->on_event) hooks->on_event(event);
}

std::vector<int> batch_labels(const std::vector<const Graph*>& batch) {
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const Graph* g : batch) labels.push_back(g->label);
  return labels;
}

}  // namespace

BatchForward forward_batch(Tape& tape, const BoundModel& model, const ModelParams& params,
                           const PrototypeBank& bank, const TrainConfig& config,
                           const std::vector<const Graph*>& batch, bool training,
                           const TrainHooks* hooks) {
  if (batch.empty()) throw std::invalid_argument("forward_batch: empty batch");
  for (const Graph* g : batch) {
    if (g->node_features.cols() != params.feature_dim) {
      throw std::invalid_argument("forward_batch: graph feature dim " +
                                  std::to_string(g->node_features.cols()) +
                                  " does not match checkpoint feature dim " +
                                  std::to_string(params.feature_dim));
    }
  }
  const std::vector<int> labels = batch_labels(batch);

  BatchGraph packed = BatchGraph::from(batch);
  fire(hooks, "encode");
  EncodeOut enc = encode(tape, model.encoder, packed);
  BatchForward out;

  if (config.variant == Variant::erm) {
    // ungated mean readout + affine softmax head
    Var pooled = tape.segment_sum(enc.h, packed.graph_of_node, packed.num_graphs);
    Tensor counts(packed.num_graphs, 1);
    for (std::size_t g = 0; g < packed.num_graphs; ++g)
      counts.at(g, 0) = static_cast<double>(packed.node_counts[g]);
    Var z = config.readout == ReadoutKind::mean
                ? tape.div_colvec(pooled, tape.constant(counts))
                : pooled;
    Var logits = tape.add_rowvec(tape.matmul(z, model.head_w), model.head_b);
    fire(hooks, "probabilities");
    out.probabilities = tape.softmax_rows(logits);
    out.embeddings = z;
    fire(hooks, "loss");
    out.loss = softmax_cross_entropy(tape, logits, labels);
    return out;
  }

  Var z_inv = gated_readout_batch(tape, enc.h, enc.s, packed, config.readout);

  fire(hooks, "project");
  Var zhat = config.variant == Variant::no_projector
                 ? z_inv  // unprojected, unnormalized
                 : project(tape, model.projector, z_inv);
  out.embeddings = zhat;

  const std::size_t num_classes = bank.num_classes;
  const std::size_t k = bank.per_class;

  fire(hooks, "assign_weights");
  BankVars frozen = bind_frozen(tape, bank);
  std::vector<Var> weights;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (config.variant == Variant::no_update) {
      weights.push_back(tape.constant(
          Tensor::full(batch.size(), k, 1.0 / static_cast<double>(k))));
    } else {
      weights.push_back(
          assignment_weights(tape, model.attention, zhat, frozen.class_protos[c]));
    }
  }

  fire(hooks, "prune");
  if (config.variant != Variant::no_prune) {
    for (std::size_t c = 0; c < num_classes; ++c)
      weights[c] = prune_weights(tape, weights[c], config.effective_prune_n());
  }

  BankVars active = frozen;
  if (training) {
    fire(hooks, "ema_update");
    active = ema_update_tape(tape, bank, zhat, labels, weights, config.alpha);
    for (std::size_t c = 0; c < num_classes; ++c)
      out.fresh_bank.push_back(tape.value(active.class_protos[c]));
  }

  fire(hooks, "probabilities");
  out.probabilities = class_probabilities_tape(tape, zhat, active, weights, config.tau);

  fire(hooks, "loss");
  Var l_c = loss_cls(tape, out.probabilities, labels, &out.stats);
  Var l_ps = config.variant == Variant::no_ps
                 ? tape.constant(Tensor::scalar(0.0))
                 : loss_ps(tape, active, config.tau, &out.stats);
  Var l_ipm = config.variant == Variant::no_ipm
                  ? tape.constant(Tensor::scalar(0.0))
                  : loss_ipm(tape, zhat, labels, active, config.tau);
  out.loss = total_loss(tape, l_c, l_ps, l_ipm, config.beta);
  return out;
}

namespace {

struct Scores {
  std::vector<int> predictions;
  std::vector<double> positive_scores;  // p(class 1) for binary AUC
};

Scores score_graphs(const ModelParams& params, const PrototypeBank& bank,
                    const TrainConfig& config, const std::vector<Graph>& graphs) {
  Scores scores;
  for (std::size_t start = 0; start < graphs.size(); start += config.batch_size) {
    const std::size_t stop = std::min(graphs.size(), start + config.batch_size);
    std::vector<const Graph*> batch;
    for (std::size_t i = start; i < stop; ++i) batch.push_back(&graphs[i]);
    Tape tape;
    BoundModel model = bind_model(tape, params, false);
    BatchForward fwd = forward_batch(tape, model, params, bank, config, batch, false);
    const Tensor& p = tape.value(fwd.probabilities);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < p.cols(); ++c)
        if (p.at(i, c) > p.at(i, best)) best = c;
      scores.predictions.push_back(static_cast<int>(best));
      scores.positive_scores.push_back(p.cols() > 1 ? p.at(i, 1) : 0.0);
    }
  }
  return scores;
}

double metric_of(const Scores& scores, const std::vector<Graph>& graphs,
                 ValMetric metric) {
  std::vector<int> labels;
  for (const Graph& g : graphs) labels.push_back(g.label);
  if (metric == ValMetric::accuracy) return accuracy(scores.predictions, labels);
  return roc_auc(scores.positive_scores, labels);
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const TrainHooks* hooks) {
  config.validate();
  if (dataset.train.empty()) throw std::invalid_argument("train: empty train split");
  if (dataset.val.empty()) throw std::invalid_argument("train: empty val split");

  RngStream rng(config.seed);
  const std::size_t feature_dim = dataset.train.front().node_features.cols();
  ModelParams params = make_model_params(config, feature_dim, rng);
  PrototypeBank bank =
      init_prototypes(config.num_classes, config.effective_k(), params.bank_dim, rng);

  AdamOptimizer adam(config.learning_rate);
  TrainResult result;
  result.best_val = -1.0;

  std::vector<std::size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<const Graph*> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&dataset.train[order[i]]);

      Tape tape;
      BoundModel model = bind_model(tape, params, true);
      BatchForward fwd = forward_batch(tape, model, params, bank, config, batch,
                                       true, hooks);
      loss_sum += tape.value(fwd.loss).at(0, 0);
      ++batches;
      tape.backward(fwd.loss);

      fire(hooks, "adam_step");
      std::size_t slot = 0;
      visit_params(params, [&](const std::string& name, Tensor& tensor) {
        adam.step(name, tensor, tape.grad(model.ordered[slot]));
        ++slot;
      });

      // commit the detached post-EMA prototypes
      if (!fwd.fresh_bank.empty()) {
        for (std::size_t c = 0; c < bank.num_classes; ++c)
          for (std::size_t k = 0; k < bank.per_class; ++k)
            for (std::size_t j = 0; j < bank.dim; ++j)
              bank.m.at(bank.row_of(c, k), j) = fwd.fresh_bank[c].at(k, j);
      }
    }

    Scores val_scores = score_graphs(params, bank, config, dataset.val);
    const double val = metric_of(val_scores, dataset.val, config.val_metric);
    result.log.push_back({epoch, loss_sum / static_cast<double>(batches), val});

    // >= keeps the latest epoch among ties: ID validation saturates early on
    // easy data and later epochs carry the better-shaped geometry
    if (val >= result.best_val) {
      result.best_val = val;
      result.best = Checkpoint{1, config, params, bank, rng.state(), epoch};
    }
  }
  return result;
}

std::vector<std::vector<double>> infer(const Checkpoint& ckpt,
                                       const std::vector<Graph>& graphs) {
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start < graphs.size(); start += ckpt.config.batch_size) {
    const std::size_t stop = std::min(graphs.size(), start + ckpt.config.batch_size);
    std::vector<const Graph*> batch;
    for (std::size_t i = start; i < stop; ++i) batch.push_back(&graphs[i]);
    Tape tape;
    BoundModel model = bind_model(tape, ckpt.params, false);
    BatchForward fwd =
        forward_batch(tape, model, ckpt.params, ckpt.bank, ckpt.config, batch, false);
    const Tensor& p = tape.value(fwd.probabilities);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      std::vector<double> row(p.cols());
      for (std::size_t c = 0; c < p.cols(); ++c) row[c] = p.at(i, c);
      out.push_back(std::move(row));
    }
  }
  return out;
}

Tensor embed(const Checkpoint& ckpt, const std::vector<Graph>& graphs) {
  Tensor result(graphs.size(), ckpt.params.bank_dim);
  std::size_t row = 0;
  for (std::size_t start = 0; start < graphs.size(); start += ckpt.config.batch_size) {
    const std::size_t stop = std::min(graphs.size(), start + ckpt.config.batch_size);
    std::vector<const Graph*> batch;
    for (std::size_t i = start; i < stop; ++i) batch.push_back(&graphs[i]);
    Tape tape;
    BoundModel model = bind_model(tape, ckpt.params, false);
    BatchForward fwd =
        forward_batch(tape, model, ckpt.params, ckpt.bank, ckpt.config, batch, false);
    const Tensor& z = tape.value(fwd.embeddings);
    for (std::size_t i = 0; i < z.rows(); ++i, ++row)
      for (std::size_t j = 0; j < z.cols(); ++j) result.at(row, j) = z.at(i, j);
  }
  return result;
}

double evaluate_metric(const Checkpoint& ckpt, const std::vector<Graph>& graphs,
                       ValMetric metric) {
  Scores s = score_graphs(ckpt.params, ckpt.bank, ckpt.config, graphs);
  return metric_of(s, graphs, metric);
}

void write_metrics_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "epoch,train_loss,val_metric\n";
  char buf[64];
  for (const EpochLog& row : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g", row.epoch, row.train_loss,
                  row.val_metric);
    out << buf << '\n';
  }
}

}  // namespace mphil
