#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mphil/encoder.hpp"
#include "mphil/graph.hpp"
#include "mphil/hypersphere.hpp"
#include "mphil/losses.hpp"
#include "mphil/protobank.hpp"

namespace mphil {

enum class Preset { synthetic, molecular };

/// Model variants. `full` is the method; the rest are the ablation rows plus
/// the plain-GIN `erm` reference (encoder + mean readout + affine softmax
/// head, no prototypes).
enum class Variant {
  full,
  no_ipm,
  no_ps,
  no_projector,  // feed z_inv to the bank unprojected and unnormalized
  single_proto,  // K = 1
  no_update,     // uniform 1/K assignment weights instead of attention
  no_prune,
  erm,
};

enum class ValMetric { accuracy, roc_auc };

std::string to_string(Preset p);
std::string to_string(Variant v);
std::string to_string(ValMetric m);
Preset preset_from_string(const std::string& s);
Variant variant_from_string(const std::string& s);
ValMetric val_metric_from_string(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t prototypes_per_class = 2;  // K
  double beta = 0.1;
  double alpha = 0.99;
  double tau = 0.1;
  std::size_t prune_n = 2;
  std::uint64_t seed = 0;
  Preset preset = Preset::synthetic;
  Variant variant = Variant::full;
  std::size_t num_classes = 2;
  ValMetric val_metric = ValMetric::accuracy;
  ReadoutKind readout = ReadoutKind::mean;

  // Architecture overrides for desk-scale runs; 0 keeps the preset value.
  std::size_t depth_override = 0;
  std::size_t hidden_override = 0;
  std::size_t proj_dim_override = 0;

  std::size_t encoder_depth() const;   // synthetic 4, molecular 3
  std::size_t encoder_hidden() const;  // synthetic 128, molecular 300
  std::size_t projector_dim() const;   // default d/2
  std::size_t attention_dim() const;   // default d_p/2
  std::size_t effective_k() const;     // 1 under single_proto
  std::size_t effective_prune_n() const;
  void validate() const;
};

/// All trainable tensors. Which blocks exist depends on the variant (the
/// reference head only for erm, no projector under no_projector, ...).
struct ModelParams {
  EncoderParams encoder;
  ProjectorParams projector;
  AttentionParams attention;
  Tensor head_w, head_b;  // erm classification head
  std::size_t feature_dim = 0;
  std::size_t bank_dim = 0;  // prototype dimension (d_p, or d when unprojected)
};

ModelParams make_model_params(const TrainConfig& config, std::size_t feature_dim,
                              RngStream& rng);

/// Fixed-order walk over every trainable tensor; bind_model() creates tape
/// leaves in the same order.
void visit_params(ModelParams& params,
                  const std::function<void(const std::string&, Tensor&)>& fn);
void visit_params(const ModelParams& params,
                  const std::function<void(const std::string&, const Tensor&)>& fn);

struct BoundModel {
  EncoderVars encoder;
  ProjectorVars projector{};
  AttentionVars attention{};
  Var head_w{}, head_b{};
  std::vector<Var> ordered;  // matches visit_params order
};

BoundModel bind_model(Tape& tape, const ModelParams& params, bool requires_grad);

/// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias correction) with one
/// moment pair per named parameter.
class AdamOptimizer {
public:
  explicit AdamOptimizer(double lr) : lr_(lr) {}

  /// In-place update; grad shape must match the parameter.
  void step(const std::string& name, Tensor& param, const Tensor& grad);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

private:
  struct Slot {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  double lr_;
  std::map<std::string, Slot> slots_;
};

/// Step-order instrumentation; events fire as the per-batch pipeline runs
/// (encode, project, assign_weights, prune, ema_update, probabilities, loss,
/// adam_step).
struct TrainHooks {
  std::function<void(const std::string& event)> on_event;
};

/// One per-batch forward pass in the order of the training algorithm.
struct BatchForward {
  Var loss{};
  Var probabilities{};               // [B x C]
  Var embeddings{};                  // bank-space rows (zhat, or z for erm)
  std::vector<Tensor> fresh_bank;    // detached post-EMA blocks (training only)
  LossStats stats;
};

BatchForward forward_batch(Tape& tape, const BoundModel& model, const ModelParams& params,
                           const PrototypeBank& bank, const TrainConfig& config,
                           const std::vector<const Graph*>& batch, bool training,
                           const TrainHooks* hooks = nullptr);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
};

struct Checkpoint {
  int version = 1;
  TrainConfig config;
  ModelParams params;
  PrototypeBank bank;
  std::string rng_state;
  std::size_t epoch = 0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  double best_val = 0.0;
};

/// The full training loop: per batch encode -> project -> weights -> prune ->
/// EMA update -> probabilities -> losses -> gradient step; per epoch a val
/// evaluation. Returns the checkpoint with the best val metric.
TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const TrainHooks* hooks = nullptr);

/// Per-graph class probabilities with frozen prototypes (no EMA step).
std::vector<std::vector<double>> infer(const Checkpoint& ckpt,
                                       const std::vector<Graph>& graphs);

/// Bank-space embeddings, one row per graph.
Tensor embed(const Checkpoint& ckpt, const std::vector<Graph>& graphs);

double evaluate_metric(const Checkpoint& ckpt, const std::vector<Graph>& graphs,
                       ValMetric metric);

/// CSV with header epoch,train_loss,val_metric and shortest round-trip floats.
void write_metrics_csv(const std::string& path, const std::vector<EpochLog>& log);

// checkpoint.cpp
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mphil
