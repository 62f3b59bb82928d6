#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mphil/rng.hpp"
#include "mphil/tensor.hpp"

namespace mphil {

/// Generation-time metadata. Never fed to the model; the env tag records the
/// spurious environment (the base kind) so evaluation code can audit splits.
struct GraphMeta {
  std::string base;
  std::string motif;
  std::string split;
  std::string env;
};

/// A labelled undirected graph. Edges are stored once per undirected edge
/// (no self-loops, no duplicates) and expanded to both directions at encode
/// time.
struct Graph {
  std::size_t num_nodes = 0;
  Tensor node_features;  // [num_nodes x f]
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  int label = 0;
  GraphMeta meta;

  /// Throws std::invalid_argument on out-of-range endpoints, self-loops,
  /// duplicate undirected edges, or a feature-row mismatch.
  void validate() const;
};

/// Bare structure used while assembling a graph: a motif or base waiting for
/// features and a label.
struct Fragment {
  std::size_t num_nodes = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
};

enum class MotifKind { house, cycle, crane };
enum class BaseKind { wheel, tree, ladder, star, path };
enum class FeatureMode { constant, degree_onehot, random };
enum class ShiftKind { basis, size };

std::string to_string(MotifKind k);
std::string to_string(BaseKind k);
std::string to_string(FeatureMode m);
std::string to_string(ShiftKind s);
MotifKind motif_from_string(const std::string& s);
BaseKind base_from_string(const std::string& s);
FeatureMode feature_mode_from_string(const std::string& s);
ShiftKind shift_from_string(const std::string& s);

/// Canonical 5-node motif shapes. house: 4-cycle 0-1-2-3 plus apex 4 joined
/// to 2 and 3. cycle: 5-ring. crane: path 0-1-2-3 with head node 4 joined to
/// 1 and 2.
Fragment make_motif(MotifKind kind);

/// Canonical base of `size` nodes (size >= 4). wheel: hub 0 plus ring;
/// tree: random binary tree; ladder: two rails with rungs; star: hub plus
/// leaves; path: chain. Only `tree` consumes randomness.
Fragment make_base(BaseKind kind, std::size_t size, RngStream& rng);

/// Disjoint union of base and motif (motif indices shifted) joined by one
/// bridge edge from a uniform base node to a uniform motif node. The label
/// is the motif's class.
Graph compose(const Fragment& base, const Fragment& motif, int label, RngStream& rng);

/// Synthetic motif benchmark description.
struct DatasetSpec {
  std::size_t num_classes = 2;
  std::vector<MotifKind> class_motifs = {MotifKind::house, MotifKind::cycle};
  std::vector<BaseKind> train_bases = {BaseKind::wheel, BaseKind::tree, BaseKind::ladder};
  std::vector<BaseKind> test_bases = {BaseKind::star, BaseKind::path};
  double bias = 0.5;  // P(train graph of class c carries its designated base)
  std::size_t train_count = 2000;
  std::size_t val_count = 500;
  std::size_t test_count = 500;
  FeatureMode feature_mode = FeatureMode::constant;
  ShiftKind shift = ShiftKind::basis;
  std::size_t base_size_min = 8;   // train/val base sizes, uniform
  std::size_t base_size_max = 15;
  std::size_t test_size_min = 18;  // used by the size shift only
  std::size_t test_size_max = 28;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dataset {
  std::vector<Graph> train;
  std::vector<Graph> val;
  std::vector<Graph> test;
};

/// Deterministic in (spec, seed): identical spec gives byte-identical JSONL.
/// The label always follows the motif; the base is spurious. Train and val
/// are drawn from the biased in-distribution process; test applies the
/// requested shift.
Dataset generate(const DatasetSpec& spec);

/// One JSON object per line:
/// {"n":..,"x":[[..]],"edges":[[s,d]],"y":..,"meta":{"base":..,"motif":..,
///  "split":..,"env":..}}
void save_jsonl(const std::string& path, const std::vector<Graph>& graphs);

/// Throws std::runtime_error naming the 1-based line on any malformed line.
std::vector<Graph> load_jsonl(const std::string& path);

}  // namespace mphil
