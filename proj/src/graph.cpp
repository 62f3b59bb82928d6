#include "mphil/graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace mphil {

using ordered_json = nlohmann::ordered_json;

void Graph::validate() const {
  if (node_features.rows() != num_nodes) {
    throw std::invalid_argument("Graph: feature rows " +
                                std::to_string(node_features.rows()) +
                                " != num_nodes " + std::to_string(num_nodes));
  }
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (const auto& [s, d] : edges) {
    if (s >= num_nodes || d >= num_nodes) {
      throw std::invalid_argument("Graph: edge (" + std::to_string(s) + "," +
                                  std::to_string(d) + ") out of range for " +
                                  std::to_string(num_nodes) + " nodes");
    }
    if (s == d) {
      throw std::invalid_argument("Graph: self-loop at node " + std::to_string(s));
    }
    auto key = std::minmax(s, d);
    if (!seen.insert({key.first, key.second}).second) {
      throw std::invalid_argument("Graph: duplicate undirected edge (" +
                                  std::to_string(s) + "," + std::to_string(d) + ")");
    }
  }
}

std::string to_string(MotifKind k) {
  switch (k) {
    case MotifKind::house: return "house";
    case MotifKind::cycle: return "cycle";
    case MotifKind::crane: return "crane";
  }
  return "?";
}

std::string to_string(BaseKind k) {
  switch (k) {
    case BaseKind::wheel: return "wheel";
    case BaseKind::tree: return "tree";
    case BaseKind::ladder: return "ladder";
    case BaseKind::star: return "star";
    case BaseKind::path: return "path";
  }
  return "?";
}

std::string to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::constant: return "constant";
    case FeatureMode::degree_onehot: return "degree";
    case FeatureMode::random: return "random";
  }
  return "?";
}

std::string to_string(ShiftKind s) {
  return s == ShiftKind::basis ? "basis" : "size";
}

MotifKind motif_from_string(const std::string& s) {
  if (s == "house") return MotifKind::house;
  if (s == "cycle") return MotifKind::cycle;
  if (s == "crane") return MotifKind::crane;
  throw std::invalid_argument("unknown motif kind: " + s);
}

BaseKind base_from_string(const std::string& s) {
  if (s == "wheel") return BaseKind::wheel;
  if (s == "tree") return BaseKind::tree;
  if (s == "ladder") return BaseKind::ladder;
  if (s == "star") return BaseKind::star;
  if (s == "path") return BaseKind::path;
  throw std::invalid_argument("unknown base kind: " + s);
}

FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "constant") return FeatureMode::constant;
  if (s == "degree") return FeatureMode::degree_onehot;
  if (s == "random") return FeatureMode::random;
  throw std::invalid_argument("unknown feature mode: " + s);
}

ShiftKind shift_from_string(const std::string& s) {
  if (s == "basis") return ShiftKind::basis;
  if (s == "size") return ShiftKind::size;
  throw std::invalid_argument("unknown shift kind: " + s);
}

Fragment make_motif(MotifKind kind) {
  Fragment f;
  f.num_nodes = 5;
  switch (kind) {
    case MotifKind::house:
      f.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {2, 4}, {3, 4}};
      break;
    case MotifKind::cycle:
      f.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}};
      break;
    case MotifKind::crane:
      f.edges = {{0, 1}, {1, 2}, {2, 3}, {1, 4}, {2, 4}};
      break;
  }
  return f;
}

Fragment make_base(BaseKind kind, std::size_t size, RngStream& rng) {
  if (size < 4) {
    throw std::invalid_argument("make_base: size " + std::to_string(size) +
                                " too small (need >= 4)");
  }
  Fragment f;
  f.num_nodes = size;
  auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  switch (kind) {
    case BaseKind::wheel: {
      // hub 0, ring 1..size-1
      for (std::size_t i = 1; i < size; ++i) {
        f.edges.push_back({u32(i), u32(i == size - 1 ? 1 : i + 1)});
      }
      for (std::size_t i = 1; i < size; ++i) f.edges.push_back({0, u32(i)});
      break;
    }
    case BaseKind::tree: {
      // random binary tree: each new node picks a parent with < 2 children
      std::vector<std::size_t> open = {0};  // nodes with spare child slots
      std::vector<int> child_count(size, 0);
      for (std::size_t i = 1; i < size; ++i) {
        const std::size_t pick = rng.uniform_index(open.size());
        const std::size_t parent = open[pick];
        f.edges.push_back({u32(parent), u32(i)});
        if (++child_count[parent] == 2) open.erase(open.begin() + pick);
        open.push_back(i);
      }
      break;
    }
    case BaseKind::ladder: {
      const std::size_t m = size / 2;  // rung count
      for (std::size_t i = 0; i < m; ++i) {
        f.edges.push_back({u32(2 * i), u32(2 * i + 1)});  // rung
        if (i + 1 < m) {
          f.edges.push_back({u32(2 * i), u32(2 * i + 2)});
          f.edges.push_back({u32(2 * i + 1), u32(2 * i + 3)});
        }
      }
      if (size % 2 == 1) f.edges.push_back({u32(size - 3), u32(size - 1)});
      break;
    }
    case BaseKind::star: {
      for (std::size_t i = 1; i < size; ++i) f.edges.push_back({0, u32(i)});
      break;
    }
    case BaseKind::path: {
      for (std::size_t i = 0; i + 1 < size; ++i) f.edges.push_back({u32(i), u32(i + 1)});
      break;
    }
  }
  return f;
}

Graph compose(const Fragment& base, const Fragment& motif, int label, RngStream& rng) {
  if (base.num_nodes == 0 || motif.num_nodes == 0) {
    throw std::invalid_argument("compose: empty fragment");
  }
  Graph g;
  g.num_nodes = base.num_nodes + motif.num_nodes;
  g.edges = base.edges;
  const auto shift = static_cast<std::uint32_t>(base.num_nodes);
  for (const auto& [s, d] : motif.edges) g.edges.push_back({s + shift, d + shift});
  const auto anchor = static_cast<std::uint32_t>(rng.uniform_index(base.num_nodes));
  const auto target =
      static_cast<std::uint32_t>(rng.uniform_index(motif.num_nodes)) + shift;
  g.edges.push_back({anchor, target});
  g.label = label;
  g.node_features = Tensor(g.num_nodes, 1);  // replaced by assign_features
  return g;
}

void DatasetSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("DatasetSpec: need >= 2 classes");
  if (class_motifs.size() != num_classes) {
    throw std::invalid_argument("DatasetSpec: need one motif per class");
  }
  if (bias < 0.0 || bias > 1.0) throw std::invalid_argument("DatasetSpec: bias not in [0,1]");
  if (train_bases.empty()) throw std::invalid_argument("DatasetSpec: no train bases");
  if (shift == ShiftKind::basis && test_bases.empty()) {
    throw std::invalid_argument("DatasetSpec: basis shift requires held-out test bases");
  }
  if (base_size_min < 4 || base_size_max < base_size_min) {
    throw std::invalid_argument("DatasetSpec: bad base size range");
  }
}

namespace {

void assign_features(Graph& g, FeatureMode mode, RngStream& rng) {
  switch (mode) {
    case FeatureMode::constant:
      g.node_features = Tensor::full(g.num_nodes, 1, 1.0);
      break;
    case FeatureMode::degree_onehot: {
      constexpr std::size_t kDims = 8;  // degrees 7+ share the last slot
      std::vector<std::size_t> degree(g.num_nodes, 0);
      for (const auto& [s, d] : g.edges) {
        ++degree[s];
        ++degree[d];
      }
      Tensor x(g.num_nodes, kDims);
      for (std::size_t v = 0; v < g.num_nodes; ++v)
        x.at(v, std::min(degree[v], kDims - 1)) = 1.0;
      g.node_features = std::move(x);
      break;
    }
    case FeatureMode::random: {
      Tensor x(g.num_nodes, 4);
      for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
      g.node_features = std::move(x);
      break;
    }
  }
}

/// Train/val draw: class round-robin, base spurious with probability b.
Graph draw_id_graph(const DatasetSpec& spec, std::size_t index, const char* split,
                    RngStream& rng) {
  const int label = static_cast<int>(index % spec.num_classes);
  const BaseKind designated = spec.train_bases[label % spec.train_bases.size()];
  BaseKind base_kind = designated;
  if (rng.uniform() >= spec.bias) {
    // uniform over the remaining train bases
    std::vector<BaseKind> others;
    for (BaseKind b : spec.train_bases)
      if (b != designated) others.push_back(b);
    if (!others.empty()) base_kind = others[rng.uniform_index(others.size())];
  }
  const std::size_t size =
      spec.base_size_min + rng.uniform_index(spec.base_size_max - spec.base_size_min + 1);
  Fragment base = make_base(base_kind, size, rng);
  Fragment motif = make_motif(spec.class_motifs[label]);
  Graph g = compose(base, motif, label, rng);
  assign_features(g, spec.feature_mode, rng);
  g.meta = {to_string(base_kind), to_string(spec.class_motifs[label]), split,
            to_string(base_kind)};
  return g;
}

Graph draw_test_graph(const DatasetSpec& spec, std::size_t index, RngStream& rng) {
  const int label = static_cast<int>(index % spec.num_classes);
  const bool basis = spec.shift == ShiftKind::basis;
  const auto& pool = basis ? spec.test_bases : spec.train_bases;
  const BaseKind base_kind = pool[rng.uniform_index(pool.size())];
  const std::size_t lo = basis ? spec.base_size_min : spec.test_size_min;
  const std::size_t hi = basis ? spec.base_size_max : spec.test_size_max;
  const std::size_t size = lo + rng.uniform_index(hi - lo + 1);
  Fragment base = make_base(base_kind, size, rng);
  Fragment motif = make_motif(spec.class_motifs[label]);
  Graph g = compose(base, motif, label, rng);
  assign_features(g, spec.feature_mode, rng);
  g.meta = {to_string(base_kind), to_string(spec.class_motifs[label]), "test",
            to_string(base_kind)};
  return g;
}

}  // namespace

Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  RngStream rng(spec.seed);
  ds.train.reserve(spec.train_count);
  for (std::size_t i = 0; i < spec.train_count; ++i) {
    ds.train.push_back(draw_id_graph(spec, i, "train", rng));
    ds.train.back().validate();
  }
  ds.val.reserve(spec.val_count);
  for (std::size_t i = 0; i < spec.val_count; ++i) {
    ds.val.push_back(draw_id_graph(spec, i, "val", rng));
    ds.val.back().validate();
  }
  ds.test.reserve(spec.test_count);
  for (std::size_t i = 0; i < spec.test_count; ++i) {
    ds.test.push_back(draw_test_graph(spec, i, rng));
    ds.test.back().validate();
  }
  return ds;
}

namespace {

ordered_json graph_to_json(const Graph& g) {
  ordered_json j;
  j["n"] = g.num_nodes;
  ordered_json x = ordered_json::array();
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    ordered_json row = ordered_json::array();
    for (std::size_t k = 0; k < g.node_features.cols(); ++k)
      row.push_back(g.node_features.at(i, k));
    x.push_back(std::move(row));
  }
  j["x"] = std::move(x);
  ordered_json edges = ordered_json::array();
  for (const auto& [s, d] : g.edges) edges.push_back(ordered_json::array({s, d}));
  j["edges"] = std::move(edges);
  j["y"] = g.label;
  j["meta"] = {{"base", g.meta.base},
               {"motif", g.meta.motif},
               {"split", g.meta.split},
               {"env", g.meta.env}};
  return j;
}

Graph graph_from_json(const ordered_json& j) {
  Graph g;
  g.num_nodes = j.at("n").get<std::size_t>();
  const auto& x = j.at("x");
  const std::size_t f = g.num_nodes == 0 ? 0 : x.at(0).size();
  Tensor feats(g.num_nodes, f);
  for (std::size_t i = 0; i < g.num_nodes; ++i)
    for (std::size_t k = 0; k < f; ++k) feats.at(i, k) = x.at(i).at(k).get<double>();
  g.node_features = std::move(feats);
  for (const auto& e : j.at("edges")) {
    g.edges.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>()});
  }
  g.label = j.at("y").get<int>();
  const auto& m = j.at("meta");
  g.meta = {m.at("base").get<std::string>(), m.at("motif").get<std::string>(),
            m.at("split").get<std::string>(), m.at("env").get<std::string>()};
  g.validate();
  return g;
}

}  // namespace

void save_jsonl(const std::string& path, const std::vector<Graph>& graphs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_jsonl: cannot open " + path);
  for (const Graph& g : graphs) out << graph_to_json(g).dump() << '\n';
  if (!out) throw std::runtime_error("save_jsonl: write failed on " + path);
}

std::vector<Graph> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_jsonl: cannot open " + path);
  std::vector<Graph> graphs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      graphs.push_back(graph_from_json(ordered_json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("load_jsonl: " + path + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  return graphs;
}

}  // namespace mphil
