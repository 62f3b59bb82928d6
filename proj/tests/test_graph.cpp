#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <queue>

#include "mphil/graph.hpp"

using namespace mphil;

namespace {

std::vector<std::size_t> degrees(const Fragment& f) {
  std::vector<std::size_t> deg(f.num_nodes, 0);
  for (const auto& [s, d] : f.edges) {
    ++deg[s];
    ++deg[d];
  }
  return deg;
}

bool connected(const Graph& g) {
  if (g.num_nodes == 0) return true;
  std::vector<std::vector<std::uint32_t>> adj(g.num_nodes);
  for (const auto& [s, d] : g.edges) {
    adj[s].push_back(d);
    adj[d].push_back(s);
  }
  std::vector<bool> seen(g.num_nodes, false);
  std::queue<std::uint32_t> q;
  q.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!q.empty()) {
    auto v = q.front();
    q.pop();
    for (auto w : adj[v])
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        q.push(w);
      }
  }
  return count == g.num_nodes;
}

std::filesystem::path temp_file(const char* name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("motif shapes") {
  Fragment house = make_motif(MotifKind::house);
  CHECK(house.num_nodes == 5);
  CHECK(house.edges.size() == 6);

  Fragment cycle = make_motif(MotifKind::cycle);
  CHECK(cycle.num_nodes == 5);
  CHECK(cycle.edges.size() == 5);
  for (std::size_t d : degrees(cycle)) CHECK(d == 2);

  CHECK(make_motif(MotifKind::crane).edges.size() == 5);
  CHECK(make_motif(MotifKind::house).edges == house.edges);  // deterministic
}

TEST_CASE("base shapes") {
  RngStream rng(1);
  Fragment star = make_base(BaseKind::star, 5, rng);
  auto deg = degrees(star);
  CHECK(deg[0] == 4);
  for (std::size_t i = 1; i < 5; ++i) CHECK(deg[i] == 1);

  CHECK(make_base(BaseKind::path, 6, rng).edges.size() == 5);
  CHECK(make_base(BaseKind::wheel, 7, rng).edges.size() == 12);

  Fragment ladder_even = make_base(BaseKind::ladder, 10, rng);
  CHECK(ladder_even.num_nodes == 10);
  Fragment ladder_odd = make_base(BaseKind::ladder, 9, rng);
  CHECK(ladder_odd.num_nodes == 9);

  Fragment tree = make_base(BaseKind::tree, 12, rng);
  CHECK(tree.edges.size() == 11);  // tree has n-1 edges
  for (std::size_t d : degrees(tree)) CHECK(d <= 3);  // binary: parent + 2 children

  CHECK_THROWS_AS(make_base(BaseKind::path, 3, rng), std::invalid_argument);
}

TEST_CASE("compose: counts, connectivity, determinism") {
  RngStream rng_a(7);
  Fragment base = make_base(BaseKind::wheel, 9, rng_a);
  Fragment motif = make_motif(MotifKind::house);
  Graph g = compose(base, motif, 0, rng_a);
  CHECK(g.num_nodes == base.num_nodes + motif.num_nodes);
  CHECK(g.edges.size() == base.edges.size() + motif.edges.size() + 1);
  g.node_features = Tensor::full(g.num_nodes, 1, 1.0);
  CHECK(connected(g));
  CHECK_NOTHROW(g.validate());

  RngStream r1(42), r2(42);
  Graph a = compose(base, motif, 1, r1);
  Graph b = compose(base, motif, 1, r2);
  CHECK(a.edges == b.edges);
}

TEST_CASE("generate: degenerate bias pins the designated base") {
  DatasetSpec spec;
  spec.bias = 1.0;
  spec.train_count = 60;
  spec.val_count = 10;
  spec.test_count = 10;
  spec.seed = 3;
  Dataset ds = generate(spec);
  for (const Graph& g : ds.train) {
    const BaseKind designated = spec.train_bases[g.label % spec.train_bases.size()];
    CHECK(g.meta.base == to_string(designated));
  }
}

TEST_CASE("generate: bias 1/3 over 3 bases is uniform within 3 sigma") {
  DatasetSpec spec;
  spec.bias = 1.0 / 3.0;
  spec.train_count = 1000;
  spec.val_count = 4;
  spec.test_count = 4;
  spec.seed = 11;
  Dataset ds = generate(spec);
  // per class: 500 draws, each base has p = 1/3
  std::map<std::pair<int, std::string>, int> hist;
  for (const Graph& g : ds.train) ++hist[{g.label, g.meta.base}];
  const double n = 500.0, p = 1.0 / 3.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (int c = 0; c < 2; ++c) {
    for (BaseKind b : spec.train_bases) {
      const double count = hist[{c, to_string(b)}];
      CHECK(std::abs(count - n * p) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("generate: paper protocol bias levels are accepted") {
  for (double b : {0.40, 0.60, 0.90}) {
    DatasetSpec spec;
    spec.bias = b;
    spec.train_count = 20;
    spec.val_count = 4;
    spec.test_count = 4;
    CHECK_NOTHROW(generate(spec));
  }
}

TEST_CASE("generate invariants: label follows motif, basis shift is disjoint") {
  DatasetSpec spec;
  spec.bias = 0.9;
  spec.train_count = 200;
  spec.val_count = 50;
  spec.test_count = 50;
  spec.seed = 5;
  Dataset ds = generate(spec);

  auto check_labels = [&](const std::vector<Graph>& graphs) {
    for (const Graph& g : graphs) {
      CHECK(g.meta.motif == to_string(spec.class_motifs[g.label]));
      CHECK_NOTHROW(g.validate());
    }
  };
  check_labels(ds.train);
  check_labels(ds.val);
  check_labels(ds.test);

  std::set<std::string> train_bases, test_bases;
  for (const Graph& g : ds.train) train_bases.insert(g.meta.base);
  for (const Graph& g : ds.test) test_bases.insert(g.meta.base);
  for (const auto& b : test_bases) CHECK(train_bases.count(b) == 0);
}

TEST_CASE("generate: zero test bases under basis shift is an error") {
  DatasetSpec spec;
  spec.test_bases.clear();
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("jsonl: identical seeds give byte-identical output") {
  DatasetSpec spec;
  spec.train_count = 30;
  spec.val_count = 5;
  spec.test_count = 5;
  spec.seed = 19;
  auto p1 = temp_file("mphil_gen_a.jsonl");
  auto p2 = temp_file("mphil_gen_b.jsonl");
  save_jsonl(p1.string(), generate(spec).train);
  save_jsonl(p2.string(), generate(spec).train);
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(!s1.empty());
}

TEST_CASE("jsonl round-trip preserves structure and meta") {
  DatasetSpec spec;
  spec.train_count = 12;
  spec.val_count = 2;
  spec.test_count = 2;
  spec.feature_mode = FeatureMode::random;  // exercise float round-trip
  spec.seed = 23;
  Dataset ds = generate(spec);
  auto path = temp_file("mphil_roundtrip.jsonl");
  save_jsonl(path.string(), ds.train);
  auto loaded = load_jsonl(path.string());
  REQUIRE(loaded.size() == ds.train.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].num_nodes == ds.train[i].num_nodes);
    CHECK(loaded[i].edges == ds.train[i].edges);
    CHECK(loaded[i].label == ds.train[i].label);
    CHECK(loaded[i].meta.base == ds.train[i].meta.base);
    CHECK(loaded[i].meta.env == ds.train[i].meta.env);
    CHECK(loaded[i].node_features.values() == ds.train[i].node_features.values());
  }
}

TEST_CASE("jsonl: empty file loads to empty list") {
  auto path = temp_file("mphil_empty.jsonl");
  std::ofstream(path).close();
  CHECK(load_jsonl(path.string()).empty());
}

TEST_CASE("jsonl: truncated line errors with its line number") {
  auto path = temp_file("mphil_truncated.jsonl");
  {
    DatasetSpec spec;
    spec.train_count = 2;
    spec.val_count = 2;
    spec.test_count = 2;
    Dataset ds = generate(spec);
    save_jsonl(path.string(), ds.train);
    std::ofstream out(path, std::ios::app);
    out << R"({"n": 3, "x": [[1.0],[1.0)";  // cut off mid-object
  }
  CHECK_THROWS_WITH_AS(load_jsonl(path.string()), doctest::Contains("line 3"),
                       std::runtime_error);
}
