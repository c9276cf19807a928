#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>
#include "fixtures.hpp"
#include "tinyids/error.hpp"
#include "tinyids/forest.hpp"
#include "tinyids/rng.hpp"

using namespace tinyids;
using namespace tinyids::forest;

namespace {

Tree leaf_tree(std::uint16_t cls) {
  Tree t;
  TreeNode n;
  n.leaf_class = cls;
  t.nodes.push_back(n);
  return t;
}

// Stump on `feature`: <= thr goes to class lo, otherwise hi.
Tree stump(std::uint16_t feature, float thr, std::uint16_t lo, std::uint16_t hi) {
  Tree t;
  TreeNode root;
  root.feature = feature;
  root.threshold = thr;
  root.left = 1;
  root.right = 2;
  t.nodes.push_back(root);
  t.nodes.push_back(leaf_tree(lo).nodes[0]);
  t.nodes.push_back(leaf_tree(hi).nodes[0]);
  return t;
}

// Label is 1 iff x0 > 0; x0 is kept away from zero so splits are pure.
LabeledData single_signal(std::size_t n, std::size_t n_features, std::uint64_t seed) {
  Rng rng(seed);
  LabeledData d{n_features, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 1;
    d.features.push_back(pos ? rng.uniform(0.5, 2.0) : rng.uniform(-2.0, -0.5));
    for (std::size_t j = 1; j < n_features; ++j) d.features.push_back(rng.normal());
    d.labels.push_back(pos ? 1 : 0);
  }
  return d;
}

LabeledData xor_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  LabeledData d{2, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    d.features.push_back(a);
    d.features.push_back(b);
    d.labels.push_back((a > 0) != (b > 0) ? 1 : 0);
  }
  return d;
}

double accuracy(const Forest& f, const LabeledData& d) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < d.size(); ++i) hit += forest_predict(f, d.row(i)) == d.labels[i];
  return static_cast<double>(hit) / static_cast<double>(d.size());
}

// Best accuracy any single axis-aligned threshold can reach on `d`.
double best_stump_accuracy(const LabeledData& d) {
  double best = 0.0;
  for (std::size_t j = 0; j < d.n_features; ++j) {
    for (std::size_t t = 0; t < d.size(); ++t) {
      const double thr = d.row(t)[j];
      std::size_t counts[2][2] = {{0, 0}, {0, 0}};
      for (std::size_t i = 0; i < d.size(); ++i) ++counts[d.row(i)[j] <= thr ? 0 : 1][d.labels[i]];
      const std::size_t hit = std::max(counts[0][0], counts[0][1]) + std::max(counts[1][0], counts[1][1]);
      best = std::max(best, static_cast<double>(hit) / static_cast<double>(d.size()));
    }
  }
  return best;
}

std::size_t walk(const Tree& t, std::span<const double> x) {
  std::size_t i = 0;
  for (;;) {
    const TreeNode& n = t.nodes.at(i);
    if (n.feature == kLeaf) return n.leaf_class;
    const float v = static_cast<float>(x[n.feature]);
    i = v <= n.threshold ? n.left : n.right;
  }
}

}  // namespace

TEST_CASE("gini impurity") {
  const std::size_t pure[] = {0, 7, 0};
  CHECK(gini(pure) == 0.0);
  const std::size_t half[] = {5, 5};
  CHECK(gini(half) == doctest::Approx(0.5));
  const std::size_t three[] = {1, 1, 1};
  CHECK(gini(three) == doctest::Approx(2.0 / 3.0));
  const std::size_t empty[] = {0, 0};
  CHECK(gini(empty) == 0.0);
}

TEST_CASE("one separating feature gives depth-one trees") {
  const auto d = single_signal(400, 1, 3);
  ForestConfig cfg;
  cfg.n_trees = 15;
  cfg.seed = 1;
  const auto f = train_forest(d, 2, cfg);
  REQUIRE(f.trees.size() == 15);
  for (const auto& t : f.trees) CHECK(t.depth() == 1);
  CHECK(accuracy(f, d) == 1.0);
}

TEST_CASE("same seed gives identical bytes, different seed differs") {
  const auto d = fixtures::blobs(60, 4, 6, 9, 0.9);
  ForestConfig cfg;
  cfg.n_trees = 12;
  cfg.seed = 5;
  const auto a = serialize_forest(train_forest(d, 4, cfg));
  const auto b = serialize_forest(train_forest(d, 4, cfg));
  CHECK(a == b);
  cfg.seed = 6;
  CHECK(serialize_forest(train_forest(d, 4, cfg)) != a);
}

TEST_CASE("forest beats a single split on xor") {
  const auto d = xor_data(200, 11);
  const double stump_acc = best_stump_accuracy(d);
  CHECK(stump_acc <= 0.75);
  ForestConfig cfg;
  cfg.n_trees = 25;
  cfg.seed = 2;
  const auto f = train_forest(d, 2, cfg);
  CHECK(accuracy(f, d) > stump_acc);
  CHECK(accuracy(f, d) >= 0.95);
}

TEST_CASE("single tree forest predicts what its tree predicts") {
  const auto d = fixtures::blobs(50, 3, 5, 4, 1.0);
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.seed = 8;
  const auto f = train_forest(d, 3, cfg);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(forest_predict(f, d.row(i)) == f.trees[0].predict(d.row(i)));
}

TEST_CASE("plurality vote and lowest-id tie break") {
  Forest f;
  f.n_features = 1;
  f.n_classes = 6;
  f.trees = {leaf_tree(2), leaf_tree(2), leaf_tree(5)};
  const double x[] = {0.0};
  const auto v = votes(f, x);
  CHECK(v == std::vector<std::uint32_t>{0, 0, 2, 0, 0, 1});
  CHECK(forest_predict(f, x) == 2);

  f.trees = {leaf_tree(4), leaf_tree(1)};
  CHECK(forest_predict(f, x) == 1);

  const double wide[] = {0.0, 1.0};
  CHECK_THROWS_AS(votes(f, wide), DataError);
}

TEST_CASE("vote counts match a brute-force traversal") {
  const auto d = fixtures::blobs(40, 5, 4, 21, 1.2);
  ForestConfig cfg;
  cfg.n_trees = 9;
  cfg.max_depth = 6;
  cfg.seed = 3;
  const auto f = train_forest(d, 5, cfg);
  Rng rng(77);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> x(4);
    for (auto& v : x) v = rng.uniform(-3, 3);
    std::vector<std::uint32_t> expect(5, 0);
    for (const auto& t : f.trees) ++expect[walk(t, x)];
    CHECK(votes(f, x) == expect);
    std::size_t best = 0;
    for (std::size_t c = 1; c < 5; ++c) {
      if (expect[c] > expect[best]) best = c;
    }
    CHECK(forest_predict(f, x) == best);
  }
}

TEST_CASE("split threshold compares as float32") {
  Forest f;
  f.n_features = 1;
  f.n_classes = 2;
  f.trees = {stump(0, 0.1f, 0, 1)};
  // 0.1 as double is below 0.1f but rounds onto it.
  const double at[] = {0.1};
  CHECK(forest_predict(f, at) == 0);
  const double above[] = {static_cast<double>(std::nextafter(0.1f, 1.0f))};
  CHECK(forest_predict(f, above) == 1);
}

TEST_CASE("importances follow the signal") {
  auto d = single_signal(600, 4, 17);
  // Feature 1 becomes a shuffled copy of feature 0: same values, no signal.
  std::vector<double> col(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) col[i] = d.row(i)[0];
  Rng rng(5);
  rng.shuffle(std::span<double>(col));
  for (std::size_t i = 0; i < d.size(); ++i) d.row(i)[1] = col[i];

  ForestConfig cfg;
  cfg.n_trees = 40;
  cfg.seed = 4;
  const auto f = train_forest(d, 2, cfg);
  const auto& imp = feature_importances(f);
  REQUIRE(imp.size() == 4);
  CHECK(std::accumulate(imp.begin(), imp.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  for (double v : imp) CHECK(v >= 0.0);
  CHECK(imp[0] >= 0.9);
  CHECK(imp[1] <= 0.05);
}

TEST_CASE("unused feature has zero importance") {
  auto d = single_signal(300, 3, 2);
  for (std::size_t i = 0; i < d.size(); ++i) d.row(i)[2] = 1.5;  // constant, never splittable
  ForestConfig cfg;
  cfg.n_trees = 20;
  cfg.seed = 9;
  const auto f = train_forest(d, 2, cfg);
  CHECK(f.importances[2] == 0.0);
  for (const auto& t : f.trees) {
    for (const auto& n : t.nodes) CHECK(n.feature != 2);
  }
}

TEST_CASE("cumulative feature selection") {
  const double a[] = {0.5, 0.3, 0.2};
  CHECK(select_features_cumulative(a, 0.6) == std::vector<std::size_t>{0, 1});
  CHECK(select_features_cumulative(a, 0.5) == std::vector<std::size_t>{0});
  CHECK(select_features_cumulative(a, 1.0) == std::vector<std::size_t>{0, 1, 2});
  const double b[] = {0.2, 0.5, 0.3};
  CHECK(select_features_cumulative(b, 0.6) == std::vector<std::size_t>{1, 2});
  std::vector<double> uniform(10, 0.1);
  CHECK(select_features_cumulative(uniform, 0.6) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  CHECK_THROWS_AS(select_features_cumulative(a, 0.0), ArgumentError);
  CHECK_THROWS_AS(select_features_cumulative(a, 1.5), ArgumentError);
}

TEST_CASE("compact forest is shallow and remembers its columns") {
  const auto d = fixtures::blobs(80, 4, 8, 13, 1.1);
  const std::vector<std::size_t> sel = {1, 4, 6};
  CompactConfig cc;
  cc.seed = 3;
  const auto f = compact_forest(d, 4, sel, cc);
  CHECK(f.trees.size() == 10);
  REQUIRE(f.feature_subset.has_value());
  CHECK(*f.feature_subset == sel);
  CHECK(f.n_features == 8);
  for (const auto& t : f.trees) {
    CHECK(t.depth() <= 10);
    for (const auto& n : t.nodes) {
      if (!n.is_leaf()) CHECK(std::find(sel.begin(), sel.end(), n.feature) != sel.end());
    }
  }
  for (std::size_t j = 0; j < 8; ++j) {
    if (std::find(sel.begin(), sel.end(), j) == sel.end()) CHECK(f.importances[j] == 0.0);
  }
  CHECK(working_set_bytes(f) == 3 * 8 + 4 * 4);

  const std::vector<std::size_t> unsorted = {4, 1};
  CHECK_THROWS_AS(compact_forest(d, 4, unsorted, cc), ArgumentError);
  const std::vector<std::size_t> out_of_range = {9};
  CHECK_THROWS_AS(compact_forest(d, 4, out_of_range, cc), ArgumentError);
}

TEST_CASE("max depth is honoured") {
  const auto d = fixtures::blobs(100, 5, 6, 1, 1.5);
  ForestConfig cfg;
  cfg.n_trees = 5;
  cfg.max_depth = 3;
  const auto f = train_forest(d, 5, cfg);
  for (const auto& t : f.trees) CHECK(t.depth() <= 3);
}

TEST_CASE("serialization roundtrip and node records") {
  const auto d = fixtures::blobs(50, 3, 4, 7, 1.0);
  ForestConfig cfg;
  cfg.n_trees = 6;
  auto f = train_forest(d, 3, cfg);
  f.label_names = {"a", "b", "c"};
  f.scaler.mean = {0, 0, 0, 0};
  f.scaler.std = {1, 1, 1, 1};
  const auto bytes = serialize_forest(f);
  const auto g = deserialize_forest(bytes);
  REQUIRE(g.trees.size() == f.trees.size());
  for (std::size_t t = 0; t < f.trees.size(); ++t) CHECK(g.trees[t].nodes == f.trees[t].nodes);
  CHECK(g.importances == f.importances);
  CHECK(g.label_names == f.label_names);
  CHECK(node_count(g) == node_count(f));
  CHECK(serialize_forest(g) == bytes);

  // Each node adds exactly one 16-byte record.
  Forest one;
  one.n_features = 1;
  one.n_classes = 2;
  one.trees = {leaf_tree(1)};
  Forest three = one;
  three.trees = {stump(0, 0.5f, 0, 1)};
  CHECK(serialize_forest(three).size() - serialize_forest(one).size() == 2 * 16);
  const auto g1 = deserialize_forest(serialize_forest(one));
  CHECK(node_count(g1) == 1);
  CHECK(g1.trees[0].nodes[0].leaf_class == 1);
}

TEST_CASE("corrupt forest files are rejected") {
  Forest f;
  f.n_features = 1;
  f.n_classes = 2;
  f.trees = {stump(0, 0.5f, 0, 1)};
  const auto good = serialize_forest(f);
  // Header 6, three u16 fields, u32 node count: root record starts at 16, left child at 22.
  auto dangling = good;
  dangling[22] = 9;
  try {
    deserialize_forest(dangling);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("dangling") != std::string::npos);
    CHECK(e.offset() == 16);
  }
  auto self_loop = good;
  self_loop[22] = 0;
  CHECK_THROWS_AS(deserialize_forest(self_loop), FormatError);

  auto bad_class = good;
  bad_class[16 + 16 + 14] = 7;  // leaf_class of node 1
  CHECK_THROWS_AS(deserialize_forest(bad_class), FormatError);

  auto truncated = good;
  truncated.resize(30);
  CHECK_THROWS_AS(deserialize_forest(truncated), FormatError);

  auto wrong_kind = good;
  wrong_kind[5] = 1;
  CHECK_THROWS_AS(deserialize_forest(wrong_kind), FormatError);

  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_forest(trailing), FormatError);
}

TEST_CASE("training argument checks") {
  auto d = fixtures::blobs(10, 2, 2, 1);
  ForestConfig cfg;
  cfg.n_trees = 0;
  CHECK_THROWS_AS(train_forest(d, 2, cfg), ArgumentError);
  cfg.n_trees = 2;
  std::fill(d.labels.begin(), d.labels.end(), 0);
  CHECK_THROWS_AS(train_forest(d, 2, cfg), DataError);
  CHECK_THROWS_AS(train_forest(LabeledData{2, {}, {}}, 2, cfg), DataError);
}

TEST_CASE("working set counts input copy and vote counters") {
  Forest f;
  f.n_features = 24;
  f.n_classes = 7;
  f.trees = {leaf_tree(0)};
  CHECK(working_set_bytes(f) == 24 * 8 + 7 * 4);
}
