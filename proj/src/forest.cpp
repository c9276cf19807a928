#include "tinyids/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tinyids/error.hpp"
#include "tinyids/rng.hpp"

namespace tinyids::forest {

namespace {

// Split point between two adjacent distinct float values a < b. The midpoint
// can round up to b in float; fall back to a so that a <= t < b holds.
float midpoint(float a, float b) {
  const float t = static_cast<float>((static_cast<double>(a) + static_cast<double>(b)) / 2.0);
  return t < b ? t : a;
}

// Σ c² / n, the quantity CART maximizes; n·gini = n - proxy.
double gini_proxy(std::span<const std::size_t> counts, std::size_t n) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (auto c : counts) s += static_cast<double>(c) * static_cast<double>(c);
  return s / static_cast<double>(n);
}

std::uint16_t majority(std::span<const std::size_t> counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return static_cast<std::uint16_t>(best);
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<float>>& columns, std::span<const std::uint8_t> labels,
              std::span<const std::size_t> feature_ids, std::size_t n_classes, const ForestConfig& config,
              std::size_t features_per_split, Rng& rng, std::vector<double>& importance)
      : columns_(columns), labels_(labels), feature_ids_(feature_ids), n_classes_(n_classes), config_(config),
        mtry_(features_per_split), rng_(rng), importance_(importance), features_(columns.size()) {
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  Tree build(std::vector<std::size_t>& samples) {
    n_total_ = samples.size();
    tree_.nodes.clear();
    grow(samples, 0, samples.size(), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    std::size_t feature = 0;
    float threshold = 0.0f;
    double proxy = -1.0;
  };

  std::uint32_t grow(std::vector<std::size_t>& s, std::size_t begin, std::size_t end, std::size_t depth) {
    const std::size_t n = end - begin;
    std::vector<std::size_t> counts(n_classes_, 0);
    for (std::size_t i = begin; i < end; ++i) ++counts[labels_[s[i]]];

    const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{kLeaf, 0.0f, 0, 0, majority(counts)});

    const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
    if (pure || n < config_.min_samples_split || (config_.max_depth && depth >= *config_.max_depth)) return id;

    const double parent_proxy = gini_proxy(counts, n);
    const Split best = find_split(s, begin, end, parent_proxy);
    if (best.proxy < 0.0) return id;

    // Partition so that left samples come first.
    const auto& col = columns_[best.feature];
    const auto mid_it = std::stable_partition(s.begin() + static_cast<std::ptrdiff_t>(begin),
                                              s.begin() + static_cast<std::ptrdiff_t>(end),
                                              [&](std::size_t i) { return col[i] <= best.threshold; });
    const auto mid = static_cast<std::size_t>(mid_it - s.begin());
    importance_[best.feature] += (best.proxy - parent_proxy) / static_cast<double>(n_total_);

    const std::uint32_t left = grow(s, begin, mid, depth + 1);
    const std::uint32_t right = grow(s, mid, end, depth + 1);
    auto& node = tree_.nodes[id];
    node.feature = static_cast<std::uint16_t>(feature_ids_[best.feature]);
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    node.leaf_class = 0;
    return id;
  }

  Split find_split(const std::vector<std::size_t>& s, std::size_t begin, std::size_t end, double parent_proxy) {
    Split best;
    const std::size_t n = end - begin;
    std::size_t visited = 0;
    std::vector<std::size_t> left(n_classes_), right(n_classes_), total(n_classes_, 0);
    for (std::size_t i = begin; i < end; ++i) ++total[labels_[s[i]]];

    // Draw features without replacement until mtry non-constant ones were evaluated.
    for (std::size_t k = 0; k < features_.size() && visited < mtry_; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng_.uniform_below(features_.size() - k));
      std::swap(features_[k], features_[j]);
      const std::size_t f = features_[k];
      const auto& col = columns_[f];

      pairs_.clear();
      for (std::size_t i = begin; i < end; ++i) pairs_.emplace_back(col[s[i]], labels_[s[i]]);
      std::sort(pairs_.begin(), pairs_.end());
      if (pairs_.front().first == pairs_.back().first) continue;
      ++visited;

      std::fill(left.begin(), left.end(), 0);
      right = total;
      double sum_l = 0.0, sum_r = 0.0;
      for (auto c : right) sum_r += static_cast<double>(c) * static_cast<double>(c);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::uint8_t y = pairs_[i].second;
        // Incremental Σc² updates: (c+1)² - c² = 2c + 1.
        sum_l += 2.0 * static_cast<double>(left[y]) + 1.0;
        sum_r -= 2.0 * static_cast<double>(right[y]) - 1.0;
        ++left[y];
        --right[y];
        if (pairs_[i].first == pairs_[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = static_cast<double>(n - i - 1);
        const double proxy = sum_l / nl + sum_r / nr;
        if (proxy > best.proxy) {
          best.proxy = proxy;
          best.feature = f;
          best.threshold = midpoint(pairs_[i].first, pairs_[i + 1].first);
        }
      }
    }
    // Only splits that strictly reduce impurity are kept.
    if (best.proxy <= parent_proxy + 1e-12 * std::max(1.0, parent_proxy)) best.proxy = -1.0;
    return best;
  }

  const std::vector<std::vector<float>>& columns_;
  std::span<const std::uint8_t> labels_;
  std::span<const std::size_t> feature_ids_;
  std::size_t n_classes_;
  const ForestConfig& config_;
  std::size_t mtry_;
  Rng& rng_;
  std::vector<double>& importance_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<float, std::uint8_t>> pairs_;
  std::size_t n_total_ = 0;
  Tree tree_;
};

// Trains on the given columns of `data`; nodes record feature_ids[column].
Forest train_on_columns(const LabeledData& data, std::size_t n_classes, std::span<const std::size_t> columns_used,
                        const ForestConfig& config) {
  if (data.empty()) throw DataError("cannot train a forest on an empty data set");
  if (n_classes < 2 || n_classes > 0xFFFF) throw ArgumentError("forest needs between 2 and 65535 classes");
  if (config.n_trees == 0 || config.n_trees > 0xFFFF) throw ArgumentError("tree count must be in 1..65535");
  if (config.min_samples_split < 2) throw ArgumentError("min_samples_split must be >= 2");
  if (data.n_features == 0 || data.n_features >= kLeaf) throw ArgumentError("feature count out of range");
  for (auto y : data.labels) {
    if (y >= n_classes) throw DataError("label " + std::to_string(y) + " out of range");
  }
  {
    std::size_t present = 0;
    for (auto c : data.class_counts(n_classes)) present += c > 0;
    if (present < 2) throw DataError("forest training needs at least two classes present");
  }

  const std::size_t d = columns_used.size();
  std::vector<std::vector<float>> columns(d, std::vector<float>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = data.row(i);
    for (std::size_t k = 0; k < d; ++k) columns[k][i] = static_cast<float>(r[columns_used[k]]);
  }
  std::size_t mtry = config.features_per_split;
  if (mtry == 0) mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
  mtry = std::min(mtry, d);

  Forest forest;
  forest.n_features = data.n_features;
  forest.n_classes = n_classes;
  std::vector<double> importance_sum(d, 0.0);
  std::vector<std::size_t> samples(data.size());
  for (std::size_t t = 0; t < config.n_trees; ++t) {
    Rng rng(config.seed + t);
    for (auto& s : samples) s = static_cast<std::size_t>(rng.uniform_below(data.size()));
    std::vector<double> tree_importance(d, 0.0);
    TreeBuilder builder(columns, data.labels, columns_used, n_classes, config, mtry, rng, tree_importance);
    forest.trees.push_back(builder.build(samples));
    for (std::size_t k = 0; k < d; ++k) importance_sum[k] += tree_importance[k];
  }

  forest.importances.assign(data.n_features, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double v = std::max(0.0, importance_sum[k] / static_cast<double>(config.n_trees));
    forest.importances[columns_used[k]] = v;
    total += v;
  }
  if (total > 0.0) {
    for (auto& v : forest.importances) v /= total;
  } else {
    // No split anywhere: every tree is a single leaf.
    for (std::size_t k = 0; k < d; ++k) forest.importances[columns_used[k]] = 1.0 / static_cast<double>(d);
  }
  return forest;
}

}  // namespace

std::size_t Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::size_t> level(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[nodes[i].left] = level[i] + 1;
      level[nodes[i].right] = level[i] + 1;
    }
  }
  return deepest;
}

std::size_t Tree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<float>(x[n.feature]) <= n.threshold ? n.left : n.right;
  }
  return nodes[i].leaf_class;
}

double gini(std::span<const std::size_t> class_counts) {
  const double n = static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  if (n == 0.0) return 0.0;
  double s = 0.0;
  for (auto c : class_counts) s += (static_cast<double>(c) / n) * (static_cast<double>(c) / n);
  return 1.0 - s;
}

Forest train_forest(const LabeledData& data, std::size_t n_classes, const ForestConfig& config) {
  std::vector<std::size_t> all(data.n_features);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return train_on_columns(data, n_classes, all, config);
}

std::vector<std::uint32_t> votes(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.n_features) {
    throw DataError("input has " + std::to_string(x.size()) + " features, forest expects " +
                    std::to_string(forest.n_features));
  }
  std::vector<std::uint32_t> v(forest.n_classes, 0);
  for (const auto& t : forest.trees) ++v[t.predict(x)];
  return v;
}

std::size_t forest_predict(const Forest& forest, std::span<const double> x) {
  const auto v = votes(forest, x);
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<std::uint32_t> votes_raw(const Forest& forest, std::span<const double> raw) {
  if (raw.size() != forest.n_features) {
    throw DataError("input has " + std::to_string(raw.size()) + " features, forest expects " +
                    std::to_string(forest.n_features));
  }
  if (forest.scaler.empty()) return votes(forest, raw);
  std::vector<double> x(raw.begin(), raw.end());
  const auto& sc = forest.scaler;
  if (forest.feature_subset) {
    for (auto j : *forest.feature_subset) x[j] = (x[j] - sc.mean[j]) / sc.std[j];
  } else {
    sc.transform_row(x);
  }
  return votes(forest, x);
}

const std::vector<double>& feature_importances(const Forest& forest) { return forest.importances; }

std::vector<std::size_t> select_features_cumulative(std::span<const double> importances, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ArgumentError("importance threshold must be in (0, 1]");
  std::vector<std::size_t> order(importances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importances[a] > importances[b]; });
  std::vector<std::size_t> chosen;
  double cum = 0.0;
  for (auto j : order) {
    chosen.push_back(j);
    cum += importances[j];
    // Small slack so that e.g. 0.1 * 6 reaches 0.6 despite rounding.
    if (cum >= threshold - 1e-12) break;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

Forest compact_forest(const LabeledData& data, std::size_t n_classes, std::span<const std::size_t> selected,
                      const CompactConfig& config) {
  if (selected.empty()) throw ArgumentError("compaction needs at least one selected feature");
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i] >= data.n_features) throw ArgumentError("selected feature index out of range");
    if (i > 0 && selected[i] <= selected[i - 1]) throw ArgumentError("selected features must be strictly increasing");
  }
  ForestConfig fc;
  fc.n_trees = config.n_trees;
  fc.max_depth = config.max_depth;
  fc.seed = config.seed;
  Forest f = train_on_columns(data, n_classes, selected, fc);
  f.feature_subset = std::vector<std::size_t>(selected.begin(), selected.end());
  return f;
}

std::size_t node_count(const Forest& forest) {
  std::size_t n = 0;
  for (const auto& t : forest.trees) n += t.nodes.size();
  return n;
}

std::size_t working_set_bytes(const Forest& forest) {
  const std::size_t width = forest.feature_subset ? forest.feature_subset->size() : forest.n_features;
  return width * sizeof(double) + forest.n_classes * sizeof(std::uint32_t);
}

std::vector<std::uint8_t> serialize_forest(const Forest& forest) {
  if (forest.trees.size() > 0xFFFF || forest.n_features >= kLeaf || forest.n_classes > 0xFFFF) {
    throw ArgumentError("forest too large for the model format");
  }
  ByteWriter w;
  w.header(ArtifactKind::forest);
  w.u16(static_cast<std::uint16_t>(forest.n_features));
  w.u16(static_cast<std::uint16_t>(forest.n_classes));
  w.u16(static_cast<std::uint16_t>(forest.trees.size()));
  for (const auto& t : forest.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      w.u16(n.feature);
      w.f32(n.threshold);
      w.u32(n.left);
      w.u32(n.right);
      w.u16(n.leaf_class);
    }
  }
  w.u8(forest.feature_subset ? 1 : 0);
  if (forest.feature_subset) {
    w.u16(static_cast<std::uint16_t>(forest.feature_subset->size()));
    for (auto j : *forest.feature_subset) w.u16(static_cast<std::uint16_t>(j));
  }
  w.u8(forest.importances.empty() ? 0 : 1);
  if (!forest.importances.empty()) {
    w.u16(static_cast<std::uint16_t>(forest.importances.size()));
    for (double v : forest.importances) w.f64(v);
  }
  write_scaler(w, forest.scaler);
  write_label_table(w, forest.label_names);
  return std::move(w).take();
}

Forest deserialize_forest(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.header(ArtifactKind::forest);
  Forest f;
  f.n_features = r.u16();
  f.n_classes = r.u16();
  if (f.n_features == 0 || f.n_features == kLeaf) r.fail("invalid feature count");
  if (f.n_classes < 2) r.fail("forest needs at least two classes");
  const std::size_t n_trees = r.u16();
  if (n_trees == 0) r.fail("forest has no trees");
  for (std::size_t t = 0; t < n_trees; ++t) {
    Tree tree;
    const std::uint32_t n_nodes = r.u32();
    if (n_nodes == 0) r.fail("tree " + std::to_string(t) + " has no nodes");
    if (static_cast<std::size_t>(n_nodes) * 16 > r.remaining()) {
      r.fail("truncated input: tree " + std::to_string(t) + " declares " + std::to_string(n_nodes) + " nodes");
    }
    tree.nodes.resize(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
      const std::size_t at = r.offset();
      auto& n = tree.nodes[i];
      n.feature = r.u16();
      n.threshold = r.f32();
      n.left = r.u32();
      n.right = r.u32();
      n.leaf_class = r.u16();
      const std::string where = "tree " + std::to_string(t) + " node " + std::to_string(i);
      if (n.is_leaf()) {
        if (n.leaf_class >= f.n_classes) throw FormatError(where + ": leaf class out of range", at);
      } else {
        if (n.feature >= f.n_features) throw FormatError(where + ": feature index out of range", at);
        if (n.left <= i || n.right <= i || n.left >= n_nodes || n.right >= n_nodes) {
          throw FormatError(where + ": dangling child index", at);
        }
      }
    }
    f.trees.push_back(std::move(tree));
  }
  if (r.u8() != 0) {
    const std::size_t k = r.u16();
    std::vector<std::size_t> subset(k);
    for (std::size_t i = 0; i < k; ++i) {
      subset[i] = r.u16();
      if (subset[i] >= f.n_features || (i > 0 && subset[i] <= subset[i - 1])) r.fail("invalid feature subset");
    }
    f.feature_subset = std::move(subset);
  }
  if (r.u8() != 0) {
    const std::size_t n = r.u16();
    if (n != f.n_features) r.fail("importance vector width does not match feature count");
    f.importances.resize(n);
    for (auto& v : f.importances) v = r.f64();
  }
  f.scaler = read_scaler(r);
  if (!f.scaler.empty() && f.scaler.size() != f.n_features) r.fail("scaler width does not match feature count");
  f.label_names = read_label_table(r);
  r.expect_end();
  return f;
}

}  // namespace tinyids::forest
