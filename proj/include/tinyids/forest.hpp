#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinyids/dataset.hpp"

namespace tinyids::forest {

inline constexpr std::uint16_t kLeaf = 0xFFFF;

// Thresholds are float32 and inputs are compared after rounding to float32:
// a sample goes left when float(x[feature]) <= threshold.
struct TreeNode {
  std::uint16_t feature = kLeaf;
  float threshold = 0.0f;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint16_t leaf_class = 0;

  bool is_leaf() const { return feature == kLeaf; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root; children always follow their parent

  std::size_t depth() const;
  std::size_t predict(std::span<const double> x) const;
};

struct ForestConfig {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_depth;  // nullopt = unlimited
  std::uint64_t seed = 0;
  std::size_t min_samples_split = 2;
  std::size_t features_per_split = 0;  // 0 = floor(sqrt(n_features))
};

struct Forest {
  std::vector<Tree> trees;
  std::size_t n_features = 0;  // width of the input vector
  std::size_t n_classes = 0;
  // Original feature indices the trees were trained on (compacted forests).
  std::optional<std::vector<std::size_t>> feature_subset;
  // Normalized mean decrease in impurity, indexed like the input vector.
  std::vector<double> importances;
  ScalerParams scaler;
  std::vector<std::string> label_names;
};

double gini(std::span<const std::size_t> class_counts);

Forest train_forest(const LabeledData& data, std::size_t n_classes, const ForestConfig& config);

// Votes per class for an already-scaled full-width input.
std::vector<std::uint32_t> votes(const Forest& forest, std::span<const double> x);
// Plurality vote; ties go to the lowest class id.
std::size_t forest_predict(const Forest& forest, std::span<const double> x);
// Applies the bundled scaler (only on the columns the trees read) first.
std::vector<std::uint32_t> votes_raw(const Forest& forest, std::span<const double> raw);

const std::vector<double>& feature_importances(const Forest& forest);

// Smallest importance-descending prefix whose cumulative sum reaches
// `threshold`; ties in importance favour the lower index. Result is ascending.
std::vector<std::size_t> select_features_cumulative(std::span<const double> importances, double threshold);

struct CompactConfig {
  std::size_t n_trees = 10;
  std::size_t max_depth = 10;
  std::uint64_t seed = 0;
};

// Retrains on the selected columns only; tree nodes keep original feature indices.
Forest compact_forest(const LabeledData& data, std::size_t n_classes, std::span<const std::size_t> selected,
                      const CompactConfig& config);

std::size_t node_count(const Forest& forest);
// Scaled input copy (selected columns only for compacted forests) plus vote counters.
std::size_t working_set_bytes(const Forest& forest);

std::vector<std::uint8_t> serialize_forest(const Forest& forest);
Forest deserialize_forest(std::span<const std::uint8_t> bytes);

}  // namespace tinyids::forest
