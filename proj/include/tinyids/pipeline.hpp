#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tinyids/bench.hpp"
#include "tinyids/mlp.hpp"

namespace tinyids::pipeline {

// Stage names in execution order.
inline constexpr std::array<std::string_view, 6> kStages = {"prepare",  "train-mlp",  "quantize",
                                                            "train-rf", "compact-rf", "bench"};

/// Flat key = value profile. Keys:
///   input        comma-separated CSV paths (enables the prepare stage)
///   data         prepared dataset file (used when there is no input)
///   out          output directory (required)
///   seed, sample_frac, time_format, test_frac
///   folds, fold_frac, scenarios, warmup, bins
///   arch, max_epochs, patience, trees, max_depth
///   importance_threshold, compact_trees, compact_depth
///   stages       comma list; defaults to every stage that has its inputs
/// Relative paths are resolved against the profile's directory.
struct Profile {
  std::vector<std::filesystem::path> inputs;
  std::optional<std::filesystem::path> data;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  double sample_frac = 0.05;
  std::string time_format = std::string(dataset::kDefaultTimeFormat);
  double test_frac = 0.2;
  std::size_t folds = 5;
  double fold_frac = 0.05;
  std::vector<bench::Scenario> scenarios{bench::kAllScenarios.begin(), bench::kAllScenarios.end()};
  std::size_t warmup = 10;
  std::size_t bins = 50;
  mlp::ArchSpec arch = mlp::ArchSpec::baseline();
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  std::size_t trees = 100;
  std::optional<std::size_t> max_depth;
  double importance_threshold = 0.6;
  std::size_t compact_trees = 10;
  std::size_t compact_depth = 10;
  std::vector<std::string> stages;  // empty = defaults
};

Profile parse_profile_text(std::string_view text, const std::filesystem::path& base_dir, std::uint64_t default_seed);
Profile load_profile(const std::filesystem::path& path, std::uint64_t default_seed);

struct RunResult {
  std::vector<std::string> stages;
  std::vector<std::filesystem::path> model_files;
  std::filesystem::path manifest;
};

// Runs the stages and writes <out>/manifest.json. Stage failures are
// rethrown with the stage name prefixed.
RunResult run_profile(const Profile& profile);

}  // namespace tinyids::pipeline
