#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tinyids/dataset.hpp"
#include "tinyids/forest.hpp"
#include "tinyids/mlp.hpp"
#include "tinyids/model.hpp"

namespace tinyids::alloc_hook {

// Counts bytes requested through global operator new on the calling thread
// between start() and stop().
void start();
std::size_t stop();

}  // namespace tinyids::alloc_hook

namespace tinyids::bench {

enum class Scenario : std::uint8_t { ml_mlp = 0, tinyml_mlp = 1, ml_rf = 2, tinyml_rf = 3 };

inline constexpr std::array<Scenario, 4> kAllScenarios = {Scenario::ml_mlp, Scenario::tinyml_mlp, Scenario::ml_rf,
                                                          Scenario::tinyml_rf};

std::string_view scenario_name(Scenario s);   // "ML_MLP"
std::string_view scenario_token(Scenario s);  // "ml-mlp"
// Comma list of tokens; result keeps the canonical order without duplicates.
std::vector<Scenario> parse_scenarios(std::string_view text);

struct Metrics {
  // Percentages, weighted by true-class support.
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

Metrics evaluate(std::span<const std::uint8_t> y_true, std::span<const std::uint8_t> y_pred, std::size_t n_classes);
Metrics evaluate(const std::function<std::size_t(std::span<const double>)>& predict_fn, const LabeledData& test_set,
                 std::size_t n_classes);

struct ResourceSample {
  double inference_time_us = 0.0;
  std::size_t working_set_bytes = 0;
  std::size_t transient_bytes = 0;
};

// Times `fn` once per row, serially. The first `warmup` calls (cycling over
// the rows) are discarded.
std::vector<ResourceSample> measure_inference(const std::function<void(std::span<const double>)>& fn,
                                              const LabeledData& samples, std::size_t warmup,
                                              std::size_t working_set_bytes);
// Same, on a model; also records each prediction when `predictions` is non-null.
std::vector<ResourceSample> measure_inference(const AnyModel& model, const LabeledData& samples, std::size_t warmup,
                                              std::vector<std::uint8_t>* predictions = nullptr);

struct Stats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t n = 0;
};

Stats describe(std::span<const double> values);

struct HistogramData {
  std::vector<double> edges;  // n_bins + 1
  std::vector<std::size_t> counts;
  Stats stats;
  // n · bin_width · normal_pdf(center; mean, std) per bin; empty when std is 0.
  std::vector<double> overlay;
};

HistogramData histogram(std::span<const double> values, std::size_t n_bins = 50);

struct FoldResult {
  Metrics metrics;
  std::vector<ResourceSample> samples;
  std::size_t model_size_bytes = 0;
  std::string model_digest;  // FNV-1a of the serialized model, hex
};

struct ScenarioReport {
  Scenario scenario = Scenario::ml_mlp;
  std::vector<FoldResult> folds;

  double mean_accuracy() const;
  double mean_precision() const;
  double mean_recall() const;
  double mean_f1() const;
  // Means of the per-fold means.
  double mean_time_us() const;
  double mean_working_set() const;
  double mean_transient() const;
  double mean_model_size() const;
};

struct BenchReport {
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<ScenarioReport> scenarios;

  const ScenarioReport* find(Scenario s) const;
};

struct BenchOptions {
  std::uint64_t seed = 0;
  std::size_t n_classes = dataset::kClassCount;
  double test_fraction = 0.2;
  std::size_t warmup = 10;
  mlp::ArchSpec arch = mlp::ArchSpec::baseline();
  mlp::TrainConfig train;
  forest::ForestConfig full_forest;
  forest::CompactConfig compact;
  double importance_threshold = 0.6;
};

/// Models for the requested scenarios, trained on raw (unscaled) data. The
/// scaler is fit on `train_raw` and bundled with every model. TinyML variants
/// are derived from their ML counterparts, which are trained even when not
/// requested themselves.
std::map<Scenario, AnyModel> train_scenarios(const LabeledData& train_raw, std::span<const Scenario> scenarios,
                                             const BenchOptions& options);

BenchReport run_scenarios(const LabeledData& corpus, const dataset::FoldPlan& plan,
                          std::span<const Scenario> scenarios, const BenchOptions& options);

/// Writes resources.csv, metrics.csv, hist_<token>_{time,memory}.csv, stats.json
/// and samples.json (the raw record that load_report reads back).
void emit_report(const BenchReport& report, const std::filesystem::path& out_dir, std::size_t n_bins = 50);
BenchReport load_report(const std::filesystem::path& bench_dir);

}  // namespace tinyids::bench
