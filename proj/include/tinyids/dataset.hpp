#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tinyids/binary_io.hpp"

namespace tinyids {

/// Dense row-major sample matrix with integer class labels.
///
/// This is the common currency between preprocessing, training and
/// benchmarking: every model consumes it and every split produces it.
struct LabeledData {
  std::size_t n_features = 0;
  std::vector<double> features;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * n_features, n_features};
  }
  std::span<double> row(std::size_t i) { return {features.data() + i * n_features, n_features}; }

  LabeledData subset(std::span<const std::size_t> indices) const;
  // Keeps only the given columns, in the order given.
  LabeledData project(std::span<const std::size_t> columns) const;
  std::vector<std::size_t> class_counts(std::size_t n_classes) const;
};

/// Per-column standardization parameters. `std` already holds the divisor:
/// constant columns store 1.
struct ScalerParams {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t size() const { return mean.size(); }
  bool empty() const { return mean.empty(); }
  void transform_row(std::span<double> row) const;
  // Rounds both vectors to float32, the width model files store them at.
  ScalerParams to_float32() const;
  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

ScalerParams fit_scaler(const LabeledData& data);
LabeledData apply_scaler(const ScalerParams& params, const LabeledData& data);

// Shared model-file blocks: u16 count, count f32 means, count f32 stds.
void write_scaler(ByteWriter& w, const ScalerParams& params);
ScalerParams read_scaler(ByteReader& r);
// u8 count, then u16-length-prefixed names.
void write_label_table(ByteWriter& w, std::span<const std::string> names);
std::vector<std::string> read_label_table(ByteReader& r);

namespace dataset {

inline constexpr std::size_t kNumericFeatureCount = 23;
inline constexpr std::size_t kFeatureCount = 31;
inline constexpr std::size_t kClassCount = 7;
inline constexpr std::size_t kRawLabelCount = 15;
inline constexpr double kFloat32Max = 3.4028234663852886e38;

enum class MergedLabel : std::uint8_t {
  benign = 0,
  dos = 1,
  port_scan = 2,
  ddos = 3,
  brute_force = 4,
  web_attack = 5,
  bot_infiltration_heartbleed = 6,
};

const std::array<std::string_view, kNumericFeatureCount>& numeric_feature_names();
// Column order of PreparedDataset::data.
const std::array<std::string_view, kFeatureCount>& feature_names();
const std::array<std::string_view, kClassCount>& class_names();
// The 15 raw labels, spelled as in the label-distribution table.
const std::array<std::string_view, kRawLabelCount>& raw_label_names();
std::vector<std::string> class_name_table();

MergedLabel merge_labels(std::string_view label_raw);

struct FlowRecord {
  std::string flow_id;
  std::string src_ip;
  std::optional<std::uint16_t> src_port;
  std::string dst_ip;
  std::optional<std::uint16_t> dst_port;
  std::string protocol;
  std::string timestamp;
  // Indexed like numeric_feature_names(); unparseable cells hold NaN.
  std::array<double, kNumericFeatureCount> numeric_features{};
  std::string label_raw;

  double numeric(std::string_view name) const;
};

struct ParseResult {
  std::vector<FlowRecord> records;
  std::size_t unparseable_cells = 0;
};

// Reads CICIDS2017-style CSVs. Headers are matched after trimming and
// case-folding; unknown columns are ignored.
ParseResult parse_flow_csv(std::span<const std::filesystem::path> paths);

inline constexpr std::string_view kDefaultTimeFormat = "D/M/YYYY H:mm";

struct TimeParts {
  int day_of_week = 0;  // Monday = 0
  int hour = 0;
  friend bool operator==(const TimeParts&, const TimeParts&) = default;
};

/// Parses `timestamp` against a format made of the tokens D, DD, M, MM, YYYY,
/// H, HH, mm, ss and literal characters. Single-letter tokens accept one or
/// two digits. A trailing ":ss" beyond the format is tolerated. Returns
/// nullopt for malformed text or an invalid calendar date.
std::optional<TimeParts> expand_timestamp(std::string_view timestamp,
                                          std::string_view format = kDefaultTimeFormat);

struct CleanResult {
  std::vector<FlowRecord> records;
  std::size_t dropped_nan = 0;
  std::size_t dropped_timestamp = 0;
  std::size_t clamped_pos_inf = 0;
  std::size_t clamped_neg_inf = 0;
};

CleanResult clean(std::vector<FlowRecord> records, std::string_view time_format = kDefaultTimeFormat);

/// First-seen ordinal code table for one categorical column.
class CategoryMap {
 public:
  std::optional<std::int64_t> find(std::string_view value) const;
  // Returns the existing code or appends `value` with code = size().
  std::int64_t code_or_append(const std::string& value);
  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& values() const { return values_; }
  friend bool operator==(const CategoryMap& a, const CategoryMap& b) { return a.values_ == b.values_; }

 private:
  std::vector<std::string> values_;
  std::unordered_map<std::string, std::int64_t> index_;
};

enum class CategoricalColumn : std::size_t { flow_id = 0, src_ip, dst_ip, protocol, label, count };

struct EncodingMaps {
  std::array<CategoryMap, static_cast<std::size_t>(CategoricalColumn::count)> columns;
  CategoryMap& operator[](CategoricalColumn c) { return columns[static_cast<std::size_t>(c)]; }
  const CategoryMap& operator[](CategoricalColumn c) const {
    return columns[static_cast<std::size_t>(c)];
  }
  friend bool operator==(const EncodingMaps&, const EncodingMaps&) = default;
};

struct Provenance {
  std::vector<std::string> sources;
  std::uint64_t seed = 0;
  double sample_fraction = 1.0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct PreparedDataset {
  LabeledData data;  // n × 31, labels are MergedLabel ids
  EncodingMaps encoding_maps;
  Provenance provenance;

  std::size_t size() const { return data.size(); }
  PreparedDataset subset(std::span<const std::size_t> indices) const;
};

/// Encodes cleaned records. When `maps` is supplied it is extended (unseen
/// values get appended codes); otherwise fresh maps are built.
PreparedDataset encode_and_assemble(const std::vector<FlowRecord>& records,
                                    std::optional<EncodingMaps> maps = std::nullopt,
                                    std::string_view time_format = kDefaultTimeFormat);

// Index-level stratification primitives; all results are sorted ascending.
std::vector<std::size_t> stratified_sample_indices(std::span<const std::uint8_t> labels,
                                                   double fraction, std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;
};

SplitIndices stratified_split_indices(std::span<const std::uint8_t> labels, double test_fraction,
                                      std::uint64_t seed);

// Largest-remainder allocation of round(fraction × Σcounts) across classes.
std::vector<std::size_t> largest_remainder_quota(std::span<const std::size_t> counts, double fraction);

PreparedDataset stratified_sample(const PreparedDataset& dataset, double fraction, std::uint64_t seed);

struct PreparedSplit {
  PreparedDataset train;
  PreparedDataset test;
  std::vector<std::string> warnings;
};

PreparedSplit stratified_split(const PreparedDataset& dataset, double test_fraction, std::uint64_t seed);

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> folds;
  std::uint64_t seed = 0;
};

FoldPlan make_fold_plan(std::span<const std::uint8_t> labels, std::size_t k, double per_fold_fraction,
                        std::uint64_t seed);

std::vector<std::uint8_t> serialize_dataset(const PreparedDataset& dataset);
PreparedDataset deserialize_dataset(std::span<const std::uint8_t> bytes);
void export_csv(const PreparedDataset& dataset, const std::filesystem::path& path);

struct PrepareOptions {
  double sample_fraction = 0.05;
  std::uint64_t seed = 0;
  std::string time_format = std::string(kDefaultTimeFormat);
};

struct PrepareReport {
  std::size_t parsed = 0;
  std::size_t unparseable_cells = 0;
  std::size_t dropped_nan = 0;
  std::size_t dropped_timestamp = 0;
  std::size_t clamped_inf = 0;
  std::size_t kept = 0;
};

/// parse → clean → encode → stratified sample.
PreparedDataset prepare(std::span<const std::filesystem::path> inputs, const PrepareOptions& options,
                        PrepareReport* report = nullptr);

/// Cluster description used by the synthetic corpus generator.
struct SynthLabelSpec {
  std::string raw_label;
  // Latent level per numeric feature; values are base × (2 + level + spread·N(0,1)).
  std::array<double, kNumericFeatureCount> level{};
  double spread = 0.6;
  int weekday = 0;           // Monday = 0; -1 means any weekday
  std::uint16_t main_port = 80;
  double main_port_share = 0.8;
};

struct SynthSpec {
  std::array<SynthLabelSpec, kRawLabelCount> labels;
  std::array<double, kNumericFeatureCount> base{};
};

SynthSpec default_synth_spec();

// Writes a CICIDS2017-shaped CSV; rows are shuffled, output is deterministic per seed.
void synth_generate(const SynthSpec& spec, std::span<const std::size_t> per_label_counts,
                    std::uint64_t seed, const std::filesystem::path& out);
void synth_generate(const SynthSpec& spec, std::size_t n_per_label, std::uint64_t seed,
                    const std::filesystem::path& out);

}  // namespace dataset
}  // namespace tinyids
