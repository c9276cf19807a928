#include "tinyids/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "tinyids/error.hpp"
#include "tinyids/log.hpp"
#include "tinyids/rng.hpp"

namespace tinyids {

LabeledData LabeledData::subset(std::span<const std::size_t> indices) const {
  LabeledData out;
  out.n_features = n_features;
  out.features.reserve(indices.size() * n_features);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

LabeledData LabeledData::project(std::span<const std::size_t> columns) const {
  for (std::size_t c : columns) {
    if (c >= n_features) throw DataError("projection column " + std::to_string(c) + " out of range");
  }
  LabeledData out;
  out.n_features = columns.size();
  out.labels = labels;
  out.features.reserve(size() * columns.size());
  for (std::size_t i = 0; i < size(); ++i) {
    auto r = row(i);
    for (std::size_t c : columns) out.features.push_back(r[c]);
  }
  return out;
}

std::vector<std::size_t> LabeledData::class_counts(std::size_t n_classes) const {
  std::vector<std::size_t> counts(n_classes, 0);
  for (auto y : labels) {
    if (y >= n_classes) throw DataError("label " + std::to_string(y) + " out of range");
    ++counts[y];
  }
  return counts;
}

void ScalerParams::transform_row(std::span<double> row) const {
  if (row.size() != mean.size()) {
    throw DataError("scaler expects " + std::to_string(mean.size()) + " columns, got " +
                    std::to_string(row.size()));
  }
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / std[j];
}

ScalerParams fit_scaler(const LabeledData& data) {
  const std::size_t d = data.n_features;
  ScalerParams p;
  p.mean.assign(d, 0.0);
  p.std.assign(d, 0.0);
  const std::size_t n = data.size();
  if (n == 0) throw DataError("cannot fit scaler on an empty matrix");
  for (std::size_t i = 0; i < n; ++i) {
    auto r = data.row(i);
    for (std::size_t j = 0; j < d; ++j) p.mean[j] += r[j];
  }
  for (auto& m : p.mean) m /= static_cast<double>(n);
  // Second pass keeps the variance stable for large-magnitude columns.
  for (std::size_t i = 0; i < n; ++i) {
    auto r = data.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = r[j] - p.mean[j];
      p.std[j] += dev * dev;
    }
  }
  for (auto& s : p.std) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s == 0.0) s = 1.0;
  }
  return p;
}

LabeledData apply_scaler(const ScalerParams& params, const LabeledData& data) {
  if (params.size() != data.n_features) {
    throw DataError("scaler has " + std::to_string(params.size()) + " columns, matrix has " +
                    std::to_string(data.n_features));
  }
  LabeledData out = data;
  for (std::size_t i = 0; i < out.size(); ++i) params.transform_row(out.row(i));
  return out;
}

ScalerParams ScalerParams::to_float32() const {
  ScalerParams p = *this;
  for (auto& m : p.mean) m = static_cast<float>(m);
  for (auto& s : p.std) {
    const float f = static_cast<float>(s);
    s = (f > 0.0f && std::isfinite(f)) ? f : 1.0;
  }
  return p;
}

void write_scaler(ByteWriter& w, const ScalerParams& params) {
  w.u16(static_cast<std::uint16_t>(params.size()));
  for (double m : params.mean) w.f32(static_cast<float>(m));
  for (double s : params.std) w.f32(static_cast<float>(s));
}

ScalerParams read_scaler(ByteReader& r) {
  const std::size_t n = r.u16();
  ScalerParams p;
  p.mean.resize(n);
  p.std.resize(n);
  for (auto& m : p.mean) m = r.f32();
  for (auto& s : p.std) {
    s = r.f32();
    if (!(s > 0.0) || !std::isfinite(s)) r.fail("scaler divisor must be positive and finite");
  }
  return p;
}

void write_label_table(ByteWriter& w, std::span<const std::string> names) {
  if (names.size() > 0xFF) throw ArgumentError("label table too large");
  w.u8(static_cast<std::uint8_t>(names.size()));
  for (const auto& n : names) w.str(n);
}

std::vector<std::string> read_label_table(ByteReader& r) {
  std::vector<std::string> names(r.u8());
  for (auto& n : names) n = r.str();
  return names;
}

namespace dataset {

const std::array<std::string_view, kNumericFeatureCount>& numeric_feature_names() {
  static constexpr std::array<std::string_view, kNumericFeatureCount> names = {
      "Flow Duration",     "Total Fwd Packets",      "Total Backward Packets", "Flow Bytes/s",
      "Flow Packets/s",    "Flow IAT Mean",          "Flow IAT Std",           "Flow IAT Max",
      "Flow IAT Min",      "Fwd PSH Flags",          "Bwd PSH Flags",          "Fwd Header Length",
      "Bwd Header Length", "FIN Flag Count",         "SYN Flag Count",         "RST Flag Count",
      "PSH Flag Count",    "ACK Flag Count",         "URG Flag Count",         "CWE Flag Count",
      "ECE Flag Count",    "Init_Win_bytes_forward", "Init_Win_bytes_backward",
  };
  return names;
}

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static const auto names = [] {
    std::array<std::string_view, kFeatureCount> out{"Flow ID",  "Source IP",   "Source Port",
                                                    "Destination IP", "Destination Port",
                                                    "Protocol", "Day Of Week", "Hour"};
    const auto& numeric = numeric_feature_names();
    std::copy(numeric.begin(), numeric.end(), out.begin() + 8);
    return out;
  }();
  return names;
}

const std::array<std::string_view, kClassCount>& class_names() {
  static constexpr std::array<std::string_view, kClassCount> names = {
      "BENIGN", "DoS", "PortScan", "DDoS", "BruteForce", "WebAttack", "BotInfiltrationHeartbleed"};
  return names;
}

const std::array<std::string_view, kRawLabelCount>& raw_label_names() {
  static constexpr std::array<std::string_view, kRawLabelCount> names = {
      "BENIGN",        "DoS Hulk",    "DoS GoldenEye",          "DoS slowloris",
      "DoS Slowhttptest", "PortScan", "DDoS",                   "FTP-Patator",
      "SSH-Patator",   "Web Attack-Brute Force", "Web Attack-XSS", "Web Attack-Sql Injection",
      "Bot",           "Infiltration", "Heartbleed",
  };
  return names;
}

std::vector<std::string> class_name_table() {
  return {class_names().begin(), class_names().end()};
}

namespace {

// Lower-cased alphanumerics only: absorbs the dash/en-dash/U+FFFD variants
// found in different exports of the web-attack labels.
std::string label_key(std::string_view s) {
  std::string key;
  for (unsigned char c : s) {
    if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
  }
  return key;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string fold_header(std::string_view s) {
  std::string out(trim(s));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

MergedLabel merge_labels(std::string_view label_raw) {
  static const std::unordered_map<std::string, MergedLabel> table = [] {
    std::unordered_map<std::string, MergedLabel> t;
    constexpr std::array<MergedLabel, kRawLabelCount> merged = {
        MergedLabel::benign,      MergedLabel::dos,         MergedLabel::dos,
        MergedLabel::dos,         MergedLabel::dos,         MergedLabel::port_scan,
        MergedLabel::ddos,        MergedLabel::brute_force, MergedLabel::brute_force,
        MergedLabel::web_attack,  MergedLabel::web_attack,  MergedLabel::web_attack,
        MergedLabel::bot_infiltration_heartbleed, MergedLabel::bot_infiltration_heartbleed,
        MergedLabel::bot_infiltration_heartbleed,
    };
    for (std::size_t i = 0; i < kRawLabelCount; ++i) t.emplace(label_key(raw_label_names()[i]), merged[i]);
    return t;
  }();
  auto it = table.find(label_key(label_raw));
  if (it == table.end()) throw DataError("unknown label '" + std::string(label_raw) + "'");
  return it->second;
}

double FlowRecord::numeric(std::string_view name) const {
  const auto& names = numeric_feature_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return numeric_features[i];
  }
  throw ArgumentError("no numeric feature named '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

void split_csv_line(std::string_view line, std::vector<std::string>& out) {
  out.clear();
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(std::move(cell));
}

bool parse_real(std::string_view text, double& out) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

std::optional<std::uint16_t> parse_port(std::string_view text) {
  double v = 0.0;
  if (!parse_real(text, v) || !(v >= 0.0 && v <= 65535.0) || v != std::floor(v)) return std::nullopt;
  return static_cast<std::uint16_t>(v);
}

enum class Column : std::size_t {
  flow_id, src_ip, src_port, dst_ip, dst_port, protocol, timestamp, label, first_numeric
};

constexpr std::array<std::string_view, 8> kIdentityHeaders = {
    "Flow ID", "Source IP", "Source Port", "Destination IP",
    "Destination Port", "Protocol", "Timestamp", "Label"};

}  // namespace

ParseResult parse_flow_csv(std::span<const std::filesystem::path> paths) {
  ParseResult result;
  std::vector<std::string> cells;
  constexpr std::size_t kRequired = kIdentityHeaders.size() + kNumericFeatureCount;

  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string() + ": missing header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    split_csv_line(line, cells);

    std::unordered_map<std::string, std::size_t> header_pos;
    for (std::size_t i = 0; i < cells.size(); ++i) header_pos.emplace(fold_header(cells[i]), i);

    // positions[k]: identity columns first, then the numeric features.
    std::array<std::size_t, kRequired> positions{};
    std::vector<std::string> missing;
    auto locate = [&](std::string_view name, std::size_t slot) {
      auto it = header_pos.find(fold_header(name));
      if (it == header_pos.end()) {
        missing.emplace_back(name);
      } else {
        positions[slot] = it->second;
      }
    };
    for (std::size_t k = 0; k < kIdentityHeaders.size(); ++k) locate(kIdentityHeaders[k], k);
    for (std::size_t k = 0; k < kNumericFeatureCount; ++k) {
      locate(numeric_feature_names()[k], kIdentityHeaders.size() + k);
    }
    if (!missing.empty()) {
      std::string msg = path.string() + ": missing required column(s): ";
      for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + missing[i];
      throw SchemaError(msg);
    }
    const std::size_t max_pos = *std::max_element(positions.begin(), positions.end());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      split_csv_line(line, cells);
      if (cells.size() <= max_pos) {
        throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": expected at least " +
                          std::to_string(max_pos + 1) + " fields, got " + std::to_string(cells.size()));
      }
      auto cell = [&](Column c) -> std::string_view { return cells[positions[static_cast<std::size_t>(c)]]; };

      FlowRecord rec;
      rec.flow_id = std::string(trim(cell(Column::flow_id)));
      rec.src_ip = std::string(trim(cell(Column::src_ip)));
      rec.dst_ip = std::string(trim(cell(Column::dst_ip)));
      rec.protocol = std::string(trim(cell(Column::protocol)));
      rec.timestamp = std::string(trim(cell(Column::timestamp)));
      rec.label_raw = std::string(trim(cell(Column::label)));
      rec.src_port = parse_port(cell(Column::src_port));
      rec.dst_port = parse_port(cell(Column::dst_port));
      result.unparseable_cells += !rec.src_port.has_value();
      result.unparseable_cells += !rec.dst_port.has_value();
      for (std::size_t k = 0; k < kNumericFeatureCount; ++k) {
        double v = 0.0;
        if (!parse_real(cells[positions[kIdentityHeaders.size() + k]], v)) {
          v = std::numeric_limits<double>::quiet_NaN();
          ++result.unparseable_cells;
        }
        rec.numeric_features[k] = v;
      }
      result.records.push_back(std::move(rec));
    }
  }
  if (result.unparseable_cells > 0) {
    log::warn(std::to_string(result.unparseable_cells) + " unparseable cell(s) read as NaN");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Timestamps

std::optional<TimeParts> expand_timestamp(std::string_view timestamp, std::string_view format) {
  const std::string_view ts = trim(timestamp);
  std::size_t i = 0;
  int day = -1, month = -1, year = -1, hour = 0, minute = 0, second = 0;

  auto digits = [&](std::size_t min_n, std::size_t max_n, int& out) {
    std::size_t n = 0;
    int v = 0;
    while (n < max_n && i + n < ts.size() && std::isdigit(static_cast<unsigned char>(ts[i + n]))) {
      v = v * 10 + (ts[i + n] - '0');
      ++n;
    }
    if (n < min_n) return false;
    i += n;
    out = v;
    return true;
  };

  std::size_t j = 0;
  while (j < format.size()) {
    const std::string_view rest = format.substr(j);
    bool ok = true;
    if (rest.starts_with("YYYY")) {
      ok = digits(4, 4, year);
      j += 4;
    } else if (rest.starts_with("DD")) {
      ok = digits(2, 2, day);
      j += 2;
    } else if (rest.starts_with("D")) {
      ok = digits(1, 2, day);
      j += 1;
    } else if (rest.starts_with("MM")) {
      ok = digits(2, 2, month);
      j += 2;
    } else if (rest.starts_with("M")) {
      ok = digits(1, 2, month);
      j += 1;
    } else if (rest.starts_with("HH")) {
      ok = digits(2, 2, hour);
      j += 2;
    } else if (rest.starts_with("H")) {
      ok = digits(1, 2, hour);
      j += 1;
    } else if (rest.starts_with("mm")) {
      ok = digits(2, 2, minute);
      j += 2;
    } else if (rest.starts_with("ss")) {
      ok = digits(2, 2, second);
      j += 2;
    } else {
      ok = i < ts.size() && ts[i] == format[j];
      ++i;
      ++j;
    }
    if (!ok) return std::nullopt;
  }
  if (i < ts.size()) {
    int extra = 0;
    if (ts[i] != ':') return std::nullopt;
    ++i;
    if (!digits(2, 2, extra) || i != ts.size()) return std::nullopt;
    second = extra;
  }
  if (year < 0 || month < 0 || day < 0) return std::nullopt;
  if (hour > 23 || minute > 59 || second > 60) return std::nullopt;

  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) return std::nullopt;
  const weekday wd{sys_days{ymd}};
  return TimeParts{static_cast<int>((wd.c_encoding() + 6) % 7), hour};
}

// ---------------------------------------------------------------------------
// Cleaning

CleanResult clean(std::vector<FlowRecord> records, std::string_view time_format) {
  CleanResult out;
  out.records.reserve(records.size());
  for (auto& rec : records) {
    const bool has_nan = !rec.src_port || !rec.dst_port ||
                         std::any_of(rec.numeric_features.begin(), rec.numeric_features.end(),
                                     [](double v) { return std::isnan(v); });
    if (has_nan) {
      ++out.dropped_nan;
      continue;
    }
    if (!expand_timestamp(rec.timestamp, time_format)) {
      ++out.dropped_timestamp;
      continue;
    }
    for (double& v : rec.numeric_features) {
      if (v == std::numeric_limits<double>::infinity()) {
        v = kFloat32Max;
        ++out.clamped_pos_inf;
      } else if (v == -std::numeric_limits<double>::infinity()) {
        v = -kFloat32Max;
        ++out.clamped_neg_inf;
      }
    }
    out.records.push_back(std::move(rec));
  }
  if (out.dropped_timestamp > 0) {
    log::warn(std::to_string(out.dropped_timestamp) + " record(s) with unparseable timestamps dropped");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoding

std::optional<std::int64_t> CategoryMap::find(std::string_view value) const {
  auto it = index_.find(std::string(value));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int64_t CategoryMap::code_or_append(const std::string& value) {
  auto [it, inserted] = index_.try_emplace(value, static_cast<std::int64_t>(values_.size()));
  if (inserted) values_.push_back(value);
  return it->second;
}

namespace {

// Values are kept float32-representable so the in-memory matrix matches its
// serialized form exactly.
double to_storage(double v) {
  v = std::clamp(v, -kFloat32Max, kFloat32Max);
  return static_cast<double>(static_cast<float>(v));
}

}  // namespace

PreparedDataset encode_and_assemble(const std::vector<FlowRecord>& records,
                                    std::optional<EncodingMaps> maps, std::string_view time_format) {
  PreparedDataset ds;
  ds.encoding_maps = maps ? std::move(*maps) : EncodingMaps{};
  auto& em = ds.encoding_maps;
  ds.data.n_features = kFeatureCount;
  ds.data.features.reserve(records.size() * kFeatureCount);
  ds.data.labels.reserve(records.size());

  for (const auto& rec : records) {
    const auto time = expand_timestamp(rec.timestamp, time_format);
    if (!time) throw DataError("unparseable timestamp '" + rec.timestamp + "' (run clean first)");
    if (!rec.src_port || !rec.dst_port) throw DataError("record with missing port (run clean first)");
    const MergedLabel label = merge_labels(rec.label_raw);

    auto& f = ds.data.features;
    f.push_back(to_storage(static_cast<double>(em[CategoricalColumn::flow_id].code_or_append(rec.flow_id))));
    f.push_back(to_storage(static_cast<double>(em[CategoricalColumn::src_ip].code_or_append(rec.src_ip))));
    f.push_back(*rec.src_port);
    f.push_back(to_storage(static_cast<double>(em[CategoricalColumn::dst_ip].code_or_append(rec.dst_ip))));
    f.push_back(*rec.dst_port);
    f.push_back(to_storage(static_cast<double>(em[CategoricalColumn::protocol].code_or_append(rec.protocol))));
    f.push_back(time->day_of_week);
    f.push_back(time->hour);
    for (double v : rec.numeric_features) {
      if (!std::isfinite(v)) throw DataError("non-finite feature value (run clean first)");
      f.push_back(to_storage(v));
    }
    em[CategoricalColumn::label].code_or_append(rec.label_raw);
    ds.data.labels.push_back(static_cast<std::uint8_t>(label));
  }
  return ds;
}

PreparedDataset PreparedDataset::subset(std::span<const std::size_t> indices) const {
  return PreparedDataset{data.subset(indices), encoding_maps, provenance};
}

// ---------------------------------------------------------------------------
// Stratification

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(std::span<const std::uint8_t> labels) {
  std::vector<std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= by_class.size()) by_class.resize(labels[i] + 1u);
    by_class[labels[i]].push_back(i);
  }
  return by_class;
}

std::string class_display_name(std::size_t c) {
  if (c < kClassCount) return std::string(class_names()[c]);
  return "class " + std::to_string(c);
}

std::size_t floor_one_quota(double fraction, std::size_t count) {
  const auto q = static_cast<std::size_t>(std::max<long>(1, std::lround(fraction * static_cast<double>(count))));
  return std::min(q, count);
}

}  // namespace

std::vector<std::size_t> stratified_sample_indices(std::span<const std::uint8_t> labels, double fraction,
                                                   std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ArgumentError("sample fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  auto by_class = indices_by_class(labels);
  Rng rng(seed);
  std::vector<std::size_t> picked;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    rng.shuffle(std::span<std::size_t>(members));
    const std::size_t n = floor_one_quota(fraction, members.size());
    picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<std::size_t> largest_remainder_quota(std::span<const std::size_t> counts, double fraction) {
  const std::size_t total_n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(total_n)));
  std::vector<std::size_t> quota(counts.size());
  std::vector<double> remainder(counts.size());
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double exact = fraction * static_cast<double>(counts[c]);
    quota[c] = std::min(counts[c], static_cast<std::size_t>(std::floor(exact)));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < target && k < order.size(); ++k) {
    const std::size_t c = order[k];
    if (remainder[c] > 0.0 && quota[c] < counts[c]) {
      ++quota[c];
      ++assigned;
    }
  }
  return quota;
}

SplitIndices stratified_split_indices(std::span<const std::uint8_t> labels, double test_fraction,
                                      std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ArgumentError("test fraction must be in (0, 1), got " + std::to_string(test_fraction));
  }
  auto by_class = indices_by_class(labels);
  std::vector<std::size_t> counts;
  for (const auto& m : by_class) counts.push_back(m.size());
  auto quota = largest_remainder_quota(counts, test_fraction);

  SplitIndices out;
  Rng rng(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() == 1) {
      quota[c] = 0;
      out.warnings.push_back(class_display_name(c) + " has a single sample; kept in the training partition");
    } else {
      quota[c] = std::min(quota[c], members.size() - 1);
    }
    rng.shuffle(std::span<std::size_t>(members));
    out.test.insert(out.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
  }
  for (const auto& w : out.warnings) log::warn(w);
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

PreparedDataset stratified_sample(const PreparedDataset& dataset, double fraction, std::uint64_t seed) {
  const auto idx = stratified_sample_indices(dataset.data.labels, fraction, seed);
  PreparedDataset out = dataset.subset(idx);
  out.provenance.seed = seed;
  out.provenance.sample_fraction = fraction;
  return out;
}

PreparedSplit stratified_split(const PreparedDataset& dataset, double test_fraction, std::uint64_t seed) {
  auto s = stratified_split_indices(dataset.data.labels, test_fraction, seed);
  return PreparedSplit{dataset.subset(s.train), dataset.subset(s.test), std::move(s.warnings)};
}

FoldPlan make_fold_plan(std::span<const std::uint8_t> labels, std::size_t k, double per_fold_fraction,
                        std::uint64_t seed) {
  if (k == 0) throw ArgumentError("fold count must be at least 1");
  if (!(per_fold_fraction > 0.0 && per_fold_fraction <= 1.0) ||
      static_cast<double>(k) * per_fold_fraction > 1.0 + 1e-12) {
    throw ArgumentError("need k x per-fold fraction <= 1, got " + std::to_string(k) + " x " +
                        std::to_string(per_fold_fraction));
  }
  auto by_class = indices_by_class(labels);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(k);
  Rng rng(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    const std::size_t per_fold = floor_one_quota(per_fold_fraction, members.size());
    if (per_fold * k > members.size()) {
      throw DataError(class_display_name(c) + " has " + std::to_string(members.size()) +
                      " samples, too few for " + std::to_string(k) + " disjoint folds of " +
                      std::to_string(per_fold));
    }
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t f = 0; f < k; ++f) {
      auto first = members.begin() + static_cast<std::ptrdiff_t>(f * per_fold);
      plan.folds[f].insert(plan.folds[f].end(), first, first + static_cast<std::ptrdiff_t>(per_fold));
    }
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

// ---------------------------------------------------------------------------
// Serialization

std::vector<std::uint8_t> serialize_dataset(const PreparedDataset& ds) {
  const auto& d = ds.data;
  if (d.size() > 0xFFFFFFFFu) throw ArgumentError("dataset too large for u32 sample count");
  ByteWriter w;
  w.header(ArtifactKind::dataset);
  w.u32(static_cast<std::uint32_t>(d.size()));
  w.u16(static_cast<std::uint16_t>(d.n_features));
  w.u16(static_cast<std::uint16_t>(kClassCount));
  write_label_table(w, class_name_table());
  for (const auto& column : ds.encoding_maps.columns) {
    w.u32(static_cast<std::uint32_t>(column.size()));
    for (const auto& v : column.values()) w.str(v);
  }
  for (double v : d.features) w.f32(static_cast<float>(std::clamp(v, -kFloat32Max, kFloat32Max)));
  for (auto y : d.labels) w.u8(y);
  w.u16(static_cast<std::uint16_t>(ds.provenance.sources.size()));
  for (const auto& s : ds.provenance.sources) w.str(s);
  w.u64(ds.provenance.seed);
  w.f64(ds.provenance.sample_fraction);
  return std::move(w).take();
}

PreparedDataset deserialize_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.header(ArtifactKind::dataset);
  PreparedDataset ds;
  const std::size_t n = r.u32();
  ds.data.n_features = r.u16();
  const std::size_t n_classes = r.u16();
  auto names = read_label_table(r);
  if (names.size() != n_classes) r.fail("label table size does not match class count");
  for (auto& column : ds.encoding_maps.columns) {
    const std::size_t entries = r.u32();
    for (std::size_t i = 0; i < entries; ++i) {
      const auto before = column.size();
      if (column.code_or_append(r.str()) != static_cast<std::int64_t>(before)) {
        r.fail("duplicate entry in encoding map");
      }
    }
  }
  if (r.remaining() / 4 < n * ds.data.n_features) {
    r.fail("truncated input: expected " + std::to_string(r.offset() + n * ds.data.n_features * 4 + n) +
           " bytes, have " + std::to_string(bytes.size()));
  }
  ds.data.features.resize(n * ds.data.n_features);
  for (auto& v : ds.data.features) {
    v = r.f32();
    if (!std::isfinite(v)) r.fail("non-finite value in feature matrix");
  }
  ds.data.labels.resize(n);
  for (auto& y : ds.data.labels) {
    y = r.u8();
    if (y >= n_classes) r.fail("label id out of range");
  }
  const std::size_t n_sources = r.u16();
  for (std::size_t i = 0; i < n_sources; ++i) ds.provenance.sources.push_back(r.str());
  ds.provenance.seed = r.u64();
  ds.provenance.sample_fraction = r.f64();
  r.expect_end();
  return ds;
}

void export_csv(const PreparedDataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& name : feature_names()) out << name << ',';
  out << "Label\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.data.row(i)) {
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << class_names()[ds.data.labels[i]] << '\n';
  }
}

PreparedDataset prepare(std::span<const std::filesystem::path> inputs, const PrepareOptions& options,
                        PrepareReport* report) {
  auto parsed = parse_flow_csv(inputs);
  const std::size_t n_parsed = parsed.records.size();
  auto cleaned = clean(std::move(parsed.records), options.time_format);
  auto full = encode_and_assemble(cleaned.records, std::nullopt, options.time_format);
  for (const auto& p : inputs) full.provenance.sources.push_back(p.filename().string());
  auto sampled = options.sample_fraction >= 1.0 ? full : stratified_sample(full, options.sample_fraction, options.seed);
  sampled.provenance.seed = options.seed;
  sampled.provenance.sample_fraction = options.sample_fraction;
  if (report) {
    report->parsed = n_parsed;
    report->unparseable_cells = parsed.unparseable_cells;
    report->dropped_nan = cleaned.dropped_nan;
    report->dropped_timestamp = cleaned.dropped_timestamp;
    report->clamped_inf = cleaned.clamped_pos_inf + cleaned.clamped_neg_inf;
    report->kept = sampled.size();
  }
  return sampled;
}

}  // namespace dataset
}  // namespace tinyids
