#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tinyids/dataset.hpp"
#include "tinyids/error.hpp"
#include "tinyids/rng.hpp"

namespace tinyids::dataset {

namespace {

// Numeric feature slots (see numeric_feature_names()).
enum Feature : std::size_t {
  kDuration = 0, kFwdPackets, kBwdPackets, kBytesPerSec, kPacketsPerSec, kIatMean, kIatStd,
  kIatMax, kIatMin, kFwdPsh, kBwdPsh, kFwdHeaderLen, kBwdHeaderLen, kFin, kSyn, kRst, kPsh,
  kAck, kUrg, kCwe, kEce, kInitWinFwd, kInitWinBwd,
};

constexpr std::array<std::size_t, 10> kFlagFeatures = {kFwdPsh, kBwdPsh, kFin, kSyn, kRst,
                                                       kPsh,    kAck,    kUrg, kCwe, kEce};
constexpr std::array<std::size_t, 6> kIntegerFeatures = {kFwdPackets,   kBwdPackets, kFwdHeaderLen,
                                                         kBwdHeaderLen, kInitWinFwd, kInitWinBwd};

bool is_flag(std::size_t f) {
  return std::find(kFlagFeatures.begin(), kFlagFeatures.end(), f) != kFlagFeatures.end();
}
bool is_integer(std::size_t f) {
  return std::find(kIntegerFeatures.begin(), kIntegerFeatures.end(), f) != kIntegerFeatures.end();
}

struct Endpoints {
  const char* attacker;  // nullptr: drawn from the internal benign pool
  const char* victim;    // nullptr: drawn from the external pool
  int hour_lo;
  int hour_hi;
};

// Per raw label, in raw_label_names() order. Addresses echo the CICIDS2017 testbed.
constexpr std::array<Endpoints, kRawLabelCount> kEndpoints = {{
    {nullptr, nullptr, 8, 17},                         // BENIGN
    {"172.16.0.1", "192.168.10.50", 10, 10},           // DoS Hulk
    {"172.16.0.1", "192.168.10.50", 11, 11},           // DoS GoldenEye
    {"172.16.0.1", "192.168.10.50", 9, 10},            // DoS slowloris
    {"172.16.0.1", "192.168.10.50", 10, 10},           // DoS Slowhttptest
    {"172.16.0.1", "192.168.10.50", 13, 15},           // PortScan
    {"172.16.0.1", "192.168.10.50", 15, 16},           // DDoS
    {"172.16.0.1", "192.168.10.50", 9, 10},            // FTP-Patator
    {"172.16.0.1", "192.168.10.50", 14, 15},           // SSH-Patator
    {"172.16.0.1", "192.168.10.50", 9, 10},            // Web Attack-Brute Force
    {"172.16.0.1", "192.168.10.50", 10, 10},           // Web Attack-XSS
    {"172.16.0.1", "192.168.10.50", 10, 10},           // Web Attack-Sql Injection
    {"192.168.10.15", "205.174.165.73", 9, 13},        // Bot
    {"192.168.10.8", "205.174.165.73", 14, 15},        // Infiltration
    {"172.16.0.1", "192.168.10.51", 15, 15},           // Heartbleed
}};

std::string fmt_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string internal_host(Rng& rng) { return "192.168.10." + std::to_string(1 + rng.uniform_below(50)); }

std::string external_host(Rng& rng) {
  return "104.16." + std::to_string(rng.uniform_below(256)) + "." + std::to_string(rng.uniform_below(256));
}

}  // namespace

SynthSpec default_synth_spec() {
  SynthSpec spec;
  spec.base = {1e6, 10, 10, 1e4, 100, 1e5, 5e4, 2e5, 100, 0, 0, 200, 200,
               0,   0,  0,  0,   0,   0,   0,   0,   8192, 8192};

  // Two dominant axes: merged class m sits at (1.5m, 1.5·(3m mod 7)) on
  // (Flow Duration, Flow IAT Mean), which keeps every pair of classes apart
  // along at least one of them. Weaker signals ride on other columns.
  constexpr std::array<std::size_t, kRawLabelCount> merged = {0, 1, 1, 1, 1, 2, 3, 4, 4, 5, 5, 5, 6, 6, 6};
  constexpr std::array<int, kRawLabelCount> sub_index = {0, 0, 1, 2, 3, 0, 0, 0, 1, 0, 1, 2, 0, 1, 2};
  constexpr std::array<int, kRawLabelCount> weekday = {-1, 2, 2, 2, 2, 4, 4, 1, 1, 3, 3, 3, 4, 3, 2};
  constexpr std::array<std::uint16_t, kRawLabelCount> port = {443, 80, 80, 80, 80, 0, 80, 21, 22,
                                                              80,  80, 80, 8080, 444, 444};
  constexpr std::array<std::array<double, 4>, kClassCount> secondary = {{
      {0.0, 0.0, 0.0, 1.0},
      {2.0, 1.0, 0.0, 0.0},
      {0.0, 2.0, 1.0, 0.0},
      {1.0, 2.0, 2.0, 1.0},
      {2.0, 0.0, 2.0, 2.0},
      {1.0, 1.0, 1.0, 0.0},
      {0.0, 1.0, 2.0, 2.0},
  }};
  constexpr std::array<std::size_t, 4> secondary_features = {kBytesPerSec, kFwdHeaderLen, kInitWinFwd, kIatMin};

  for (std::size_t r = 0; r < kRawLabelCount; ++r) {
    const std::size_t m = merged[r];
    auto& l = spec.labels[r];
    l.raw_label = std::string(raw_label_names()[r]);
    l.level.fill(0.0);
    l.level[kDuration] = 1.5 * static_cast<double>(m);
    l.level[kIatMean] = 1.5 * static_cast<double>((3 * m) % 7);
    for (std::size_t s = 0; s < secondary_features.size(); ++s) l.level[secondary_features[s]] = secondary[m][s];
    // Sub-labels of a merged class differ in packet counts only.
    l.level[kFwdPackets] = 0.8 * sub_index[r];
    l.level[kBwdPackets] = 0.4 * sub_index[r];
    l.level[kIatMax] = 0.5 * l.level[kIatMean];
    l.level[kIatStd] = 0.3 * l.level[kDuration];
    // Flags: level is a probability.
    l.level[kSyn] = m == 2 ? 0.9 : 0.1;
    l.level[kAck] = m == 0 ? 0.7 : 0.3;
    l.level[kPsh] = m == 5 ? 0.6 : 0.2;
    l.level[kFin] = 0.3;
    l.level[kRst] = m == 3 ? 0.4 : 0.05;
    l.level[kFwdPsh] = m == 4 ? 0.5 : 0.1;
    l.spread = 0.9;
    l.weekday = weekday[r];
    l.main_port = port[r];
    l.main_port_share = port[r] == 0 ? 0.0 : 0.8;
  }
  return spec;
}

void synth_generate(const SynthSpec& spec, std::span<const std::size_t> per_label_counts, std::uint64_t seed,
                    const std::filesystem::path& out) {
  if (per_label_counts.size() != kRawLabelCount) {
    throw ArgumentError("need one count per raw label (" + std::to_string(kRawLabelCount) + ")");
  }
  Rng rng(seed);
  std::vector<std::string> rows;
  rows.reserve(std::accumulate(per_label_counts.begin(), per_label_counts.end(), std::size_t{0}));

  for (std::size_t r = 0; r < kRawLabelCount; ++r) {
    const auto& l = spec.labels[r];
    const auto& ep = kEndpoints[r];
    for (std::size_t n = 0; n < per_label_counts[r]; ++n) {
      const std::string src = ep.attacker ? ep.attacker : internal_host(rng);
      const std::string dst = ep.victim ? ep.victim : external_host(rng);
      const auto sport = static_cast<std::uint16_t>(1024 + rng.uniform_below(64512));
      std::uint16_t dport;
      if (l.main_port_share > 0.0 && rng.bernoulli(l.main_port_share)) {
        dport = l.main_port;
      } else if (l.main_port == 0) {
        dport = static_cast<std::uint16_t>(1 + rng.uniform_below(1024));
      } else {
        dport = static_cast<std::uint16_t>(1 + rng.uniform_below(65535));
      }
      const int proto = (l.weekday < 0 && rng.bernoulli(0.3)) ? 17 : 6;
      const int weekday = l.weekday >= 0 ? l.weekday : static_cast<int>(rng.uniform_below(5));
      const int hour_lo = ep.hour_lo, hour_hi = ep.hour_hi;
      const int hour = hour_lo + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(hour_hi - hour_lo + 1)));
      const int minute = static_cast<int>(rng.uniform_below(60));

      std::string row;
      row += dst + "-" + src + "-" + std::to_string(dport) + "-" + std::to_string(sport) + "-" +
             std::to_string(proto);
      row += "," + src + "," + std::to_string(sport) + "," + dst + "," + std::to_string(dport) + "," +
             std::to_string(proto);
      row += "," + std::to_string(3 + weekday) + "/7/2017 " + std::to_string(hour) + ":" +
             (minute < 10 ? "0" : "") + std::to_string(minute);
      for (std::size_t f = 0; f < kNumericFeatureCount; ++f) {
        double v;
        if (is_flag(f)) {
          v = rng.bernoulli(l.level[f]) ? 1.0 : 0.0;
        } else {
          v = spec.base[f] * std::max(0.0, 2.0 + l.level[f] + l.spread * rng.normal());
          v = is_integer(f) ? std::round(v) : std::round(v * 1000.0) / 1000.0;
        }
        row += "," + fmt_real(v);
      }
      row += "," + fmt_real(std::round(rng.uniform(0.0, 1500.0)));  // ignored column
      row += "," + l.raw_label;
      rows.push_back(std::move(row));
    }
  }
  rng.shuffle(std::span<std::string>(rows));

  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("cannot write " + out.string());
  // Leading spaces mirror the original CICIDS2017 headers.
  file << "Flow ID, Source IP, Source Port, Destination IP, Destination Port, Protocol, Timestamp";
  for (const auto& name : numeric_feature_names()) file << ", " << name;
  file << ", Fwd Packet Length Max, Label\n";
  for (const auto& row : rows) file << row << '\n';
  if (!file) throw DataError("write failed for " + out.string());
}

void synth_generate(const SynthSpec& spec, std::size_t n_per_label, std::uint64_t seed,
                    const std::filesystem::path& out) {
  std::array<std::size_t, kRawLabelCount> counts;
  counts.fill(n_per_label);
  synth_generate(spec, counts, seed, out);
}

}  // namespace tinyids::dataset
