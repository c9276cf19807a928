#pragma once

#include <unistd.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tinyids/dataset.hpp"
#include "tinyids/rng.hpp"

namespace fixtures {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("tinyids_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

struct CsvRow {
  std::string label = "BENIGN";
  std::string timestamp = "4/7/2017 8:55";
  std::string src_ip = "10.0.0.1";
  std::string dst_ip = "10.0.0.2";
  std::string src_port = "40000";
  std::string dst_port = "80";
  std::string protocol = "6";
  std::array<std::string, tinyids::dataset::kNumericFeatureCount> numeric = [] {
    std::array<std::string, tinyids::dataset::kNumericFeatureCount> v;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::to_string(i + 1);
    return v;
  }();
};

// Header spelled with the leading spaces found in the original exports.
inline std::string csv_header(const std::string& skip = "") {
  std::vector<std::string> cols = {"Flow ID", " Source IP", " Source Port", " Destination IP",
                                   " Destination Port", " Protocol", " Timestamp"};
  for (auto n : tinyids::dataset::numeric_feature_names()) cols.push_back(" " + std::string(n));
  cols.push_back(" Label");
  std::string out;
  for (const auto& c : cols) {
    if (!skip.empty() && c == " " + skip) continue;
    out += (out.empty() ? "" : ",") + c;
  }
  return out;
}

inline void write_csv(const fs::path& path, const std::vector<CsvRow>& rows, const std::string& header = csv_header()) {
  std::ofstream f(path);
  f << header << "\n";
  for (const auto& r : rows) {
    f << r.src_ip << "-" << r.dst_ip << "," << r.src_ip << "," << r.src_port << "," << r.dst_ip << ","
      << r.dst_port << "," << r.protocol << "," << r.timestamp;
    for (const auto& v : r.numeric) f << "," << v;
    f << "," << r.label << "\n";
  }
}

// Gaussian blobs, one centre per class; already on a standardized scale.
inline tinyids::LabeledData blobs(std::size_t per_class, std::size_t n_classes, std::size_t n_features,
                                  std::uint64_t seed, double spread = 0.35) {
  tinyids::Rng rng(seed);
  std::vector<std::vector<double>> centre(n_classes, std::vector<double>(n_features));
  for (auto& c : centre) {
    for (auto& v : c) v = rng.uniform(-2, 2);
  }
  tinyids::LabeledData d{n_features, {}, {}};
  for (std::size_t i = 0; i < per_class * n_classes; ++i) {
    const std::size_t c = i % n_classes;
    for (std::size_t j = 0; j < n_features; ++j) d.features.push_back(centre[c][j] + spread * rng.normal());
    d.labels.push_back(static_cast<std::uint8_t>(c));
  }
  return d;
}

}  // namespace fixtures
