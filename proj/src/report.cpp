// Bench report files. Numbers are written in shortest round-trip form so that
// re-emitting from samples.json reproduces every file byte for byte.
#include <charconv>
#include <fstream>

#include <json.hpp>

#include "tinyids/bench.hpp"
#include "tinyids/error.hpp"

namespace tinyids::bench {

namespace {

using nlohmann::ordered_json;

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<double> pooled(const ScenarioReport& sr, double (*field)(const ResourceSample&)) {
  std::vector<double> v;
  for (const auto& f : sr.folds) {
    for (const auto& s : f.samples) v.push_back(field(s));
  }
  return v;
}

double time_of(const ResourceSample& s) { return s.inference_time_us; }
double memory_of(const ResourceSample& s) { return static_cast<double>(s.working_set_bytes); }
double transient_of(const ResourceSample& s) { return static_cast<double>(s.transient_bytes); }

ordered_json stats_json(const Stats& s) {
  return ordered_json{{"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"std", s.std}, {"n", s.n}};
}

std::string histogram_csv(const HistogramData& h) {
  std::string out = "bin_left,bin_right,count,overlay\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out += num(h.edges[b]) + "," + num(h.edges[b + 1]) + "," + std::to_string(h.counts[b]) + ",";
    if (!h.overlay.empty()) out += num(h.overlay[b]);
    out += "\n";
  }
  return out;
}

Scenario scenario_from_token(const std::string& token) {
  for (auto s : kAllScenarios) {
    if (scenario_token(s) == token) return s;
  }
  throw DataError("unknown scenario '" + token + "' in samples.json");
}

}  // namespace

void emit_report(const BenchReport& report, const std::filesystem::path& out_dir, std::size_t n_bins) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  std::string resources =
      "scenario,inference_time_us,working_set_bytes,transient_bytes,model_size_bytes\n";
  std::string metrics = "scenario,accuracy,precision,recall,f1\n";
  ordered_json stats{{"seed", report.seed}, {"folds", report.k}, {"scenarios", ordered_json::array()}};
  ordered_json raw{{"seed", report.seed}, {"folds", report.k}, {"scenarios", ordered_json::array()}};

  for (const auto& sr : report.scenarios) {
    const std::string name(scenario_name(sr.scenario));
    const std::string token(scenario_token(sr.scenario));
    resources += name + "," + num(sr.mean_time_us()) + "," + num(sr.mean_working_set()) + "," +
                 num(sr.mean_transient()) + "," + num(sr.mean_model_size()) + "\n";
    metrics += name + "," + num(sr.mean_accuracy()) + "," + num(sr.mean_precision()) + "," +
               num(sr.mean_recall()) + "," + num(sr.mean_f1()) + "\n";

    const auto times = pooled(sr, time_of);
    const auto memory = pooled(sr, memory_of);
    const auto transient = pooled(sr, transient_of);
    ordered_json entry{{"name", name}, {"token", token}};
    entry["inference_time_us_mean"] = sr.mean_time_us();
    entry["working_set_bytes_mean"] = sr.mean_working_set();
    entry["transient_bytes_mean"] = sr.mean_transient();
    entry["model_size_bytes_mean"] = sr.mean_model_size();
    entry["accuracy"] = sr.mean_accuracy();
    entry["precision"] = sr.mean_precision();
    entry["recall"] = sr.mean_recall();
    entry["f1"] = sr.mean_f1();
    if (!times.empty()) {
      const auto ht = histogram(times, n_bins);
      const auto hm = histogram(memory, n_bins);
      entry["time_us"] = stats_json(ht.stats);
      entry["working_set_bytes"] = stats_json(hm.stats);
      entry["transient_bytes"] = stats_json(describe(transient));
      write_text(out_dir / ("hist_" + token + "_time.csv"), histogram_csv(ht));
      write_text(out_dir / ("hist_" + token + "_memory.csv"), histogram_csv(hm));
    }
    ordered_json per_fold = ordered_json::array();
    ordered_json raw_folds = ordered_json::array();
    for (const auto& f : sr.folds) {
      per_fold.push_back({{"accuracy", f.metrics.accuracy},
                          {"precision", f.metrics.precision},
                          {"recall", f.metrics.recall},
                          {"f1", f.metrics.f1},
                          {"model_size_bytes", f.model_size_bytes},
                          {"model_digest", f.model_digest}});
      ordered_json rf{{"accuracy", f.metrics.accuracy}, {"precision", f.metrics.precision},
                      {"recall", f.metrics.recall},     {"f1", f.metrics.f1},
                      {"confusion", f.metrics.confusion}, {"model_size_bytes", f.model_size_bytes},
                      {"model_digest", f.model_digest}};
      std::vector<double> t;
      std::vector<std::size_t> ws, tr;
      for (const auto& s : f.samples) {
        t.push_back(s.inference_time_us);
        ws.push_back(s.working_set_bytes);
        tr.push_back(s.transient_bytes);
      }
      rf["time_us"] = t;
      rf["working_set_bytes"] = ws;
      rf["transient_bytes"] = tr;
      raw_folds.push_back(std::move(rf));
    }
    entry["per_fold"] = std::move(per_fold);
    stats["scenarios"].push_back(std::move(entry));
    raw["scenarios"].push_back({{"token", token}, {"folds", std::move(raw_folds)}});
  }
  write_text(out_dir / "resources.csv", resources);
  write_text(out_dir / "metrics.csv", metrics);
  write_text(out_dir / "stats.json", stats.dump(2) + "\n");
  write_text(out_dir / "samples.json", raw.dump() + "\n");
}

BenchReport load_report(const std::filesystem::path& bench_dir) {
  const auto path = bench_dir / "samples.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  BenchReport report;
  try {
    const auto raw = nlohmann::json::parse(in);
    report.seed = raw.at("seed").get<std::uint64_t>();
    report.k = raw.at("folds").get<std::size_t>();
    for (const auto& s : raw.at("scenarios")) {
      ScenarioReport sr;
      sr.scenario = scenario_from_token(s.at("token").get<std::string>());
      for (const auto& f : s.at("folds")) {
        FoldResult fr;
        fr.metrics.accuracy = f.at("accuracy").get<double>();
        fr.metrics.precision = f.at("precision").get<double>();
        fr.metrics.recall = f.at("recall").get<double>();
        fr.metrics.f1 = f.at("f1").get<double>();
        fr.metrics.confusion = f.at("confusion").get<std::vector<std::vector<std::size_t>>>();
        fr.model_size_bytes = f.at("model_size_bytes").get<std::size_t>();
        fr.model_digest = f.at("model_digest").get<std::string>();
        const auto t = f.at("time_us").get<std::vector<double>>();
        const auto ws = f.at("working_set_bytes").get<std::vector<std::size_t>>();
        const auto tr = f.at("transient_bytes").get<std::vector<std::size_t>>();
        if (t.size() != ws.size() || t.size() != tr.size()) throw DataError("sample arrays differ in length");
        for (std::size_t i = 0; i < t.size(); ++i) fr.samples.push_back({t[i], ws[i], tr[i]});
        sr.folds.push_back(std::move(fr));
      }
      report.scenarios.push_back(std::move(sr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return report;
}

}  // namespace tinyids::bench
