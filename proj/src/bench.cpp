#include "tinyids/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numbers>

#include "tinyids/error.hpp"
#include "tinyids/log.hpp"
#include "tinyids/quant.hpp"

namespace tinyids::bench {

namespace {

// Timing sections never overlap, even if callers train folds concurrently.
std::mutex g_measurement_token;

template <typename F>
double fold_mean(const std::vector<FoldResult>& folds, F&& f) {
  if (folds.empty()) return 0.0;
  double s = 0.0;
  for (const auto& fr : folds) s += f(fr);
  return s / static_cast<double>(folds.size());
}

template <typename F>
double sample_mean(const std::vector<ResourceSample>& samples, F&& f) {
  if (samples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : samples) s += f(r);
  return s / static_cast<double>(samples.size());
}

}  // namespace

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::ml_mlp: return "ML_MLP";
    case Scenario::tinyml_mlp: return "TinyML_MLP";
    case Scenario::ml_rf: return "ML_RF";
    case Scenario::tinyml_rf: return "TinyML_RF";
  }
  return "?";
}

std::string_view scenario_token(Scenario s) {
  switch (s) {
    case Scenario::ml_mlp: return "ml-mlp";
    case Scenario::tinyml_mlp: return "tinyml-mlp";
    case Scenario::ml_rf: return "ml-rf";
    case Scenario::tinyml_rf: return "tinyml-rf";
  }
  return "?";
}

std::vector<Scenario> parse_scenarios(std::string_view text) {
  std::array<bool, kAllScenarios.size()> wanted{};
  while (!text.empty()) {
    const auto comma = text.find(',');
    auto token = text.substr(0, comma);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    bool found = false;
    for (auto s : kAllScenarios) {
      if (token == scenario_token(s) || token == scenario_name(s)) {
        wanted[static_cast<std::size_t>(s)] = true;
        found = true;
      }
    }
    if (!found) {
      throw ArgumentError("unknown scenario '" + std::string(token) +
                          "' (expected ml-mlp, tinyml-mlp, ml-rf, tinyml-rf)");
    }
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
  }
  std::vector<Scenario> out;
  for (auto s : kAllScenarios) {
    if (wanted[static_cast<std::size_t>(s)]) out.push_back(s);
  }
  if (out.empty()) throw ArgumentError("no scenarios selected");
  return out;
}

Metrics evaluate(std::span<const std::uint8_t> y_true, std::span<const std::uint8_t> y_pred, std::size_t n_classes) {
  if (y_true.empty()) throw DataError("cannot evaluate on an empty test set");
  if (y_true.size() != y_pred.size()) throw ArgumentError("label and prediction counts differ");
  Metrics m;
  m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] >= n_classes || y_pred[i] >= n_classes) throw DataError("class id out of range in evaluation");
    ++m.confusion[y_true[i]][y_pred[i]];
  }
  const double n = static_cast<double>(y_true.size());
  std::size_t correct = 0;
  double precision = 0.0, recall_by_class = 0.0, f1 = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t support = 0, predicted = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      support += m.confusion[c][k];
      predicted += m.confusion[k][c];
    }
    const std::size_t tp = m.confusion[c][c];
    correct += tp;
    if (support == 0) continue;
    const double p = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double r = static_cast<double>(tp) / static_cast<double>(support);
    const double w = static_cast<double>(support) / n;
    precision += w * p;
    recall_by_class += w * r;
    f1 += w * (p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0);
  }
  m.accuracy = 100.0 * static_cast<double>(correct) / n;
  // Support-weighted recall is Σ tp_c / n, i.e. accuracy. Report that value
  // and check the per-class route agrees.
  m.recall = m.accuracy;
  if (std::abs(100.0 * recall_by_class - m.accuracy) > 1e-9) {
    throw std::logic_error("weighted recall diverged from accuracy");
  }
  m.precision = 100.0 * precision;
  m.f1 = 100.0 * f1;
  return m;
}

Metrics evaluate(const std::function<std::size_t(std::span<const double>)>& predict_fn, const LabeledData& test_set,
                 std::size_t n_classes) {
  std::vector<std::uint8_t> pred(test_set.size());
  for (std::size_t i = 0; i < test_set.size(); ++i) pred[i] = static_cast<std::uint8_t>(predict_fn(test_set.row(i)));
  return evaluate(test_set.labels, pred, n_classes);
}

std::vector<ResourceSample> measure_inference(const std::function<void(std::span<const double>)>& fn,
                                              const LabeledData& samples, std::size_t warmup,
                                              std::size_t working_set_bytes) {
  using clock = std::chrono::steady_clock;
  std::lock_guard lock(g_measurement_token);
  std::vector<ResourceSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < warmup && !samples.empty(); ++i) fn(samples.row(i % samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = samples.row(i);
    alloc_hook::start();
    const auto t0 = clock::now();
    fn(row);
    const auto t1 = clock::now();
    const std::size_t transient = alloc_hook::stop();
    out.push_back({std::chrono::duration<double, std::micro>(t1 - t0).count(), working_set_bytes, transient});
  }
  return out;
}

std::vector<ResourceSample> measure_inference(const AnyModel& model, const LabeledData& samples, std::size_t warmup,
                                              std::vector<std::uint8_t>* predictions) {
  if (predictions) predictions->clear();
  Inference last;
  std::size_t calls = 0;
  auto samples_out = measure_inference(
      [&](std::span<const double> x) {
        last = infer(model, x);
        if (predictions && calls++ >= warmup) predictions->push_back(last.predicted_class);
      },
      samples, warmup, working_set_bytes(model));
  return samples_out;
}

Stats describe(std::span<const double> values) {
  Stats s;
  s.n = values.size();
  if (values.empty()) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(s.n));
  return s;
}

HistogramData histogram(std::span<const double> values, std::size_t n_bins) {
  if (values.empty()) throw ArgumentError("histogram needs at least one value");
  if (n_bins == 0) throw ArgumentError("histogram needs at least one bin");
  HistogramData h;
  h.stats = describe(values);
  double width;
  if (h.stats.max == h.stats.min) {
    n_bins = 1;
    width = 1.0;
  } else {
    width = (h.stats.max - h.stats.min) / static_cast<double>(n_bins);
  }
  h.edges.resize(n_bins + 1);
  for (std::size_t b = 0; b <= n_bins; ++b) h.edges[b] = h.stats.min + width * static_cast<double>(b);
  h.edges.back() = n_bins == 1 && h.stats.max == h.stats.min ? h.stats.min + 1.0 : h.stats.max;
  h.counts.assign(n_bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - h.stats.min) / width);
    if (b >= n_bins) b = n_bins - 1;
    ++h.counts[b];
  }
  if (h.stats.std > 0.0) {
    const double n = static_cast<double>(h.stats.n);
    h.overlay.resize(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double center = 0.5 * (h.edges[b] + h.edges[b + 1]);
      const double z = (center - h.stats.mean) / h.stats.std;
      const double pdf = std::exp(-0.5 * z * z) / (h.stats.std * std::sqrt(2.0 * std::numbers::pi));
      h.overlay[b] = n * width * pdf;
    }
  }
  return h;
}

double ScenarioReport::mean_accuracy() const {
  return fold_mean(folds, [](const FoldResult& f) { return f.metrics.accuracy; });
}
double ScenarioReport::mean_precision() const {
  return fold_mean(folds, [](const FoldResult& f) { return f.metrics.precision; });
}
double ScenarioReport::mean_recall() const {
  return fold_mean(folds, [](const FoldResult& f) { return f.metrics.recall; });
}
double ScenarioReport::mean_f1() const {
  return fold_mean(folds, [](const FoldResult& f) { return f.metrics.f1; });
}
double ScenarioReport::mean_time_us() const {
  return fold_mean(folds, [](const FoldResult& f) {
    return sample_mean(f.samples, [](const ResourceSample& r) { return r.inference_time_us; });
  });
}
double ScenarioReport::mean_working_set() const {
  return fold_mean(folds, [](const FoldResult& f) {
    return sample_mean(f.samples, [](const ResourceSample& r) { return static_cast<double>(r.working_set_bytes); });
  });
}
double ScenarioReport::mean_transient() const {
  return fold_mean(folds, [](const FoldResult& f) {
    return sample_mean(f.samples, [](const ResourceSample& r) { return static_cast<double>(r.transient_bytes); });
  });
}
double ScenarioReport::mean_model_size() const {
  return fold_mean(folds, [](const FoldResult& f) { return static_cast<double>(f.model_size_bytes); });
}

const ScenarioReport* BenchReport::find(Scenario s) const {
  for (const auto& r : scenarios) {
    if (r.scenario == s) return &r;
  }
  return nullptr;
}

std::map<Scenario, AnyModel> train_scenarios(const LabeledData& train_raw, std::span<const Scenario> scenarios,
                                             const BenchOptions& options) {
  auto wants = [&](Scenario s) { return std::find(scenarios.begin(), scenarios.end(), s) != scenarios.end(); };
  const ScalerParams scaler = fit_scaler(train_raw).to_float32();
  const LabeledData train = apply_scaler(scaler, train_raw);
  const auto labels = dataset::class_name_table();
  const bool labels_fit = labels.size() == options.n_classes;

  std::map<Scenario, AnyModel> models;
  if (wants(Scenario::ml_mlp) || wants(Scenario::tinyml_mlp)) {
    log::info("training " + std::string(scenario_name(Scenario::ml_mlp)));
    auto model = mlp::build_mlp(options.arch, train.n_features, options.n_classes, options.seed);
    mlp::TrainConfig cfg = options.train;
    cfg.seed = options.seed;
    auto [trained, history] = mlp::train(std::move(model), train, cfg);
    log::info("  stopped after " + std::to_string(history.epochs_run) + " epochs, best epoch " +
              std::to_string(history.best_epoch));
    trained.scaler = scaler;
    if (labels_fit) trained.label_names = labels;
    if (wants(Scenario::tinyml_mlp)) models.emplace(Scenario::tinyml_mlp, quant::convert(trained));
    if (wants(Scenario::ml_mlp)) models.emplace(Scenario::ml_mlp, std::move(trained));
  }
  if (wants(Scenario::ml_rf) || wants(Scenario::tinyml_rf)) {
    log::info("training " + std::string(scenario_name(Scenario::ml_rf)));
    forest::ForestConfig fc = options.full_forest;
    fc.seed = options.seed;
    auto full = forest::train_forest(train, options.n_classes, fc);
    full.scaler = scaler;
    if (labels_fit) full.label_names = labels;
    if (wants(Scenario::tinyml_rf)) {
      const auto selected = forest::select_features_cumulative(full.importances, options.importance_threshold);
      log::info("  compact forest keeps " + std::to_string(selected.size()) + " of " +
                std::to_string(train.n_features) + " features");
      forest::CompactConfig cc = options.compact;
      cc.seed = options.seed;
      auto compact = forest::compact_forest(train, options.n_classes, selected, cc);
      compact.scaler = scaler;
      if (labels_fit) compact.label_names = labels;
      models.emplace(Scenario::tinyml_rf, std::move(compact));
    }
    if (wants(Scenario::ml_rf)) models.emplace(Scenario::ml_rf, std::move(full));
  }
  return models;
}

BenchReport run_scenarios(const LabeledData& corpus, const dataset::FoldPlan& plan,
                          std::span<const Scenario> scenarios, const BenchOptions& options) {
  if (plan.folds.empty()) throw ArgumentError("fold plan is empty");
  if (scenarios.empty()) throw ArgumentError("no scenarios selected");
  BenchReport report;
  report.seed = options.seed;
  report.k = plan.folds.size();
  for (auto s : scenarios) report.scenarios.push_back({s, {}});

  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    try {
      for (auto i : plan.folds[f]) {
        if (i >= corpus.size()) throw ArgumentError("fold index out of range");
      }
      const LabeledData fold = corpus.subset(plan.folds[f]);
      const auto split = dataset::stratified_split_indices(fold.labels, options.test_fraction, options.seed + f);
      for (const auto& w : split.warnings) log::warn("fold " + std::to_string(f) + ": " + w);
      const LabeledData train = fold.subset(split.train);
      const LabeledData test = fold.subset(split.test);
      if (test.empty()) throw DataError("test split is empty");

      const auto models = train_scenarios(train, scenarios, options);
      for (auto& sr : report.scenarios) {
        const AnyModel& model = models.at(sr.scenario);
        const auto bytes_before = serialize_model(model);
        FoldResult fr;
        std::vector<std::uint8_t> pred;
        fr.samples = measure_inference(model, test, options.warmup, &pred);
        fr.metrics = evaluate(test.labels, pred, options.n_classes);
        fr.model_size_bytes = bytes_before.size();
        fr.model_digest = hex64(fnv1a64(bytes_before));
        if (serialize_model(model) != bytes_before) throw std::logic_error("measurement mutated a model");
        log::info("fold " + std::to_string(f) + " " + std::string(scenario_name(sr.scenario)) +
                  ": accuracy " + std::to_string(fr.metrics.accuracy));
        sr.folds.push_back(std::move(fr));
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
  }
  return report;
}

}  // namespace tinyids::bench
