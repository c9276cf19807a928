#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fixtures.hpp"
#include "tinyids/bench.hpp"
#include "tinyids/error.hpp"
#include "tinyids/log.hpp"
#include "tinyids/rng.hpp"

using namespace tinyids;
using namespace tinyids::bench;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint8_t* volatile sink = nullptr;

BenchOptions small_options() {
  BenchOptions o;
  o.n_classes = 3;
  o.seed = 4;
  o.warmup = 2;
  o.arch = mlp::ArchSpec::compact();
  o.train.max_epochs = 80;
  o.train.learning_rate = 0.01;
  o.full_forest.n_trees = 30;
  return o;
}

}  // namespace

TEST_CASE("metrics on a hand-made confusion") {
  // true:  0 0 0 1 1 2
  // pred:  0 0 1 1 2 2
  const std::vector<std::uint8_t> y = {0, 0, 0, 1, 1, 2};
  const std::vector<std::uint8_t> p = {0, 0, 1, 1, 2, 2};
  const auto m = evaluate(y, p, 3);
  CHECK(m.confusion[0][0] == 2);
  CHECK(m.confusion[0][1] == 1);
  CHECK(m.confusion[1][2] == 1);
  CHECK(m.accuracy == doctest::Approx(400.0 / 6.0));
  CHECK(m.recall == doctest::Approx(m.accuracy));
  // precision per class: 1, 1/2, 1/2; supports 3, 2, 1.
  const double prec = (3 * 1.0 + 2 * 0.5 + 1 * 0.5) / 6.0;
  CHECK(m.precision == doctest::Approx(100.0 * prec));
  const double f0 = 2 * 1.0 * (2.0 / 3.0) / (1.0 + 2.0 / 3.0);
  const double f1 = 0.5;
  const double f2 = 2 * 0.5 * 1.0 / 1.5;
  CHECK(m.f1 == doctest::Approx(100.0 * (3 * f0 + 2 * f1 + 1 * f2) / 6.0));
}

TEST_CASE("weighted recall equals accuracy on random predictions") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_below(300);
    std::vector<std::uint8_t> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<std::uint8_t>(rng.uniform_below(7));
      p[i] = static_cast<std::uint8_t>(rng.uniform_below(7));
    }
    const auto m = evaluate(y, p, 7);
    // Per-class route computed here, independently of the library.
    double r = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      std::size_t support = 0, tp = 0;
      for (std::size_t i = 0; i < n; ++i) {
        support += y[i] == c;
        tp += y[i] == c && p[i] == c;
      }
      if (support) r += (static_cast<double>(support) / n) * (static_cast<double>(tp) / support);
    }
    CHECK(m.recall == doctest::Approx(100.0 * r).epsilon(1e-12));
    CHECK(m.accuracy == doctest::Approx(100.0 * r).epsilon(1e-12));
  }
}

TEST_CASE("evaluate rejects bad input") {
  const std::vector<std::uint8_t> none;
  CHECK_THROWS_AS(evaluate(none, none, 2), DataError);
  const std::vector<std::uint8_t> a = {0, 1}, b = {0};
  CHECK_THROWS_AS(evaluate(a, b, 2), ArgumentError);
  const std::vector<std::uint8_t> c = {0, 5};
  CHECK_THROWS_AS(evaluate(a, c, 2), DataError);
}

TEST_CASE("describe uses population standard deviation") {
  const double v[] = {2, 4, 4, 4, 5, 5, 7, 9};
  const auto s = describe(v);
  CHECK(s.n == 8);
  CHECK(s.min == 2);
  CHECK(s.max == 9);
  CHECK(s.mean == doctest::Approx(5.0));
  CHECK(s.std == doctest::Approx(2.0));
  CHECK(describe(std::span<const double>{}).n == 0);
}

TEST_CASE("histogram counts and overlay match a recomputation") {
  Rng rng(12);
  std::vector<double> v(5000);
  for (auto& x : v) x = 3.0 + 0.5 * rng.normal();
  const auto h = histogram(v, 40);
  REQUIRE(h.counts.size() == 40);
  REQUIRE(h.edges.size() == 41);
  CHECK(h.edges.front() == h.stats.min);
  CHECK(h.edges.back() == h.stats.max);
  std::size_t total = 0;
  for (auto c : h.counts) total += c;
  CHECK(total == v.size());

  // Oracle: linear scan over edges, last bin closed on the right.
  std::vector<std::size_t> expect(40, 0);
  for (double x : v) {
    std::size_t b = 39;
    for (std::size_t k = 0; k < 40; ++k) {
      if (x < h.edges[k + 1]) {
        b = k;
        break;
      }
    }
    ++expect[b];
  }
  std::size_t disagree = 0;
  for (std::size_t b = 0; b < 40; ++b) disagree += expect[b] > h.counts[b] ? expect[b] - h.counts[b] : h.counts[b] - expect[b];
  // Values sitting exactly on an interior edge may fall either side under rounding.
  CHECK(disagree <= 2);

  REQUIRE(h.overlay.size() == 40);
  const double width = (h.stats.max - h.stats.min) / 40.0;
  for (std::size_t b = 0; b < 40; ++b) {
    const double c = 0.5 * (h.edges[b] + h.edges[b + 1]);
    const double pdf = std::exp(-0.5 * std::pow((c - h.stats.mean) / h.stats.std, 2)) /
                       (h.stats.std * std::sqrt(2 * std::numbers::pi));
    CHECK(h.overlay[b] == doctest::Approx(5000 * width * pdf));
  }
}

TEST_CASE("histogram of a constant has one unit bin and no overlay") {
  const std::vector<double> v(17, 568.0);
  const auto h = histogram(v, 50);
  CHECK(h.counts == std::vector<std::size_t>{17});
  CHECK(h.edges == std::vector<double>{568.0, 569.0});
  CHECK(h.overlay.empty());
  CHECK(h.stats.std == 0.0);
  CHECK_THROWS_AS(histogram(std::span<const double>{}, 5), ArgumentError);
  CHECK_THROWS_AS(histogram(v, 0), ArgumentError);
}

TEST_CASE("scenario names and parsing") {
  CHECK(scenario_name(Scenario::tinyml_rf) == "TinyML_RF");
  CHECK(scenario_token(Scenario::ml_mlp) == "ml-mlp");
  CHECK(parse_scenarios("tinyml-rf,ml-mlp,ml-mlp") == std::vector<Scenario>{Scenario::ml_mlp, Scenario::tinyml_rf});
  CHECK(parse_scenarios("ml-mlp,tinyml-mlp,ml-rf,tinyml-rf").size() == 4);
  CHECK_THROWS_AS(parse_scenarios("ml-svm"), ArgumentError);
  CHECK_THROWS_AS(parse_scenarios(""), ArgumentError);
}

TEST_CASE("measure_inference skips warmup calls") {
  const auto d = fixtures::blobs(5, 2, 3, 1);
  std::size_t calls = 0;
  const auto samples = measure_inference([&](std::span<const double>) { ++calls; }, d, 7, 123);
  CHECK(samples.size() == d.size());
  CHECK(calls == d.size() + 7);
  for (const auto& s : samples) {
    CHECK(s.working_set_bytes == 123);
    CHECK(s.inference_time_us >= 0.0);
    CHECK(s.transient_bytes == 0);
  }
}

TEST_CASE("allocation hook counts requested bytes") {
  alloc_hook::start();
  auto* p = new std::uint8_t[1000];
  sink = p;
  const auto n = alloc_hook::stop();
  delete[] p;
  CHECK(n >= 1000);
  alloc_hook::start();
  CHECK(alloc_hook::stop() == 0);

  const auto d = fixtures::blobs(3, 2, 2, 1);
  const auto samples = measure_inference([](std::span<const double> x) { std::vector<double> tmp(x.begin(), x.end()); },
                                         d, 0, 0);
  for (const auto& s : samples) CHECK(s.transient_bytes >= 2 * sizeof(double));
}

TEST_CASE("scenarios run on a small corpus and the report replays") {
  log::set_level(log::Level::quiet);
  const auto corpus = fixtures::blobs(200, 3, 6, 8, 0.5);
  const auto plan = dataset::make_fold_plan(corpus.labels, 2, 0.25, 4);
  const auto opts = small_options();
  const auto report = run_scenarios(corpus, plan, kAllScenarios, opts);
  REQUIRE(report.scenarios.size() == 4);
  CHECK(report.k == 2);
  for (const auto& sr : report.scenarios) {
    REQUIRE(sr.folds.size() == 2);
    for (const auto& f : sr.folds) {
      CHECK(f.samples.size() == 30);  // 20% of 150
      CHECK_MESSAGE(f.metrics.accuracy >= 90.0, scenario_name(sr.scenario));
      CHECK(f.model_size_bytes > 0);
      CHECK(f.model_digest.size() == 16);
    }
  }
  const auto* mlp = report.find(Scenario::ml_mlp);
  const auto* qmlp = report.find(Scenario::tinyml_mlp);
  const auto* rf = report.find(Scenario::ml_rf);
  const auto* crf = report.find(Scenario::tinyml_rf);
  REQUIRE((mlp && qmlp && rf && crf));
  CHECK(qmlp->mean_model_size() < mlp->mean_model_size());
  CHECK(qmlp->mean_working_set() < mlp->mean_working_set());
  CHECK(crf->mean_model_size() < rf->mean_model_size());

  fixtures::TempDir dir("bench");
  emit_report(report, dir.path(), 20);
  for (const char* f : {"resources.csv", "metrics.csv", "stats.json", "samples.json", "hist_ml-mlp_time.csv",
                        "hist_tinyml-rf_memory.csv"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  const std::string resources = slurp(dir / "resources.csv");
  CHECK(resources.rfind("scenario,inference_time_us,working_set_bytes,transient_bytes,model_size_bytes\n", 0) == 0);
  CHECK(resources.find("TinyML_MLP,") != std::string::npos);

  const auto again = load_report(dir.path());
  fixtures::TempDir dir2("bench2");
  emit_report(again, dir2.path(), 20);
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    const auto name = entry.path().filename().string();
    CHECK_MESSAGE(slurp(entry.path()) == slurp(dir2 / name), name);
  }

  // Same seed, same models.
  const auto second = run_scenarios(corpus, plan, kAllScenarios, opts);
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t f = 0; f < 2; ++f) {
      CHECK(second.scenarios[s].folds[f].model_digest == report.scenarios[s].folds[f].model_digest);
      CHECK(second.scenarios[s].folds[f].metrics.accuracy == report.scenarios[s].folds[f].metrics.accuracy);
    }
  }
}

TEST_CASE("run_scenarios checks its plan") {
  const auto corpus = fixtures::blobs(20, 3, 4, 1);
  dataset::FoldPlan empty;
  CHECK_THROWS_AS(run_scenarios(corpus, empty, kAllScenarios, small_options()), ArgumentError);
  dataset::FoldPlan bad;
  bad.k = 1;
  bad.folds = {{0, 1, 999}};
  try {
    run_scenarios(corpus, bad, kAllScenarios, small_options());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);
    CHECK(std::string(e.what()).find("fold 0") != std::string::npos);
  }
}

TEST_CASE("load_report reports missing or malformed files") {
  fixtures::TempDir dir("bench_bad");
  CHECK_THROWS_AS(load_report(dir.path()), DataError);
  std::ofstream(dir / "samples.json") << "{\"seed\": 1}";
  CHECK_THROWS_AS(load_report(dir.path()), DataError);
}
