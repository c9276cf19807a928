#include "tinyids/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "tinyids/bench.hpp"
#include "tinyids/dataset.hpp"
#include "tinyids/error.hpp"
#include "tinyids/forest.hpp"
#include "tinyids/log.hpp"
#include "tinyids/mlp.hpp"
#include "tinyids/model.hpp"
#include "tinyids/pipeline.hpp"
#include "tinyids/quant.hpp"
#include "tinyids/wire.hpp"

namespace tinyids::cli {

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

dataset::PreparedDataset load_dataset(const std::string& path) {
  return dataset::deserialize_dataset(read_file_bytes(path));
}

// Train/test views of a prepared dataset; test_frac 0 trains on everything.
std::pair<LabeledData, LabeledData> split_for_training(const LabeledData& data, double test_frac, std::uint64_t seed) {
  if (test_frac == 0.0) return {data, LabeledData{data.n_features, {}, {}}};
  const auto split = dataset::stratified_split_indices(data.labels, test_frac, seed);
  for (const auto& w : split.warnings) log::warn(w);
  return {data.subset(split.train), data.subset(split.test)};
}

void report_accuracy(const AnyModel& model, const LabeledData& test) {
  if (test.empty()) return;
  std::vector<std::uint8_t> pred(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) pred[i] = infer(model, test.row(i)).predicted_class;
  const auto m = bench::evaluate(test.labels, pred, std::max<std::size_t>(class_count(model), dataset::kClassCount));
  log::info("held-out accuracy " + std::to_string(m.accuracy) + "% on " + std::to_string(test.size()) + " samples");
}

std::optional<std::size_t> parse_depth(const std::string& text) {
  if (text == "none") return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoul(text, &used);
    if (used != text.size() || v == 0) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("--max-depth expects a positive integer or 'none', got '" + text + "'");
  }
}

void check_fraction(double v, const std::string& flag, bool allow_zero, bool allow_one) {
  const bool ok = (allow_zero ? v >= 0.0 : v > 0.0) && (allow_one ? v <= 1.0 : v < 1.0);
  if (!ok) throw ArgumentError(flag + " out of range: " + std::to_string(v));
}

std::uint64_t default_seed() {
  const char* env = std::getenv("TINYIDS_SEED");
  if (!env || !*env) return 0;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string_view(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError(std::string("TINYIDS_SEED is not an unsigned integer: '") + env + "'");
  }
}

bench::Scenario scenario_of(const AnyModel& model) {
  switch (model.index()) {
    case 0: return bench::Scenario::ml_mlp;
    case 1: return bench::Scenario::tinyml_mlp;
    default:
      return std::get<forest::Forest>(model).feature_subset ? bench::Scenario::tinyml_rf : bench::Scenario::ml_rf;
  }
}

std::string unknown_flag_hint(const CLI::App& app, const std::vector<std::string>& args) {
  const CLI::App* sub = nullptr;
  for (std::size_t i = 1; i < args.size() && !sub; ++i) {
    if (args[i].rfind("-", 0) == 0) continue;
    try {
      sub = app.get_subcommand(args[i]);
    } catch (const CLI::OptionNotFound&) {
      return {};
    }
  }
  std::vector<std::string> known;
  for (const CLI::App* scope : {&app, sub}) {
    if (!scope) continue;
    for (const auto* opt : scope->get_options()) {
      for (const auto& l : opt->get_lnames()) known.push_back("--" + l);
    }
  }
  std::string hint;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i].rfind("--", 0) != 0) continue;
    const std::string flag = args[i].substr(0, args[i].find('='));
    if (std::find(known.begin(), known.end(), flag) != known.end()) continue;
    const auto best = closest_match(flag, known);
    hint += "\nunknown flag " + flag + (best.empty() ? std::string() : "; did you mean " + best + "?");
  }
  return hint;
}

}  // namespace

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string closest_match(std::string_view word, std::span<const std::string> candidates) {
  std::string best;
  std::size_t best_d = 3;
  for (const auto& c : candidates) {
    const auto d = edit_distance(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"tinyids: flow-based intrusion detection with compact models"};
  app.name("tinyids");
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");
  app.add_flag("-q,--quiet", quiet, "Errors only");
  app.set_version_flag("--version", "tinyids 1.0.0");

  std::function<int()> action;
  std::uint64_t seed = 0;
  bool seed_resolved = false;
  auto resolve_seed = [&](CLI::App* sub) {
    if (!seed_resolved && sub->count("--seed") == 0) seed = default_seed();
    seed_resolved = true;
  };

  // prepare
  std::vector<std::string> inputs;
  std::string out, data_path, time_format(dataset::kDefaultTimeFormat), export_csv;
  double sample_frac = 0.05;
  auto* prepare = app.add_subcommand("prepare", "Parse, clean, encode and sample flow CSVs");
  prepare->add_option("--input", inputs, "Flow CSV files")->required()->expected(1, -1);
  prepare->add_option("--out", out, "Prepared dataset file")->required();
  prepare->add_option("--sample-frac", sample_frac, "Stratified sample fraction")->capture_default_str();
  prepare->add_option("--seed", seed, "Random seed");
  prepare->add_option("--time-format", time_format, "Timestamp format")->capture_default_str();
  prepare->add_option("--export-csv", export_csv, "Also write the matrix as CSV");
  prepare->callback([&] {
    action = [&] {
      resolve_seed(prepare);
      check_fraction(sample_frac, "--sample-frac", false, true);
      std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
      dataset::PrepareOptions opts{sample_frac, seed, time_format};
      dataset::PrepareReport rep;
      const auto d = dataset::prepare(paths, opts, &rep);
      log::info("parsed " + std::to_string(rep.parsed) + " rows, dropped " + std::to_string(rep.dropped_nan) +
                " with NaN and " + std::to_string(rep.dropped_timestamp) + " with bad timestamps, clamped " +
                std::to_string(rep.clamped_inf) + " infinities, kept " + std::to_string(rep.kept));
      write_file_bytes(out, dataset::serialize_dataset(d));
      if (!export_csv.empty()) dataset::export_csv(d, export_csv);
      return 0;
    };
  });

  // synth
  std::size_t per_class = 1400;
  std::vector<std::size_t> counts;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic flow CSV");
  synth->add_option("--out", out, "CSV path")->required();
  synth->add_option("--per-class", per_class, "Rows per raw label")->capture_default_str();
  synth->add_option("--counts", counts, "Rows for each of the 15 raw labels")->delimiter(',')->expected(15);
  synth->add_option("--seed", seed, "Random seed");
  synth->callback([&] {
    action = [&] {
      resolve_seed(synth);
      const auto spec = dataset::default_synth_spec();
      if (!counts.empty()) {
        dataset::synth_generate(spec, counts, seed, out);
      } else {
        dataset::synth_generate(spec, per_class, seed, out);
      }
      return 0;
    };
  });

  // train-mlp
  std::string arch = "baseline";
  std::size_t max_epochs = 500, patience = 10, batch_size = 32;
  double learning_rate = 1e-3, test_frac = 0.2;
  auto* train_mlp = app.add_subcommand("train-mlp", "Train the float MLP");
  train_mlp->add_option("--arch", arch, "baseline, enhanced, compact or widths like 16,32,32")->capture_default_str();
  train_mlp->add_option("--data", data_path, "Prepared dataset")->required();
  train_mlp->add_option("--out", out, "Model file")->required();
  train_mlp->add_option("--seed", seed, "Random seed");
  train_mlp->add_option("--max-epochs", max_epochs)->capture_default_str();
  train_mlp->add_option("--patience", patience)->capture_default_str();
  train_mlp->add_option("--batch-size", batch_size)->capture_default_str();
  train_mlp->add_option("--learning-rate", learning_rate)->capture_default_str();
  train_mlp->add_option("--test-frac", test_frac, "Held-out share (0 = train on all)")->capture_default_str();
  train_mlp->callback([&] {
    action = [&] {
      resolve_seed(train_mlp);
      check_fraction(test_frac, "--test-frac", true, false);
      const auto spec = mlp::ArchSpec::parse(arch);
      const auto d = load_dataset(data_path);
      auto [train_raw, test] = split_for_training(d.data, test_frac, seed);
      const auto scaler = fit_scaler(train_raw).to_float32();
      const auto train = apply_scaler(scaler, train_raw);
      mlp::TrainConfig cfg;
      cfg.max_epochs = max_epochs;
      cfg.patience = patience;
      cfg.batch_size = batch_size;
      cfg.learning_rate = learning_rate;
      cfg.seed = seed;
      auto model = mlp::build_mlp(spec, train.n_features, dataset::kClassCount, seed);
      auto [trained, history] = mlp::train(std::move(model), train, cfg);
      log::info("trained " + std::to_string(history.epochs_run) + " epochs, best epoch " +
                std::to_string(history.best_epoch));
      trained.scaler = scaler;
      trained.label_names = dataset::class_name_table();
      const AnyModel any = std::move(trained);
      report_accuracy(any, test);
      save_model(any, out);
      return 0;
    };
  });

  // quantize
  std::string in_path;
  auto* quantize = app.add_subcommand("quantize", "Convert a float MLP to int8 dynamic-range form");
  quantize->add_option("--in", in_path, "Float model")->required();
  quantize->add_option("--out", out, "Quantized model")->required();
  quantize->callback([&] {
    action = [&] {
      const auto model = load_model(in_path);
      const auto* m = std::get_if<mlp::MlpModel>(&model);
      if (!m) throw FormatError(in_path + " holds a " + std::string(kind_name(model_kind(model))) + ", not a float MLP", 5);
      const AnyModel q = quant::convert(*m);
      save_model(q, out);
      log::info("float " + std::to_string(serialize_model(model).size()) + " bytes -> quantized " +
                std::to_string(serialize_model(q).size()) + " bytes");
      return 0;
    };
  });

  // train-rf
  std::size_t trees = 100;
  std::string max_depth = "none";
  auto* train_rf = app.add_subcommand("train-rf", "Train the full random forest");
  train_rf->add_option("--data", data_path, "Prepared dataset")->required();
  train_rf->add_option("--out", out, "Model file")->required();
  train_rf->add_option("--trees", trees)->capture_default_str();
  train_rf->add_option("--max-depth", max_depth, "Integer or 'none'")->capture_default_str();
  train_rf->add_option("--seed", seed, "Random seed");
  train_rf->add_option("--test-frac", test_frac, "Held-out share (0 = train on all)")->capture_default_str();
  train_rf->callback([&] {
    action = [&] {
      resolve_seed(train_rf);
      check_fraction(test_frac, "--test-frac", true, false);
      forest::ForestConfig cfg;
      cfg.n_trees = trees;
      cfg.max_depth = parse_depth(max_depth);
      cfg.seed = seed;
      const auto d = load_dataset(data_path);
      auto [train_raw, test] = split_for_training(d.data, test_frac, seed);
      const auto scaler = fit_scaler(train_raw).to_float32();
      auto f = forest::train_forest(apply_scaler(scaler, train_raw), dataset::kClassCount, cfg);
      f.scaler = scaler;
      f.label_names = dataset::class_name_table();
      const AnyModel any = std::move(f);
      report_accuracy(any, test);
      save_model(any, out);
      return 0;
    };
  });

  // compact-rf
  std::string full_model;
  double importance_threshold = 0.6;
  std::size_t compact_trees = 10;
  std::string compact_depth = "10";
  auto* compact_rf = app.add_subcommand("compact-rf", "Retrain a small forest on the most important features");
  compact_rf->add_option("--data", data_path, "Prepared dataset")->required();
  compact_rf->add_option("--full-model", full_model, "Full forest model")->required();
  compact_rf->add_option("--out", out, "Model file")->required();
  compact_rf->add_option("--importance-threshold", importance_threshold)->capture_default_str();
  compact_rf->add_option("--trees", compact_trees)->capture_default_str();
  compact_rf->add_option("--max-depth", compact_depth)->capture_default_str();
  compact_rf->add_option("--seed", seed, "Random seed");
  compact_rf->add_option("--test-frac", test_frac, "Held-out share (0 = train on all)")->capture_default_str();
  compact_rf->callback([&] {
    action = [&] {
      resolve_seed(compact_rf);
      check_fraction(test_frac, "--test-frac", true, false);
      check_fraction(importance_threshold, "--importance-threshold", false, true);
      const auto depth = parse_depth(compact_depth);
      if (!depth) throw ArgumentError("compact forests need a finite --max-depth");
      const auto full_any = load_model(full_model);
      const auto* full = std::get_if<forest::Forest>(&full_any);
      if (!full || full->feature_subset || full->importances.empty()) {
        throw FormatError(full_model + " is not a full forest with importances", 5);
      }
      const auto d = load_dataset(data_path);
      if (d.data.n_features != full->n_features) throw DataError("dataset width does not match the full forest");
      auto [train_raw, test] = split_for_training(d.data, test_frac, seed);
      const auto scaler = fit_scaler(train_raw).to_float32();
      const auto selected = forest::select_features_cumulative(full->importances, importance_threshold);
      std::string names;
      for (auto j : selected) names += (names.empty() ? "" : ", ") + std::string(dataset::feature_names()[j]);
      log::info("selected " + std::to_string(selected.size()) + " features: " + names);
      auto f = forest::compact_forest(apply_scaler(scaler, train_raw), dataset::kClassCount, selected,
                                      {compact_trees, *depth, seed});
      f.scaler = scaler;
      f.label_names = dataset::class_name_table();
      const AnyModel any = std::move(f);
      report_accuracy(any, test);
      save_model(any, out);
      return 0;
    };
  });

  // bench
  std::size_t folds = 5, warmup = 10, bins = 50;
  double fold_frac = 0.05;
  std::string scenarios = "ml-mlp,tinyml-mlp,ml-rf,tinyml-rf";
  std::vector<std::string> model_paths;
  auto* bench_cmd = app.add_subcommand("bench", "Cross-validated accuracy and resource measurement");
  bench_cmd->add_option("--data", data_path, "Prepared dataset")->required();
  bench_cmd->add_option("--out", out, "Report directory")->required();
  bench_cmd->add_option("--folds", folds)->capture_default_str();
  bench_cmd->add_option("--fold-frac", fold_frac)->capture_default_str();
  bench_cmd->add_option("--scenarios", scenarios)->capture_default_str();
  bench_cmd->add_option("--seed", seed, "Random seed");
  bench_cmd->add_option("--arch", arch)->capture_default_str();
  bench_cmd->add_option("--max-epochs", max_epochs)->capture_default_str();
  bench_cmd->add_option("--trees", trees)->capture_default_str();
  bench_cmd->add_option("--warmup", warmup)->capture_default_str();
  bench_cmd->add_option("--bins", bins)->capture_default_str();
  bench_cmd->add_option("--model", model_paths, "Measure existing model files on the whole dataset instead");
  bench_cmd->callback([&] {
    action = [&] {
      resolve_seed(bench_cmd);
      const auto d = load_dataset(data_path);
      bench::BenchReport report;
      if (!model_paths.empty()) {
        report.seed = seed;
        report.k = 1;
        for (const auto& path : model_paths) {
          const auto model = load_model(path);
          const auto s = scenario_of(model);
          if (report.find(s)) throw ArgumentError("two --model files map to " + std::string(bench::scenario_name(s)));
          bench::FoldResult fr;
          std::vector<std::uint8_t> pred;
          fr.samples = bench::measure_inference(model, d.data, warmup, &pred);
          fr.metrics = bench::evaluate(d.data.labels, pred, dataset::kClassCount);
          const auto bytes = serialize_model(model);
          fr.model_size_bytes = bytes.size();
          fr.model_digest = hex64(fnv1a64(bytes));
          report.scenarios.push_back({s, {std::move(fr)}});
        }
        std::sort(report.scenarios.begin(), report.scenarios.end(),
                  [](const auto& a, const auto& b) { return a.scenario < b.scenario; });
      } else {
        check_fraction(fold_frac, "--fold-frac", false, true);
        const auto list = bench::parse_scenarios(scenarios);
        bench::BenchOptions opts;
        opts.seed = seed;
        opts.warmup = warmup;
        opts.arch = mlp::ArchSpec::parse(arch);
        opts.train.max_epochs = max_epochs;
        opts.full_forest.n_trees = trees;
        const auto plan = dataset::make_fold_plan(d.data.labels, folds, fold_frac, seed);
        report = bench::run_scenarios(d.data, plan, list, opts);
      }
      bench::emit_report(report, out, bins);
      return 0;
    };
  });

  // report
  std::string bench_dir;
  auto* report_cmd = app.add_subcommand("report", "Re-emit summaries from a bench directory");
  report_cmd->add_option("--bench-dir", bench_dir, "Directory written by bench")->required();
  report_cmd->add_option("--out", out, "Output directory (default: the bench directory)");
  report_cmd->add_option("--bins", bins)->capture_default_str();
  report_cmd->callback([&] {
    action = [&] {
      const auto report = bench::load_report(bench_dir);
      bench::emit_report(report, out.empty() ? bench_dir : out, bins);
      return 0;
    };
  });

  // serve
  std::string model_path, bind_address = "0.0.0.0";
  std::uint16_t port = 9000;
  auto* serve = app.add_subcommand("serve", "Answer UDP inference requests");
  serve->add_option("--model", model_path, "Model file")->required();
  serve->add_option("--bind", bind_address)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->callback([&] {
    action = [&] {
      auto server = wire::InferenceServer::from_file(model_path);
      server.bind(bind_address, port);
      std::cerr << "[tinyids] serving " << model_path << " on " << bind_address << ":" << server.port()
                << " digest " << hex64(server.model_digest()) << std::endl;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::jthread worker([&](std::stop_token st) { server.run(st); });
      while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
      worker.request_stop();
      return 0;
    };
  });

  // client
  std::string server_addr, expect_model;
  int timeout_ms = 200, retries = 3;
  std::size_t limit = 0;
  auto* client = app.add_subcommand("client", "Stream a dataset to a server and record the replies");
  client->add_option("--server", server_addr, "host:port")->required();
  client->add_option("--data", data_path, "Prepared dataset")->required();
  client->add_option("--out", out, "Results CSV")->required();
  client->add_option("--timeout-ms", timeout_ms)->capture_default_str();
  client->add_option("--retries", retries)->capture_default_str();
  client->add_option("--model", expect_model, "Check the server's model digest against this file");
  client->add_option("--limit", limit, "Send only the first N samples");
  client->callback([&] {
    action = [&] {
      const auto [host, p] = wire::parse_endpoint(server_addr);
      auto d = load_dataset(data_path);
      LabeledData data = d.data;
      if (limit > 0 && limit < data.size()) {
        std::vector<std::size_t> first(limit);
        std::iota(first.begin(), first.end(), std::size_t{0});
        data = data.subset(first);
      }
      wire::ClientOptions opts;
      opts.timeout_ms = timeout_ms;
      opts.retries = retries;
      if (!expect_model.empty()) opts.expected_digest = fnv1a64(read_file_bytes(expect_model));
      const auto summary = wire::run_client(data, host, p, opts);
      wire::write_client_csv(summary, out);
      log::info("answered " + std::to_string(summary.answered) + ", lost " + std::to_string(summary.lost) +
                ", retransmits " + std::to_string(summary.retransmits));
      if (!summary.ping_ok) {
        log::warn("server " + server_addr + " did not answer");
        return static_cast<int>(ErrorKind::network);
      }
      return 0;
    };
  });

  // run
  std::string profile_path;
  auto* run = app.add_subcommand("run", "Run a whole study from a profile file");
  run->add_option("--profile", profile_path, "key = value profile")->required();
  run->callback([&] {
    action = [&] {
      const auto profile = pipeline::load_profile(profile_path, default_seed());
      const auto result = pipeline::run_profile(profile);
      log::info("manifest written to " + result.manifest.string());
      return 0;
    };
  });

  try {
    std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "tinyids: " << e.what() << unknown_flag_hint(app, args) << "\n";
    std::cerr << "run 'tinyids --help' for usage\n";
    return static_cast<int>(ErrorKind::usage);
  }
  log::set_level(quiet ? log::Level::quiet : (verbose ? log::Level::info : log::Level::warn));

  try {
    return action ? action() : static_cast<int>(ErrorKind::usage);
  } catch (const Error& e) {
    std::cerr << "tinyids: error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "tinyids: error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  } catch (const std::exception& e) {
    std::cerr << "tinyids: internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  }
}

int dispatch(int argc, const char* const* argv) {
  return dispatch(std::vector<std::string>(argv, argv + argc));
}

}  // namespace tinyids::cli
