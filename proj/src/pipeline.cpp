#include "tinyids/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tinyids/cli.hpp"
#include "tinyids/error.hpp"
#include "tinyids/log.hpp"
#include "tinyids/quant.hpp"

namespace tinyids::pipeline {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.push_back(std::move(item));
    s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
    throw ArgumentError("profile key '" + key + "': invalid number '" + value + "'");
  }
  return v;
}

constexpr std::array<std::string_view, 21> kKeys = {
    "input",   "data",      "out",        "seed",       "sample_frac", "time_format",
    "test_frac", "folds",   "fold_frac",  "scenarios",  "warmup",      "bins",
    "arch",    "max_epochs", "patience",  "trees",      "max_depth",   "importance_threshold",
    "compact_trees", "compact_depth", "stages"};

std::string suggest_key(std::string_view key) {
  const std::vector<std::string> keys(kKeys.begin(), kKeys.end());
  const auto best = cli::closest_match(key, keys);
  return best.empty() ? std::string() : " (did you mean '" + best + "'?)";
}

bool has_stage(const std::vector<std::string>& stages, std::string_view s) {
  return std::find(stages.begin(), stages.end(), s) != stages.end();
}

std::vector<std::string> resolve_stages(const Profile& p) {
  std::vector<std::string> stages;
  if (p.stages.empty()) {
    for (auto s : kStages) {
      if (s == "prepare" && p.inputs.empty()) continue;
      stages.emplace_back(s);
    }
  } else {
    for (const auto& s : p.stages) {
      if (std::find(kStages.begin(), kStages.end(), s) == kStages.end()) {
        throw ArgumentError("unknown stage '" + s + "'");
      }
    }
    // Canonical order regardless of how the profile lists them.
    for (auto s : kStages) {
      if (has_stage(p.stages, s)) stages.emplace_back(s);
    }
  }
  if (has_stage(stages, "quantize") && !has_stage(stages, "train-mlp")) {
    throw ArgumentError("stage 'quantize' needs 'train-mlp'");
  }
  if (has_stage(stages, "compact-rf") && !has_stage(stages, "train-rf")) {
    throw ArgumentError("stage 'compact-rf' needs 'train-rf'");
  }
  if (has_stage(stages, "prepare") && p.inputs.empty()) throw ArgumentError("stage 'prepare' needs 'input'");
  if (!has_stage(stages, "prepare") && !p.data) throw ArgumentError("profile needs 'input' or 'data'");
  return stages;
}

std::string model_file_name(bench::Scenario s) {
  std::string name(bench::scenario_token(s));
  std::replace(name.begin(), name.end(), '-', '_');
  return name + ".bin";
}

template <typename F>
auto stage(const std::string& name, F&& f) {
  log::info("stage " + name);
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + name + ": " + e.what());
  }
}

}  // namespace

Profile parse_profile_text(std::string_view text, const std::filesystem::path& base_dir, std::uint64_t default_seed) {
  Profile p;
  p.seed = default_seed;
  auto resolve = [&](const std::string& v) {
    std::filesystem::path path(v);
    return path.is_absolute() ? path : base_dir / path;
  };
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool have_out = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError("profile line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    const std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key == "input") {
      for (const auto& item : split_list(value)) p.inputs.push_back(resolve(item));
    } else if (key == "data") {
      p.data = resolve(value);
    } else if (key == "out") {
      p.out = resolve(value);
      have_out = true;
    } else if (key == "seed") {
      p.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "sample_frac") {
      p.sample_frac = parse_number<double>(key, value);
    } else if (key == "time_format") {
      p.time_format = value;
    } else if (key == "test_frac") {
      p.test_frac = parse_number<double>(key, value);
    } else if (key == "folds") {
      p.folds = parse_number<std::size_t>(key, value);
    } else if (key == "fold_frac") {
      p.fold_frac = parse_number<double>(key, value);
    } else if (key == "scenarios") {
      p.scenarios = bench::parse_scenarios(value);
    } else if (key == "warmup") {
      p.warmup = parse_number<std::size_t>(key, value);
    } else if (key == "bins") {
      p.bins = parse_number<std::size_t>(key, value);
    } else if (key == "arch") {
      p.arch = mlp::ArchSpec::parse(value);
    } else if (key == "max_epochs") {
      p.max_epochs = parse_number<std::size_t>(key, value);
    } else if (key == "patience") {
      p.patience = parse_number<std::size_t>(key, value);
    } else if (key == "trees") {
      p.trees = parse_number<std::size_t>(key, value);
    } else if (key == "max_depth") {
      if (value == "none") {
        p.max_depth.reset();
      } else {
        p.max_depth = parse_number<std::size_t>(key, value);
      }
    } else if (key == "importance_threshold") {
      p.importance_threshold = parse_number<double>(key, value);
    } else if (key == "compact_trees") {
      p.compact_trees = parse_number<std::size_t>(key, value);
    } else if (key == "compact_depth") {
      p.compact_depth = parse_number<std::size_t>(key, value);
    } else if (key == "stages") {
      p.stages = split_list(value);
    } else {
      throw ArgumentError("profile line " + std::to_string(line_no) + ": unknown key '" + key + "'" +
                          suggest_key(key));
    }
  }
  if (!have_out) throw ArgumentError("profile is missing 'out'");
  return p;
}

Profile load_profile(const std::filesystem::path& path, std::uint64_t default_seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open profile " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_profile_text(ss.str(), path.parent_path(), default_seed);
}

RunResult run_profile(const Profile& p) {
  RunResult result;
  result.stages = resolve_stages(p);
  const auto& stages = result.stages;
  std::filesystem::create_directories(p.out);
  nlohmann::ordered_json manifest;
  manifest["tool"] = "tinyids";
  manifest["format_version"] = kFormatVersion;
  manifest["seed"] = p.seed;
  manifest["stages"] = stages;

  // Dataset
  dataset::PreparedDataset prepared;
  std::filesystem::path data_path;
  if (has_stage(stages, "prepare")) {
    prepared = stage("prepare", [&] {
      dataset::PrepareOptions opts;
      opts.sample_fraction = p.sample_frac;
      opts.seed = p.seed;
      opts.time_format = p.time_format;
      dataset::PrepareReport rep;
      auto d = dataset::prepare(p.inputs, opts, &rep);
      log::info("prepared " + std::to_string(rep.kept) + " of " + std::to_string(rep.parsed) + " rows");
      return d;
    });
    data_path = p.out / "dataset.bin";
    write_file_bytes(data_path, dataset::serialize_dataset(prepared));
  } else {
    data_path = *p.data;
    prepared = stage("load", [&] { return dataset::deserialize_dataset(read_file_bytes(data_path)); });
  }
  {
    const auto bytes = read_file_bytes(data_path);
    manifest["dataset"] = {{"path", std::filesystem::relative(data_path, p.out).generic_string()},
                           {"rows", prepared.size()},
                           {"digest", hex64(fnv1a64(bytes))}};
  }

  // Scenario set follows the enabled stages.
  std::vector<bench::Scenario> scenarios;
  for (auto s : p.scenarios) {
    const bool enabled = (s == bench::Scenario::ml_mlp && has_stage(stages, "train-mlp")) ||
                         (s == bench::Scenario::tinyml_mlp && has_stage(stages, "quantize")) ||
                         (s == bench::Scenario::ml_rf && has_stage(stages, "train-rf")) ||
                         (s == bench::Scenario::tinyml_rf && has_stage(stages, "compact-rf"));
    if (enabled) scenarios.push_back(s);
  }
  manifest["scenarios"] = nlohmann::ordered_json::array();
  for (auto s : scenarios) manifest["scenarios"].push_back(bench::scenario_name(s));

  bench::BenchOptions options;
  options.seed = p.seed;
  options.warmup = p.warmup;
  options.test_fraction = p.test_frac;
  options.arch = p.arch;
  options.train.max_epochs = p.max_epochs;
  options.train.patience = p.patience;
  options.full_forest.n_trees = p.trees;
  options.full_forest.max_depth = p.max_depth;
  options.compact.n_trees = p.compact_trees;
  options.compact.max_depth = p.compact_depth;
  options.importance_threshold = p.importance_threshold;

  // Deployment models, trained on the train part of one stratified split.
  manifest["models"] = nlohmann::ordered_json::array();
  if (!scenarios.empty()) {
    const auto split = dataset::stratified_split_indices(prepared.data.labels, p.test_frac, p.seed);
    const LabeledData train = prepared.data.subset(split.train);
    const LabeledData test = prepared.data.subset(split.test);
    const auto models = stage("train", [&] { return bench::train_scenarios(train, scenarios, options); });
    for (auto s : scenarios) {
      const auto& model = models.at(s);
      const auto bytes = serialize_model(model);
      const auto path = p.out / "models" / model_file_name(s);
      write_file_bytes(path, bytes);
      result.model_files.push_back(path);
      std::vector<std::uint8_t> pred(test.size());
      for (std::size_t i = 0; i < test.size(); ++i) pred[i] = infer(model, test.row(i)).predicted_class;
      const auto m = bench::evaluate(test.labels, pred, options.n_classes);
      manifest["models"].push_back({{"scenario", bench::scenario_name(s)},
                                    {"path", "models/" + model_file_name(s)},
                                    {"kind", kind_name(model_kind(model))},
                                    {"size_bytes", bytes.size()},
                                    {"digest", hex64(fnv1a64(bytes))},
                                    {"test_accuracy", m.accuracy}});
    }
  }

  if (has_stage(stages, "bench") && !scenarios.empty()) {
    stage("bench", [&] {
      const auto plan = dataset::make_fold_plan(prepared.data.labels, p.folds, p.fold_frac, p.seed);
      const auto report = bench::run_scenarios(prepared.data, plan, scenarios, options);
      bench::emit_report(report, p.out / "bench", p.bins);
      return 0;
    });
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(p.out / "bench")) {
      files.push_back("bench/" + entry.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    manifest["bench"] = {{"folds", p.folds}, {"fold_frac", p.fold_frac}, {"files", files}};
  }

  result.manifest = p.out / "manifest.json";
  std::ofstream out(result.manifest, std::ios::binary | std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + result.manifest.string());
  return result;
}

}  // namespace tinyids::pipeline
