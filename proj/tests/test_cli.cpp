#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "tinyids/binary_io.hpp"
#include "tinyids/cli.hpp"
#include "tinyids/error.hpp"
#include "tinyids/pipeline.hpp"

using namespace tinyids;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = 0;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "tinyids");
  args.insert(args.begin() + 1, "-q");
  std::stringstream captured;
  auto* old = std::cerr.rdbuf(captured.rdbuf());
  Run r;
  r.code = cli::dispatch(args);
  std::cerr.rdbuf(old);
  r.err = captured.str();
  return r;
}

// Restores the variable on scope exit.
struct EnvGuard {
  explicit EnvGuard(const char* name) : name_(name) {
    if (const char* v = std::getenv(name)) old_ = v;
  }
  ~EnvGuard() {
    if (old_) {
      ::setenv(name_, old_->c_str(), 1);
    } else {
      ::unsetenv(name_);
    }
  }
  const char* name_;
  std::optional<std::string> old_;
};

nlohmann::json manifest_of(const std::filesystem::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

std::vector<std::string> digests(const nlohmann::json& m) {
  std::vector<std::string> out;
  for (const auto& model : m.at("models")) out.push_back(model.at("digest").get<std::string>());
  return out;
}

}  // namespace

TEST_CASE("edit distance and suggestions") {
  CHECK(cli::edit_distance("", "") == 0);
  CHECK(cli::edit_distance("kitten", "sitting") == 3);
  CHECK(cli::edit_distance("--sede", "--seed") == 2);
  CHECK(cli::edit_distance("abc", "") == 3);
  const std::vector<std::string> flags = {"--seed", "--out", "--sample-frac"};
  CHECK(cli::closest_match("--sed", flags) == "--seed");
  CHECK(cli::closest_match("--ot", flags) == "--out");
  CHECK(cli::closest_match("--banana", flags).empty());
}

TEST_CASE("synth and prepare through dispatch") {
  fixtures::TempDir dir("cli_prep");
  const auto csv = (dir / "flows.csv").string();
  REQUIRE(run({"synth", "--out", csv, "--per-class", "12", "--seed", "3"}).code == 0);
  REQUIRE(std::filesystem::exists(csv));
  const auto out = (dir / "d.bin").string();
  const auto r = run({"prepare", "--input", csv, "--out", out, "--sample-frac", "1.0"});
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(out));
  const auto d = dataset::deserialize_dataset(read_file_bytes(out));
  CHECK(d.size() == 15 * 12);

  SUBCASE("missing required flag names it") {
    const auto bad = run({"prepare", "--input", csv});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("--out") != std::string::npos);
  }
  SUBCASE("unknown flag gets a suggestion") {
    const auto bad = run({"prepare", "--input", csv, "--out", out, "--sampel-frac", "0.5"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("did you mean --sample-frac") != std::string::npos);
  }
  SUBCASE("fraction out of range is a usage error") {
    CHECK(run({"prepare", "--input", csv, "--out", out, "--sample-frac", "1.5"}).code == 1);
  }
  SUBCASE("missing input file is a data error") {
    CHECK(run({"prepare", "--input", (dir / "nope.csv").string(), "--out", out}).code == 2);
  }
  SUBCASE("no subcommand") { CHECK(run({}).code == 1); }
}

TEST_CASE("model errors map to exit code 3") {
  fixtures::TempDir dir("cli_fmt");
  const auto bogus = dir / "bogus.bin";
  std::ofstream(bogus, std::ios::binary) << "TIDS\x01\x01garbage";
  const auto csv = (dir / "flows.csv").string();
  const auto data = (dir / "d.bin").string();
  REQUIRE(run({"synth", "--out", csv, "--per-class", "6"}).code == 0);
  REQUIRE(run({"prepare", "--input", csv, "--out", data, "--sample-frac", "1.0"}).code == 0);
  const auto bad = run({"bench", "--model", bogus.string(), "--data", data, "--out", (dir / "b").string()});
  CHECK(bad.code == 3);
  CHECK(bad.err.find("offset") != std::string::npos);
  // A dataset file is not a model.
  CHECK(run({"quantize", "--in", data, "--out", (dir / "q.bin").string()}).code == 3);
}

TEST_CASE("seed comes from the environment when not given") {
  EnvGuard guard("TINYIDS_SEED");
  fixtures::TempDir dir("cli_seed");
  ::setenv("TINYIDS_SEED", "7", 1);
  REQUIRE(run({"synth", "--out", (dir / "env.csv").string(), "--per-class", "5"}).code == 0);
  REQUIRE(run({"synth", "--out", (dir / "flag.csv").string(), "--per-class", "5", "--seed", "7"}).code == 0);
  REQUIRE(run({"synth", "--out", (dir / "other.csv").string(), "--per-class", "5", "--seed", "8"}).code == 0);
  CHECK(slurp(dir / "env.csv") == slurp(dir / "flag.csv"));
  CHECK(slurp(dir / "env.csv") != slurp(dir / "other.csv"));
  ::setenv("TINYIDS_SEED", "seven", 1);
  CHECK(run({"synth", "--out", (dir / "x.csv").string(), "--per-class", "5"}).code == 1);
}

TEST_CASE("profile parsing") {
  const std::filesystem::path base = "/work";
  const auto p = pipeline::parse_profile_text(
      "# comment\ninput = a.csv, /abs/b.csv\nout = run1\nseed = 9\nmax_depth = none\n"
      "scenarios = ml-rf,tinyml-rf\nstages = train-rf, compact-rf, bench\n",
      base, 0);
  CHECK(p.inputs == std::vector<std::filesystem::path>{"/work/a.csv", "/abs/b.csv"});
  CHECK(p.out == "/work/run1");
  CHECK(p.seed == 9);
  CHECK_FALSE(p.max_depth.has_value());
  CHECK(p.scenarios.size() == 2);
  CHECK(p.stages == std::vector<std::string>{"train-rf", "compact-rf", "bench"});

  CHECK(pipeline::parse_profile_text("out = x\n", base, 42).seed == 42);
  CHECK_THROWS_AS(pipeline::parse_profile_text("seed = 1\n", base, 0), ArgumentError);
  CHECK_THROWS_AS(pipeline::parse_profile_text("out = x\nfolds = five\n", base, 0), ArgumentError);
  CHECK_THROWS_AS(pipeline::parse_profile_text("out = x\njust words\n", base, 0), ArgumentError);
  try {
    pipeline::parse_profile_text("out = x\nsede = 3\n", base, 0);
    FAIL("expected an error");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("did you mean 'seed'") != std::string::npos);
  }
}

TEST_CASE("run profile end to end") {
  fixtures::TempDir dir("cli_run");
  REQUIRE(run({"synth", "--out", (dir / "flows.csv").string(), "--per-class", "40", "--seed", "2"}).code == 0);
  const std::string common =
      "input = flows.csv\nsample_frac = 1.0\nseed = 5\nmax_epochs = 15\ntrees = 12\n"
      "folds = 2\nfold_frac = 0.3\nwarmup = 1\nbins = 10\n";
  std::ofstream(dir / "a.profile") << common << "out = run_a\n";
  std::ofstream(dir / "b.profile") << common << "out = run_b\n";
  std::ofstream(dir / "c.profile") << common << "out = run_c\nstages = prepare, train-mlp, train-rf, compact-rf\n";
  std::ofstream(dir / "d.profile") << common << "out = run_d\nstages = quantize\n";

  REQUIRE(run({"run", "--profile", (dir / "a.profile").string()}).code == 0);
  const auto a = manifest_of(dir / "run_a");
  CHECK(a.at("models").size() == 4);
  CHECK(a.at("scenarios").size() == 4);
  for (const auto& m : a.at("models")) CHECK(std::filesystem::exists(dir / "run_a" / m.at("path").get<std::string>()));
  CHECK(std::filesystem::exists(dir / "run_a" / "bench" / "stats.json"));
  CHECK(std::filesystem::exists(dir / "run_a" / "dataset.bin"));

  REQUIRE(run({"run", "--profile", (dir / "b.profile").string()}).code == 0);
  const auto b = manifest_of(dir / "run_b");
  CHECK(digests(a) == digests(b));
  CHECK(a.at("dataset").at("digest") == b.at("dataset").at("digest"));

  REQUIRE(run({"run", "--profile", (dir / "c.profile").string()}).code == 0);
  const auto c = manifest_of(dir / "run_c");
  CHECK(c.at("models").size() == 3);
  CHECK_FALSE(std::filesystem::exists(dir / "run_c" / "bench"));

  CHECK(run({"run", "--profile", (dir / "d.profile").string()}).code == 1);
  CHECK(run({"run", "--profile", (dir / "missing.profile").string()}).code == 1);
}
