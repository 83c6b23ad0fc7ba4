#include "isac/cli.hpp"
#include "isac/plotdata.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace isac;
namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;
  fs::path config;
  Sandbox() : dir(fs::temp_directory_path() / "isac_cli_test") {
    fs::remove_all(dir);
    fs::create_directories(dir);
    config = dir / "s.json";
    std::ofstream(config) << R"({"counts": {"cavs": 3, "hdvs": 1, "rsus": 2, "cluster_size": 1},
      "timing": {"episodes": 3, "long_steps": 2, "short_per_long": 3, "eval_episodes": 1},
      "marl": {"hidden": [16, 16], "batch": 8, "warmup_batches": 1}})";
  }
  ~Sandbox() { fs::remove_all(dir); }
};

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "isacsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

cli::Command parse(std::vector<std::string> args) {
  args.insert(args.begin(), "isacsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::parse_args(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("argument parsing") {
  Sandbox sb;
  const std::string cfg = sb.config.string();
  const auto c = parse({"run", "--config", cfg, "--seed", "7"});
  CHECK(c.verb == "run");
  CHECK(c.config == cfg);
  CHECK(c.seed == 7u);

  const auto o = parse({"run", "--config", cfg, "--set", "marl.gamma_long=0.9", "--set", "counts.cavs=4"});
  CHECK(o.overrides == std::vector<std::string>{"marl.gamma_long=0.9", "counts.cavs=4"});

  CHECK_THROWS_AS(parse({}), cli::UsageError);
  CHECK_THROWS_AS(parse({"run"}), cli::UsageError);
  CHECK_THROWS_AS(parse({"run", "--config", cfg, "--bogus"}), cli::UsageError);
  CHECK_THROWS_AS(parse({"run", "--config", (sb.dir / "missing.json").string()}), cli::UsageError);
  CHECK_THROWS_AS(parse({"plotdata", "--results", "x"}), cli::UsageError);
}

TEST_CASE("exit codes") {
  Sandbox sb;
  const std::string cfg = sb.config.string();
  CHECK(invoke({"--help"}).code == cli::kExitOk);
  CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);
  const auto bad = invoke({"baseline", "--config", cfg, "--set", "counts.cavs=zero"});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(bad.err.find("counts.cavs") != std::string::npos);
  CHECK(invoke({"baseline", "--config", cfg, "--set", "counts.nope=1"}).code == cli::kExitUsage);
  CHECK(invoke({"inspect", "--checkpoint", (sb.dir / "none").string()}).code == cli::kExitFailure);
}

TEST_CASE("run, plotdata and inspect") {
  Sandbox sb;
  const std::string cfg = sb.config.string();
  const std::string out = (sb.dir / "run").string();
  const auto r = invoke({"run", "--config", cfg, "--out", out, "--set", "timing.episodes=4"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out.find("run finished") != std::string::npos);

  const auto p = invoke({"plotdata", "--results", out, "--key", "ttc_convergence"});
  REQUIRE(p.code == cli::kExitOk);
  const fs::path csv = fs::path(out) / "plotdata" / "ttc_convergence.csv";
  const std::string first = slurp(csv);
  CHECK(std::count(first.begin(), first.end(), '\n') == 1 + 4);
  REQUIRE(invoke({"plotdata", "--results", out, "--key", "ttc_convergence"}).code == cli::kExitOk);
  CHECK(slurp(csv) == first);

  for (const auto& key : plot::keys()) {
    CAPTURE(key);
    CHECK(invoke({"plotdata", "--results", out, "--key", key}).code == cli::kExitOk);
  }

  const auto unknown = invoke({"plotdata", "--results", out, "--key", "ttc_vs_moon"});
  CHECK(unknown.code == cli::kExitUsage);
  CHECK(unknown.err.find("crb_vs_antennas") != std::string::npos);

  const std::string ck = (fs::path(out) / "checkpoint-4").string();
  const auto ins = invoke({"inspect", "--checkpoint", ck});
  REQUIRE(ins.code == cli::kExitOk);
  CHECK(ins.out.find("cav0") != std::string::npos);
  CHECK(ins.out.find("16x") != std::string::npos);

  const auto ev = invoke({"eval", "--config", cfg, "--checkpoint", ck, "--out", (sb.dir / "ev").string()});
  CHECK(ev.code == cli::kExitOk);

  std::string text = slurp(ck);
  std::ofstream(ck, std::ios::binary) << text.substr(0, text.size() / 3);
  const auto broken = invoke({"inspect", "--checkpoint", ck});
  CHECK(broken.code == cli::kExitFailure);
  CHECK(broken.err.find("checkpoint v1") != std::string::npos);
}

TEST_CASE("fresh checkpoint has zero bias norms") {
  Sandbox sb;
  const std::string out = (sb.dir / "fresh").string();
  REQUIRE(invoke({"run", "--config", sb.config.string(), "--out", out, "--set", "timing.episodes=1",
                  "--set", "marl.warmup_batches=1000"})
              .code == cli::kExitOk);
  const auto ins = invoke({"inspect", "--checkpoint", (fs::path(out) / "checkpoint-1").string()});
  CHECK(ins.out.find("|b|=0\n") != std::string::npos);
}
