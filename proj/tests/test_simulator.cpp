#include "isac/simulator.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace isac;
using namespace isac::sim;
namespace fs = std::filesystem;

namespace {

ScenarioConfig tiny(std::vector<std::string> extra = {}) {
  std::vector<std::string> o{"counts.cavs=3",         "counts.hdvs=1",          "counts.rsus=2",
                             "counts.cluster_size=1", "timing.episodes=1",      "timing.long_steps=2",
                             "timing.short_per_long=3", "timing.eval_episodes=1", "marl.hidden=[16,16]",
                             "marl.batch=8",          "marl.warmup_batches=1"};
  o.insert(o.end(), extra.begin(), extra.end());
  return parse_config("{}", o);
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::optional<Vector>> none(const IsacEnv& env) { return std::vector<std::optional<Vector>>(env.agent_count()); }

}  // namespace

TEST_CASE("CAV reward") {
  const std::vector<Real> capped{25.0, 30.0, kInf};
  CHECK(cav_reward(capped, 20.0) == doctest::Approx(20.0));
  CHECK(cav_reward(capped, 20.0, 0.1) == doctest::Approx(2.0));
  const std::vector<Real> a{4.0, 8.0, 6.0}, half{2.0, 4.0, 3.0};
  CHECK(cav_reward(half, 20.0) == doctest::Approx(cav_reward(a, 20.0) / 2));
}

TEST_CASE("RSU reward") {
  CHECK(rsu_reward({}) == 0.0);
  const std::vector<std::pair<Real, Real>> good{{1e-4, 1e-6}}, bad{{1e-2, 1e-4}};
  CHECK(rsu_reward(good) > rsu_reward(bad));
  CHECK(rsu_reward(good) == doctest::Approx(-std::log10(1e-4 + 1e-6)));
}

TEST_CASE("agent schema") {
  IsacEnv env(tiny(), 1);
  CHECK(env.agent_count() == 5);
  CHECK(env.acts(0, Timescale::Long));
  CHECK(env.acts(0, Timescale::Short));
  CHECK_FALSE(env.acts(3, Timescale::Long));
  CHECK(env.acts(3, Timescale::Short));
  CHECK(env.agent_name(4) == "rsu1");
  for (std::size_t i = 0; i < env.agent_count(); ++i)
    for (auto t : {Timescale::Long, Timescale::Short})
      if (env.acts(i, t)) CHECK(env.observe(i, t).size() == env.observation_dim(i, t));
  CHECK(env.context(Timescale::Short).size() == env.context_dim());
}

TEST_CASE("overload is rejected") {
  CHECK_THROWS_AS(IsacEnv(tiny({"counts.cavs=12", "counts.subcarriers=2"}), 1), OverloadError);
}

TEST_CASE("no HDVs") {
  IsacEnv env(tiny({"counts.hdvs=0"}), 1);
  CHECK_FALSE(env.acts(0, Timescale::Short));
  env.reset(0, true);
  for (const auto& v : env.views()) CHECK(v.empty());
  const auto r = run_baseline(env.config(), "");
  CHECK(r.evaluation.front().relay_requests == 0);
}

TEST_CASE("starved link delivers no relays") {
  const auto r = run_baseline(tiny({"radio.noise_dbm=100", "counts.cavs=4"}), "");
  const auto& m = r.training.front();
  CHECK(m.relay_requests > 0);
  CHECK(m.relays_delivered == 0);
  CHECK(m.rate_ok_fraction == 0.0);

  IsacEnv env(tiny({"radio.noise_dbm=100"}), 1);
  env.reset(0, false);
  env.apply_long(none(env));
  for (int t = 0; t < 3; ++t) env.apply_short(none(env));
  for (const auto& row : env.views())
    for (const auto& v : row) CHECK_FALSE(v.known);
}

TEST_CASE("zero noise relays the true HDV position") {
  IsacEnv env(tiny({"radio.noise_dbm=-300", "counts.cavs=4", "counts.hdvs=2"}), 3);
  env.reset(0, false);
  env.apply_long(none(env));
  int checked = 0;
  for (int t = 0; t < 3; ++t) {
    const auto before = env.world().vehicles;
    env.apply_short(none(env));
    for (const auto& row : env.views())
      for (std::size_t h = 0; h < row.size(); ++h) {
        if (!row[h].known || row[h].age != 0) continue;
        const auto& truth = before[static_cast<std::size_t>(env.world().cavs) + h];
        CHECK(row[h].x == doctest::Approx(truth.x).epsilon(1e-9));
        CHECK(row[h].y == doctest::Approx(truth.y).epsilon(1e-9));
        ++checked;
      }
  }
  CHECK(checked > 0);
}

TEST_CASE("baseline uses the full power budget") {
  const auto r = run_baseline(tiny(), "");
  for (const auto& m : r.training) {
    CHECK(m.power_audits > 0);
    CHECK(m.max_power_ratio == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("single short slot per long slot") {
  const auto r = run_baseline(tiny({"timing.short_per_long=1"}), "");
  CHECK(r.training.front().short_slots == 2);
  CHECK(r.training.front().long_slots == 2);
}

TEST_CASE("steering beyond the bound is clipped") {
  IsacEnv env(tiny(), 1);
  env.reset(0, false);
  auto acts = none(env);
  acts[0] = Vector{{0.0, 10.0}};
  CHECK_NOTHROW(env.apply_long(acts));
  for (int t = 0; t < 3; ++t) env.apply_short(none(env));
  CHECK(std::abs(env.world().vehicles[0].heading) < 1.0);
}

TEST_CASE("run accounting and determinism") {
  TempDir a("isac_sim_a"), b("isac_sim_b");
  const auto cfg = tiny();
  run_experiment(cfg, a.path.string());
  run_experiment(cfg, b.path.string());

  const auto metrics = lines(a.path / "metrics.csv");
  CHECK(metrics.size() == 2);
  const auto rows = lines(a.path / "transitions.csv");
  int shorts = 0, longs = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) (split(rows[i])[3] == "S" ? shorts : longs)++;
  CHECK(shorts == 6);
  CHECK(longs == 2 * 3);

  for (const auto& e : fs::directory_iterator(a.path)) {
    CAPTURE(e.path().filename().string());
    CHECK(slurp(e.path()) == slurp(b.path / e.path().filename()));
  }
  CHECK(fs::exists(a.path / "checkpoint-1"));

  // cr_events equals the sum of per-pair flags
  const auto eval = lines(a.path / "eval.csv");
  const auto head = split(eval[0]);
  const auto idx = std::find(head.begin(), head.end(), "cr_events") - head.begin();
  const long events = std::stol(split(eval[1])[static_cast<std::size_t>(idx)]);
  const auto ts = lines(a.path / "timeseries.csv");
  const auto th = split(ts[0]);
  const auto fi = std::find(th.begin(), th.end(), "cr_flag") - th.begin();
  long flags = 0;
  for (std::size_t i = 1; i < ts.size(); ++i) flags += std::stol(split(ts[i])[static_cast<std::size_t>(fi)]);
  CHECK(events == flags);
  CHECK(ts.size() > 1);
}

TEST_CASE("evaluation from a checkpoint reproduces the run") {
  TempDir a("isac_sim_ck");
  const auto cfg = tiny();
  const auto run = run_experiment(cfg, (a.path / "run").string());
  const auto ev = run_evaluation(cfg, (a.path / "run" / "checkpoint-1").string(), (a.path / "ev").string());
  REQUIRE(ev.evaluation.size() == run.evaluation.size());
  CHECK(ev.evaluation[0].mean_ttc == run.evaluation[0].mean_ttc);
  CHECK(slurp(a.path / "run" / "eval.csv") == slurp(a.path / "ev" / "eval.csv"));
}
