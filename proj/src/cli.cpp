#include "isac/cli.hpp"

#include "isac/checkpoint.hpp"
#include "isac/config.hpp"
#include "isac/csv.hpp"
#include "isac/plotdata.hpp"
#include "isac/simulator.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace isac::cli {

namespace {

enum class Level { Quiet, Info, Debug };

Level log_level() {
  const char* v = std::getenv("ISACSIM_LOG");
  if (!v) return Level::Info;
  const std::string s(v);
  if (s == "quiet" || s == "0" || s == "error") return Level::Quiet;
  if (s == "debug" || s == "2") return Level::Debug;
  return Level::Info;
}

sim::ProgressFn progress_printer(std::ostream& err, Level level) {
  if (level == Level::Quiet) return {};
  return [&err, level](const sim::EpisodeMetrics& m) {
    if (level == Level::Info && m.training && m.episode % 10 != 0) return;
    err << (m.training ? "train" : "eval") << " episode " << m.episode << ": ttc " << fmt(m.mean_ttc) << ", cr "
        << fmt(m.cr_ratio) << ", crb " << fmt(m.mean_crb) << ", rate ok " << fmt(m.rate_ok_fraction) << '\n';
  };
}

ScenarioConfig load(const Command& cmd) {
  ScenarioConfig cfg = load_config(cmd.config, cmd.overrides);
  if (cmd.seed) cfg.seed = *cmd.seed;
  return cfg;
}

void summary(std::ostream& out, const char* what, const sim::RunResult& r, const std::string& dir) {
  out << what << " finished: " << r.training.size() << " training and " << r.evaluation.size()
      << " evaluation episodes written to " << dir << '\n';
  if (!r.evaluation.empty())
    out << "evaluation mean TTC " << fmt(sim::mean_of(r.evaluation, &sim::EpisodeMetrics::mean_ttc))
        << " s, CR ratio " << fmt(sim::mean_of(r.evaluation, &sim::EpisodeMetrics::cr_ratio)) << ", mean CRB "
        << fmt(sim::mean_of(r.evaluation, &sim::EpisodeMetrics::mean_crb)) << '\n';
}

}  // namespace

Command parse_args(int argc, const char* const* argv) {
  CLI::App app{"Two-time-scale ISAC simulator for mixed CAV/HDV traffic", "isacsim"};
  app.require_subcommand(1, 1);
  Command cmd;

  auto add_scenario = [&](CLI::App* sub) {
    sub->add_option("--config", cmd.config, "scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", cmd.overrides, "override, dotted.key=value (repeatable)")->take_all();
    sub->add_option("--seed", cmd.seed, "master seed");
    sub->add_option("--out", cmd.out, "output directory")->capture_default_str();
  };
  auto* run = app.add_subcommand("run", "train, then evaluate with noise-free policies");
  add_scenario(run);
  auto* base = app.add_subcommand("baseline", "conjugate beams and round-robin relays, no learning");
  add_scenario(base);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_scenario(eval);
  eval->add_option("--checkpoint", cmd.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  auto* plot = app.add_subcommand("plotdata", "emit plot series from a results directory");
  plot->add_option("--results", cmd.results, "results directory")->required();
  plot->add_option("--key", cmd.key, "figure key")->required();
  auto* inspect = app.add_subcommand("inspect", "summarize a checkpoint");
  inspect->add_option("--checkpoint", cmd.checkpoint, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw UsageError(app.help(), true);
  } catch (const CLI::CallForAllHelp&) {
    throw UsageError(app.help("", CLI::AppFormatMode::All), true);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    msg += "\n\n" + app.help();
    throw UsageError(msg);
  }
  cmd.verb = app.get_subcommands().front()->get_name();
  return cmd;
}

int execute(const Command& cmd, std::ostream& out, std::ostream& err) {
  const Level level = log_level();
  ScenarioConfig cfg;
  try {
    if (cmd.verb == "run" || cmd.verb == "eval" || cmd.verb == "baseline") cfg = load(cmd);
  } catch (const InvalidInput& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }

  try {
    const auto progress = progress_printer(err, level);
    if (cmd.verb == "run") {
      summary(out, "run", sim::run_experiment(cfg, cmd.out, progress), cmd.out);
    } else if (cmd.verb == "baseline") {
      summary(out, "baseline", sim::run_baseline(cfg, cmd.out, progress), cmd.out);
    } else if (cmd.verb == "eval") {
      summary(out, "eval", sim::run_evaluation(cfg, cmd.checkpoint, cmd.out, progress), cmd.out);
    } else if (cmd.verb == "plotdata") {
      out << plot::write_plotdata(cmd.results, cmd.key) << '\n';
    } else if (cmd.verb == "inspect") {
      out << marl::summarize(marl::load_checkpoint(cmd.checkpoint));
    } else {
      err << "unknown command " << cmd.verb << '\n';
      return kExitUsage;
    }
  } catch (const plot::UnknownKey& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Command cmd;
  try {
    cmd = parse_args(argc, argv);
  } catch (const UsageError& e) {
    (e.help ? out : err) << e.what() << '\n';
    return e.help ? kExitOk : kExitUsage;
  }
  return execute(cmd, out, err);
}

}  // namespace isac::cli
