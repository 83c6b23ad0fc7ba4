#include "isac/plotdata.hpp"

#include "isac/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace isac::plot {

namespace fs = std::filesystem;

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::string& file) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(file + " has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + " is empty");
  t.header = split(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split(line));
  return t;
}

Real num(const std::string& s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  char* end = nullptr;
  const Real v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw std::runtime_error("not a number: '" + s + "'");
  return v;
}

struct Sweep {
  const char* key;
  const char* config_path;  // JSON pointer
  const char* metric;
};

const Sweep kSweeps[] = {
    {"ttc_vs_cavs", "/counts/cavs", "mean_ttc"},          {"crb_vs_cavs", "/counts/cavs", "mean_crb"},
    {"ttc_vs_hdvs", "/counts/hdvs", "mean_ttc"},          {"crb_vs_hdvs", "/counts/hdvs", "mean_crb"},
    {"ttc_vs_rsus", "/counts/rsus", "mean_ttc"},          {"crb_vs_rsus", "/counts/rsus", "mean_crb"},
    {"ttc_vs_antennas", "/counts/antennas", "mean_ttc"},  {"crb_vs_antennas", "/counts/antennas", "mean_crb"},
    {"ttc_vs_power", "/radio/power_dbm", "mean_ttc"},     {"crb_vs_power", "/radio/power_dbm", "mean_crb"},
};

void sweep(const fs::path& root, const Sweep& s, const std::string& out) {
  std::vector<fs::path> runs;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "config.json") && fs::exists(e.path() / "eval.csv"))
      runs.push_back(e.path());
  if (fs::exists(root / "config.json") && fs::exists(root / "eval.csv")) runs.push_back(root);
  std::sort(runs.begin(), runs.end());
  if (runs.empty()) throw std::runtime_error("no run directories (config.json + eval.csv) under " + root.string());

  std::map<Real, std::pair<Real, int>> acc;
  for (const auto& run : runs) {
    std::ifstream in(run / "config.json");
    const auto cfg = nlohmann::json::parse(in);
    const nlohmann::json::json_pointer ptr(s.config_path);
    if (!cfg.contains(ptr)) throw std::runtime_error((run / "config.json").string() + " lacks " + s.config_path);
    const Real x = cfg.at(ptr).get<Real>();
    const Table t = read_csv(run / "eval.csv");
    const auto c = t.column(s.metric, (run / "eval.csv").string());
    if (t.rows.empty()) continue;
    Real y = 0.0;
    for (const auto& r : t.rows) y += num(r.at(c));
    auto& slot = acc[x];
    slot.first += y / static_cast<Real>(t.rows.size());
    ++slot.second;
  }
  CsvWriter w(out, {"x", "y", "runs"});
  for (const auto& [x, v] : acc) w.row(x, v.first / v.second, v.second);
}

void per_episode(const fs::path& root, const char* metric, const std::string& out) {
  const Table t = read_csv(root / "metrics.csv");
  const auto e = t.column("episode", "metrics.csv");
  const auto c = t.column(metric, "metrics.csv");
  CsvWriter w(out, {"x", "y"});
  for (const auto& r : t.rows) w.row(num(r.at(e)), num(r.at(c)));
}

void kl_per_step(const fs::path& root, const std::string& out) {
  const Table t = read_csv(root / "voi.csv");
  const auto e = t.column("episode", "voi.csv");
  const auto ts = t.column("timescale", "voi.csv");
  const auto k = t.column("kl_bits", "voi.csv");
  std::map<std::pair<Real, std::string>, std::pair<Real, int>> acc;
  for (const auto& r : t.rows) {
    auto& a = acc[{num(r.at(e)), r.at(ts)}];
    a.first += num(r.at(k));
    ++a.second;
  }
  CsvWriter w(out, {"x", "timescale", "y"});
  for (const auto& [key, v] : acc) w.row(key.first, key.second, v.first / v.second);
}

void cr_over_time(const fs::path& root, const std::string& out) {
  const Table t = read_csv(root / "timeseries.csv");
  const auto tm = t.column("time", "timeseries.csv");
  const auto cr = t.column("cr_flag", "timeseries.csv");
  const auto cav = t.column("cav", "timeseries.csv");
  std::map<Real, std::pair<Real, int>> acc;
  for (const auto& r : t.rows) {
    if (r.at(cav) != "1") continue;
    auto& a = acc[num(r.at(tm))];
    a.first += num(r.at(cr));
    ++a.second;
  }
  CsvWriter w(out, {"x", "y"});
  for (const auto& [x, v] : acc) w.row(x, v.first / v.second);
}

// First evaluation episode, one series per CAV.
void trajectory(const fs::path& root, const char* column, const std::string& out) {
  const Table t = read_csv(root / "timeseries.csv");
  const auto ep = t.column("episode", "timeseries.csv");
  const auto tm = t.column("time", "timeseries.csv");
  const auto veh = t.column("vehicle", "timeseries.csv");
  const auto cav = t.column("cav", "timeseries.csv");
  const auto c = t.column(column, "timeseries.csv");
  CsvWriter w(out, {"x", "series", "y"});
  if (t.rows.empty()) return;
  const std::string first = t.rows.front().at(ep);
  for (const auto& r : t.rows)
    if (r.at(ep) == first && r.at(cav) == "1") w.row(num(r.at(tm)), "cav" + r.at(veh), num(r.at(c)));
}

}  // namespace

const std::vector<std::string>& keys() {
  static const std::vector<std::string> k = {
      "ttc_convergence", "crb_convergence", "cr_over_time",    "ttc_vs_cavs",     "crb_vs_cavs",
      "ttc_vs_hdvs",     "crb_vs_hdvs",     "ttc_vs_rsus",     "crb_vs_rsus",     "ttc_vs_antennas",
      "crb_vs_antennas", "ttc_vs_power",    "crb_vs_power",    "kl_per_step",     "spacing_error",
      "velocity_error",  "acceleration",    "input_acceleration"};
  return k;
}

std::string write_plotdata(const std::string& results, const std::string& key) {
  const auto& k = keys();
  if (std::find(k.begin(), k.end(), key) == k.end()) {
    std::string msg = "unknown plot key '" + key + "'; valid keys:";
    for (const auto& s : k) msg += " " + s;
    throw UnknownKey(msg);
  }
  const fs::path root(results);
  if (!fs::is_directory(root)) throw std::runtime_error("results directory " + results + " does not exist");
  fs::create_directories(root / "plotdata");
  const std::string out = (root / "plotdata" / (key + ".csv")).string();

  for (const auto& s : kSweeps)
    if (key == s.key) {
      sweep(root, s, out);
      return out;
    }
  if (key == "ttc_convergence") per_episode(root, "mean_ttc", out);
  else if (key == "crb_convergence") per_episode(root, "mean_crb", out);
  else if (key == "cr_over_time") cr_over_time(root, out);
  else if (key == "kl_per_step") kl_per_step(root, out);
  else if (key == "spacing_error") trajectory(root, "spacing_error", out);
  else if (key == "velocity_error") trajectory(root, "velocity_error", out);
  else if (key == "acceleration") trajectory(root, "accel", out);
  else if (key == "input_acceleration") trajectory(root, "input_accel", out);
  return out;
}

}  // namespace isac::plot
