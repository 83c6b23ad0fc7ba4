#pragma once

#include "isac/config.hpp"
#include "isac/sensing.hpp"
#include "isac/two_timescale.hpp"
#include "isac/voi.hpp"
#include "isac/world.hpp"

#include <array>
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace isac::sim {

using voi::Timescale;

/// An RSU's beams exceeded its power budget. Never caught inside the simulator.
struct PowerBudgetViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct EpisodeMetrics {
  int episode = 0;
  bool training = true;
  Real mean_ttc = 0.0;   // capped at the TTC cap
  Real min_ttc = kInf;   // uncapped
  Real cr_ratio = 0.0;
  std::size_t cr_events = 0;
  std::size_t pair_samples = 0;
  Real spacing_rms = 0.0;
  Real velocity_rms = 0.0;
  Real crb_distance = 0.0;  // mean over (slot, sensed target)
  Real crb_angle = 0.0;
  Real mean_crb = 0.0;      // mean of crb_distance + crb_angle per sample
  std::size_t sensing_samples = 0;
  std::size_t misaligned = 0;
  Real rate_ok_fraction = 0.0;
  std::size_t relay_requests = 0;
  std::size_t relays_delivered = 0;
  std::size_t collisions = 0;
  std::size_t constraint_violations = 0;
  Real voi_selected = 0.0;  // mean selected sources per CAV (long term)
  std::size_t long_slots = 0;
  std::size_t short_slots = 0;
  std::size_t power_audits = 0;
  Real max_power_ratio = 0.0;  // max over audits of power / budget
  Real cav_reward = 0.0;
  Real rsu_reward = 0.0;
};

struct TimeseriesRow {
  int episode = 0;
  Real time = 0.0;
  int vehicle = 0;
  bool cav = true;
  Real spacing_error = 0.0;
  Real velocity_error = 0.0;
  Real accel = 0.0;
  Real input_accel = 0.0;
  Real ttc = kInf;
  int cr_flag = 0;
};

/// What a CAV believes about one HDV: the last relayed fix and its age in short slots.
struct HdvView {
  bool known = false;
  Real x = 0.0;
  Real y = 0.0;
  Real speed = 0.0;
  int age = 0;
};

struct VoiLogEntry {
  int episode = 0;
  voi::VoIRecord record;
};

/// One logged transition: a joint short slot (agent -1) or one CAV's long-slot transition.
struct SlotLogRow {
  int episode = 0;
  int long_step = 0;
  int short_step = -1;  // -1 on long rows
  Timescale timescale = Timescale::Short;
  int agent = -1;
  Real reward = 0.0;
};

inline constexpr Index kFieldCount = 6;

/// scale * mean over the trace of min(TTC, cap).
Real cav_reward(std::span<const Real> ttc_trace, Real cap, Real scale = 1.0);

/// -scale * mean over sensed targets of log10(CRB(d) + CRB(theta)); 0 with no targets.
Real rsu_reward(std::span<const std::pair<Real, Real>> crbs, Real scale = 1.0);

/// The mixed-traffic ISAC world as a two-time-scale multi-agent environment.
/// Agents 0..V-1 are CAVs (long: residual acceleration and steering; short: HDV relay request
/// scores); agents V..V+R-1 are RSUs (short: per-slot beam steering offset and power logit).
class IsacEnv : public marl::TwoTimescaleEnv {
 public:
  IsacEnv(const ScenarioConfig& config, std::uint64_t seed);

  std::size_t agent_count() const override;
  int long_steps() const override { return cfg_.timing.long_steps; }
  int short_steps() const override { return cfg_.timing.short_per_long; }
  void reset(int episode, bool training) override;
  Vector observe(std::size_t agent, Timescale t) const override;
  Vector context(Timescale t) const override;
  void apply_long(std::span<const std::optional<Vector>> actions) override;
  std::vector<Real> apply_short(std::span<const std::optional<Vector>> actions) override;
  std::vector<Real> long_rewards() override;
  void end_episode() override;

  // agent schema
  bool acts(std::size_t agent, Timescale t) const;
  Index observation_dim(std::size_t agent, Timescale t) const;
  Index action_dim(std::size_t agent, Timescale t) const;
  Vector action_low(std::size_t agent, Timescale t) const;
  Vector action_high(std::size_t agent, Timescale t) const;
  Index context_dim() const;
  std::string agent_name(std::size_t agent) const;
  int slot_capacity() const { return capacity_; }

  const ScenarioConfig& config() const { return cfg_; }
  const World& world() const { return world_; }
  const EpisodeMetrics& metrics() const { return last_metrics_; }
  const radio::RadioSnapshot& snapshot() const { return snap_; }
  const std::vector<std::vector<HdvView>>& views() const { return views_; }

  // value of information
  const std::vector<int>& selection(int cav, Timescale t) const;
  void set_selection(int cav, Timescale t, std::vector<int> sources);
  std::size_t voi_rows(int cav, Timescale t) const;
  /// Re-estimates every (CAV, source) pair from the rolling logs and updates the selections.
  std::vector<voi::VoIRecord> reselect(Rng& rng);

  void record_timeseries(bool on) { record_ts_ = on; }
  const std::vector<TimeseriesRow>& timeseries() const { return timeseries_; }
  const std::vector<SlotLogRow>& slot_log() const { return slot_log_; }
  void clear_logs() {
    timeseries_.clear();
    slot_log_.clear();
  }

  /// Short-term fields (e, e~, speed, accel, heading, lateral offset), normalised.
  Vector fields(int vehicle) const;

 private:
  struct VoiRow {
    Vector action;
    Matrix fields;  // kFieldCount x V at the earlier slot
  };
  struct Perceived {
    bool has_leader = false;
    Real gap = 0.0;
    Real leader_speed = 0.0;
    bool leader_is_hdv = false;
    int leader = -1;
    int age = 0;
  };

  Perceived perceive(int cav) const;
  void assign_service();
  void form_beams(std::span<const std::optional<Vector>> actions);
  void sense_and_relay(std::span<const std::optional<Vector>> actions,
                       std::vector<std::vector<std::pair<Real, Real>>>& rsu_crbs);
  void move_vehicles();
  Matrix all_fields() const;
  std::vector<int> cav_predecessors() const;
  Vector augmented(int cav, Timescale t, const Vector& local) const;
  void push_row(std::deque<VoiRow>& log, VoiRow row);
  Real threshold(Timescale t) const;
  Index slots() const { return cfg_.voi.enabled ? cfg_.voi.max_sources : 0; }

  ScenarioConfig cfg_;
  std::uint64_t seed_;
  World world_;
  int capacity_ = 1;
  sensing::EchoParams echo_;
  radio::ChannelParams channel_;
  Rng sense_rng_, hdv_rng_;
  bool training_ = true;
  int episode_ = 0;
  std::size_t slot_ = 0;  // short slot within episode

  radio::RadioSnapshot snap_;
  std::vector<std::vector<radio::LinkGeometry>> links_;  // [rsu][vehicle]
  std::vector<std::vector<HdvView>> views_;          // [cav][hdv]
  std::vector<Vector> long_action_;                  // held residual per CAV
  std::vector<std::array<Real, 2>> applied_sum_;     // sum of applied (u, alpha) over the long slot
  std::vector<Real> applied_u_;                      // last applied u per vehicle
  std::vector<Real> slot_ttc_;                       // TTC of each CAV's pair, last slot
  std::vector<std::vector<Real>> long_ttcs_;         // per CAV over the current long slot
  std::vector<std::vector<std::pair<int, Vector>>> exo_long_, exo_short_;
  std::vector<std::vector<int>> sel_long_, sel_short_;
  std::vector<std::deque<VoiRow>> log_long_, log_short_;
  std::vector<Matrix> long_snaps_;              // fields at the start of each long slot this episode
  std::vector<std::vector<int>> long_preds_;
  Matrix snapshot_short_;
  std::vector<int> pred_short_;
  std::vector<Vector> last_request_;
  std::vector<char> last_rate_ok_;
  int long_step_ = 0;

  // accumulators
  EpisodeMetrics cur_, last_metrics_;
  Real ttc_sum_ = 0.0, spacing_sq_ = 0.0, velocity_sq_ = 0.0, crb_d_sum_ = 0.0, crb_a_sum_ = 0.0;
  std::size_t spacing_n_ = 0, rate_checks_ = 0, rate_ok_ = 0;
  Real cav_reward_sum_ = 0.0, rsu_reward_sum_ = 0.0;
  std::size_t cav_reward_n_ = 0, rsu_reward_n_ = 0;
  bool record_ts_ = false;
  std::vector<TimeseriesRow> timeseries_;
  std::vector<SlotLogRow> slot_log_;
};

std::vector<marl::AgentBundle> make_agents(const IsacEnv& env, std::uint64_t seed);

marl::Schedule make_schedule(const ScenarioConfig& config, bool learn, int episodes);

using ProgressFn = std::function<void(const EpisodeMetrics&)>;

struct RunResult {
  std::vector<EpisodeMetrics> training;
  std::vector<EpisodeMetrics> evaluation;
  std::vector<marl::EpisodeLog> logs;
  std::vector<VoiLogEntry> voi;
};

/// Trains the learned agents, evaluates them with noise-free policies on the evaluation seeds
/// and, when `out_dir` is non-empty, writes config.json, metrics.csv, eval.csv, training_log.csv,
/// voi.csv, timeseries.csv and checkpoint files there.
RunResult run_experiment(const ScenarioConfig& config, const std::string& out_dir,
                         const ProgressFn& progress = {});

/// Same loop with conjugate equal-power beams and round-robin relays and no learning.
RunResult run_baseline(const ScenarioConfig& config, const std::string& out_dir, const ProgressFn& progress = {});

/// Loads agents from a checkpoint and runs the evaluation episodes only.
RunResult run_evaluation(const ScenarioConfig& config, const std::string& checkpoint, const std::string& out_dir,
                         const ProgressFn& progress = {});

/// Averages of the evaluation metrics.
Real mean_of(const std::vector<EpisodeMetrics>& ms, Real EpisodeMetrics::*field);

}  // namespace isac::sim
