#pragma once

#include "isac/types.hpp"

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace isac::voi {

enum class Timescale { Long, Short };

std::string to_string(Timescale t);

/// Monte-Carlo value-of-information estimate for one candidate source, in bits.
struct VoIRecord {
  int vehicle = -1;
  int source = -1;
  Timescale timescale = Timescale::Long;
  Real kl = 0.0;
  std::size_t samples = 0;
  Real mc_variance = 0.0;  // variance of the estimate itself (sample variance / F)
  bool selected = false;

  Real sigma() const { return std::sqrt(mc_variance); }
};

/// One draw from the joint of (predecessor action, source state, own state).
struct JointSample {
  Vector action;
  Vector numerator_condition;    // candidate source state
  Vector denominator_condition;  // own state
};

using JointSampler = std::function<JointSample(Rng&)>;
/// log p(action | condition) in nats; -inf marks zero density.
using ConditionalLogDensity = std::function<Real(const Vector& action, const Vector& condition)>;

inline constexpr std::size_t kMinMcSamples = 100;

/// Average of log2 p(a | s_source) / p(a | s_own) over F joint draws.
VoIRecord kl_mc_estimate(const JointSampler& sampler, const ConditionalLogDensity& numerator,
                         const ConditionalLogDensity& denominator, std::size_t samples, Rng& rng);

struct DiscreteOutcome {
  Real prob = 0.0;
  int numerator_state = 0;
  int denominator_state = 0;
  int action = 0;
};

/// Exact sum of P(i, j, a) log2 P(a | i) / Q(a | j). Rows of both conditional tables index states.
Real kl_discrete_exact(std::span<const DiscreteOutcome> joint, const Matrix& numerator_table,
                       const Matrix& denominator_table);

std::vector<int> select_high_value(std::span<const VoIRecord> records, Real threshold);

struct AugmentSchema {
  Index local_dim = 0;
  Index field_count = 6;
  std::vector<int> sources;  // expected sources for this episode
  Index slots = -1;          // fixed slot count; -1 means sources.size()

  Index slot_count() const { return slots < 0 ? static_cast<Index>(sources.size()) : slots; }
  Index dimension() const { return local_dim + slot_count() * (field_count + 1); }
};

/// Local features, then one (fields, presence) block per slot with sources in ascending id.
/// Sources that did not arrive and unused slots are zero-filled with presence 0.
Vector augment_state(const Vector& local, const AugmentSchema& schema,
                     std::span<const std::pair<int, Vector>> exogenous);

/// a ~ N(W x + b, diag(variance))
struct GaussianLinearModel {
  Matrix weights;
  Vector bias;
  Vector variance;

  Real log_density(const Vector& action, const Vector& condition) const;
};

inline constexpr Real kVarianceFloor = 1e-6;
inline constexpr std::size_t kMinLogRows = 10;

GaussianLinearModel fit_gaussian_linear(const Matrix& targets, const Matrix& regressors);

struct TransitionRow {
  Vector action;        // predecessor action one step later
  Vector own_state;     // s_v
  Vector source_state;  // s_v'
};

struct ConditionalModels {
  GaussianLinearModel numerator;    // p(a | s_v')
  GaussianLinearModel denominator;  // p(a | s_v)
};

ConditionalModels fit_conditional_models(std::span<const TransitionRow> log);

/// Fits both models on the log and estimates the KL from F bootstrap draws of its rows.
VoIRecord estimate_from_log(std::span<const TransitionRow> log, std::size_t samples, Rng& rng);

}  // namespace isac::voi
