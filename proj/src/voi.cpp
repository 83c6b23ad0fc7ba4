#include "isac/voi.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace isac::voi {

std::string to_string(Timescale t) { return t == Timescale::Long ? "L" : "S"; }

VoIRecord kl_mc_estimate(const JointSampler& sampler, const ConditionalLogDensity& numerator,
                         const ConditionalLogDensity& denominator, std::size_t samples, Rng& rng) {
  if (samples < kMinMcSamples)
    throw InvalidInput("kl_mc_estimate: need at least " + std::to_string(kMinMcSamples) + " samples");
  Real mean = 0.0;
  Real m2 = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const JointSample s = sampler(rng);
    const Real ln_num = numerator(s.action, s.numerator_condition);
    const Real ln_den = denominator(s.action, s.denominator_condition);
    if (!std::isfinite(ln_num) || !std::isfinite(ln_den))
      throw InvalidInput("kl_mc_estimate: zero or NaN density at sample " + std::to_string(i));
    const Real x = (ln_num - ln_den) / std::numbers::ln2;
    // Welford
    const Real delta = x - mean;
    mean += delta / static_cast<Real>(i + 1);
    m2 += delta * (x - mean);
  }
  VoIRecord r;
  r.kl = mean;
  r.samples = samples;
  r.mc_variance = m2 / static_cast<Real>(samples - 1) / static_cast<Real>(samples);
  return r;
}

namespace {

void check_rows(const Matrix& table, const char* name) {
  for (Index i = 0; i < table.rows(); ++i) {
    if ((table.row(i).array() < 0.0).any() || std::abs(table.row(i).sum() - 1.0) > 1e-9)
      throw InvalidInput(std::string("kl_discrete_exact: ") + name + " row " + std::to_string(i) + " is not normalised");
  }
}

}  // namespace

Real kl_discrete_exact(std::span<const DiscreteOutcome> joint, const Matrix& num, const Matrix& den) {
  check_rows(num, "numerator");
  check_rows(den, "denominator");
  Real total = 0.0;
  Real kl = 0.0;
  for (const auto& o : joint) {
    if (o.prob < 0.0) throw InvalidInput("kl_discrete_exact: negative probability");
    total += o.prob;
    if (o.prob == 0.0) continue;
    const Real p = num(o.numerator_state, o.action);
    const Real q = den(o.denominator_state, o.action);
    if (!(p > 0.0) || !(q > 0.0)) throw InvalidInput("kl_discrete_exact: joint mass on a zero-probability action");
    kl += o.prob * std::log2(p / q);
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("kl_discrete_exact: joint table is not normalised");
  return kl;
}

std::vector<int> select_high_value(std::span<const VoIRecord> records, Real threshold) {
  std::vector<int> out;
  for (const auto& r : records)
    if (r.kl >= threshold) out.push_back(r.source);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Vector augment_state(const Vector& local, const AugmentSchema& schema,
                     std::span<const std::pair<int, Vector>> exogenous) {
  if (local.size() != schema.local_dim) throw InvalidInput("augment_state: local state has the wrong dimension");
  if (static_cast<Index>(schema.sources.size()) > schema.slot_count())
    throw InvalidInput("augment_state: more sources than slots");
  std::vector<int> order = schema.sources;
  std::sort(order.begin(), order.end());

  Vector out = Vector::Zero(schema.dimension());
  out.head(schema.local_dim) = local;
  Index pos = schema.local_dim;
  for (int src : order) {
    for (const auto& [id, values] : exogenous) {
      if (id != src) continue;
      if (values.size() != schema.field_count)
        throw InvalidInput("augment_state: source " + std::to_string(id) + " has the wrong field count");
      out.segment(pos, schema.field_count) = values;
      out(pos + schema.field_count) = 1.0;
      break;
    }
    pos += schema.field_count + 1;
  }
  return out;
}

Real GaussianLinearModel::log_density(const Vector& action, const Vector& condition) const {
  const Vector mean = weights * condition + bias;
  Real ln = 0.0;
  for (Index j = 0; j < action.size(); ++j) {
    const Real r = action(j) - mean(j);
    ln += -0.5 * std::log(2.0 * kPi * variance(j)) - r * r / (2.0 * variance(j));
  }
  return ln;
}

GaussianLinearModel fit_gaussian_linear(const Matrix& targets, const Matrix& regressors) {
  if (targets.rows() != regressors.rows()) throw InvalidInput("fit_gaussian_linear: row count mismatch");
  const Index n = targets.rows();
  const Index q = regressors.cols();
  Matrix design(n, q + 1);
  design.leftCols(q) = regressors;
  design.col(q).setOnes();
  const Matrix coef = design.colPivHouseholderQr().solve(targets);  // (q+1) x p
  GaussianLinearModel m;
  m.weights = coef.topRows(q).transpose();
  m.bias = coef.row(q).transpose();
  const Matrix resid = targets - design * coef;
  m.variance = (resid.array().square().colwise().sum() / static_cast<Real>(n)).transpose();
  m.variance = m.variance.cwiseMax(kVarianceFloor);
  return m;
}

ConditionalModels fit_conditional_models(std::span<const TransitionRow> log) {
  if (log.size() < kMinLogRows)
    throw InvalidInput("fit_conditional_models: need at least " + std::to_string(kMinLogRows) + " transitions");
  const Index n = static_cast<Index>(log.size());
  const Index p = log[0].action.size();
  const Index qo = log[0].own_state.size();
  const Index qs = log[0].source_state.size();
  Matrix a(n, p), own(n, qo), src(n, qs);
  for (Index i = 0; i < n; ++i) {
    const auto& row = log[static_cast<std::size_t>(i)];
    if (row.action.size() != p || row.own_state.size() != qo || row.source_state.size() != qs)
      throw InvalidInput("fit_conditional_models: ragged log");
    a.row(i) = row.action.transpose();
    own.row(i) = row.own_state.transpose();
    src.row(i) = row.source_state.transpose();
  }
  return {fit_gaussian_linear(a, src), fit_gaussian_linear(a, own)};
}

VoIRecord estimate_from_log(std::span<const TransitionRow> log, std::size_t samples, Rng& rng) {
  const ConditionalModels models = fit_conditional_models(log);
  std::uniform_int_distribution<std::size_t> pick(0, log.size() - 1);
  auto sampler = [&](Rng& g) {
    const auto& row = log[pick(g)];
    return JointSample{row.action, row.source_state, row.own_state};
  };
  auto num = [&](const Vector& a, const Vector& c) { return models.numerator.log_density(a, c); };
  auto den = [&](const Vector& a, const Vector& c) { return models.denominator.log_density(a, c); };
  return kl_mc_estimate(sampler, num, den, samples, rng);
}

}  // namespace isac::voi
