#include "isac/sensing.hpp"

#include <cmath>

namespace isac::sensing {

Real reflection_coefficient(Real rcs, Real distance) {
  if (!(distance > 0.0)) throw InvalidInput("reflection_coefficient: distance must be positive");
  return rcs / (2.0 * distance);
}

Variances measurement_variances(const CVector& beam, Real theta, Real distance, const EchoParams& echo) {
  if (!(beam.norm() > 0.0)) throw InvalidInput("measurement_variances: zero beam");
  const Real refl = reflection_coefficient(echo.rcs, distance);
  const Real snr_gain = echo.matched_gain * echo.matched_gain * echo.array_gain * echo.array_gain * refl * refl *
                        std::norm(radio::beam_gain(theta, beam));
  Variances v;
  if (!(snr_gain > 0.0)) return v;
  v.distance = echo.rho * echo.rho * echo.noise_var / snr_gain;
  v.velocity = echo.rho_tilde * echo.rho_tilde * echo.noise_var / snr_gain;
  return v;
}

SensingMeasurement sense_target(const radio::LinkGeometry& truth, const CVector& beam, const EchoParams& echo,
                                Rng& rng) {
  const Variances var = measurement_variances(beam, truth.azimuth, truth.distance, echo);
  const Real crb_theta = crb_angle(truth.azimuth, truth.distance, beam, echo);
  if (!var.observable() || !std::isfinite(crb_theta))
    throw BeamMisalignment("sense_target: target is outside the transmit beam");

  std::normal_distribution<Real> unit(0.0, 1.0);
  const Real e_d = unit(rng);
  const Real e_v = unit(rng);
  const Real e_a = unit(rng);

  SensingMeasurement m;
  m.var_distance = var.distance;
  m.var_velocity = var.velocity;
  m.distance = truth.distance + std::sqrt(var.distance) * e_d;
  m.radial_velocity = truth.radial_velocity + std::sqrt(var.velocity) * e_v;
  m.delay = 2.0 * m.distance / echo.light_speed;
  m.doppler = 2.0 * m.radial_velocity / echo.light_speed;
  const Real delay_var = var.distance * 4.0 / (echo.light_speed * echo.light_speed);
  m.crb_distance = crb_distance(delay_var, echo.light_speed);
  m.crb_angle = crb_theta;
  m.azimuth = wrap_angle(truth.azimuth + std::sqrt(crb_theta) * e_a);
  return m;
}

std::pair<Real, Real> polar_to_position(Real distance, Real theta) {
  if (distance < 0.0) throw InvalidInput("polar_to_position: negative distance");
  return {distance * std::cos(theta), distance * std::sin(theta)};
}

std::pair<Real, Real> position_to_polar(Real x, Real y) {
  if (x == 0.0 && y == 0.0) throw InvalidInput("position_to_polar: origin has no bearing");
  return {std::hypot(x, y), std::atan2(y, x)};
}

KinematicPrediction kinematic_prior(Real d_prev, Real theta_prev, Real delta_d) {
  if (!(d_prev > 0.0)) throw InvalidInput("kinematic_prior: previous distance must be positive");
  KinematicPrediction p;
  const Real d2 = d_prev * d_prev + delta_d * delta_d - 2.0 * d_prev * delta_d * std::cos(theta_prev);
  p.distance = std::sqrt(std::max(d2, 0.0));
  if (delta_d == 0.0) return p;
  if (!(p.distance > 0.0)) throw InvalidInput("kinematic_prior: target moves onto the array");
  const Real s = delta_d * std::sin(theta_prev) / p.distance;
  if (std::abs(s) > 1.0) throw InvalidInput("kinematic_prior: geometrically impossible displacement");
  p.angle_change = std::asin(s);
  return p;
}

Complex filtered_echo(Real theta, Real distance, const CVector& beam, const EchoParams& echo) {
  return echo.array_gain * reflection_coefficient(echo.rcs, distance) * echo.matched_gain *
         radio::beam_gain(theta, beam);
}

Eigen::Matrix3cd observation_jacobian(const Eigen::Vector3d& o, const CVector& beam, const EchoParams& echo) {
  const Real theta = o(0);
  const Real d = o(1);
  const Real amp = echo.array_gain * echo.matched_gain;
  Eigen::Matrix3cd D = Eigen::Matrix3cd::Zero();
  D(0, 0) = amp * reflection_coefficient(echo.rcs, d) * radio::beam_gain_derivative(theta, beam);
  D(0, 1) = amp * (-echo.rcs / (2.0 * d * d)) * radio::beam_gain(theta, beam);
  D(1, 1) = 2.0 / echo.light_speed;
  D(2, 2) = 2.0 / echo.light_speed;
  return D;
}

FimRecord fim(const Eigen::Vector3d& params, const CVector& beam, const EchoParams& echo,
              const Eigen::Vector3d& covariance) {
  if (!(covariance.array() > 0.0).all() || !covariance.allFinite())
    throw InvalidInput("fim: observation covariance must be positive definite");
  const Eigen::Matrix3cd D = observation_jacobian(params, beam, echo);
  const Eigen::Vector3cd inv = covariance.cwiseInverse().cast<Complex>();
  FimRecord r;
  r.params = params;
  r.covariance = covariance;
  r.fim = (D.adjoint() * inv.asDiagonal() * D).real();
  r.fim = 0.5 * (r.fim + r.fim.transpose()).eval();
  return r;
}

Real crb_distance(Real delay_var, Real light_speed) {
  if (!(delay_var > 0.0)) throw InvalidInput("crb_distance: delay variance must be positive");
  return delay_var * light_speed * light_speed / 4.0;
}

Real crb_angle(Real theta, Real distance, const CVector& beam, const EchoParams& echo) {
  const Real amp = echo.array_gain * reflection_coefficient(echo.rcs, distance) * echo.matched_gain;
  const Real info = amp * amp * std::norm(radio::beam_gain_derivative(theta, beam)) / echo.filtered_noise_var;
  if (!(info > 0.0)) return kInf;
  return 1.0 / info;
}

MseReport mse_bound_check(std::span<const SensingMeasurement> m, std::span<const radio::LinkGeometry> truth,
                          Real slack) {
  if (m.size() != truth.size()) throw InvalidInput("mse_bound_check: measurement/truth size mismatch");
  if (m.size() < kMinMseSamples)
    throw InvalidInput("mse_bound_check: need at least " + std::to_string(kMinMseSamples) + " samples");
  MseReport r;
  r.samples = m.size();
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Real ed = m[i].distance - truth[i].distance;
    const Real ea = wrap_angle(m[i].azimuth - truth[i].azimuth);
    r.mse_distance += ed * ed;
    r.mse_angle += ea * ea;
    r.crb_distance += m[i].crb_distance;
    r.crb_angle += m[i].crb_angle;
  }
  const Real n = static_cast<Real>(m.size());
  r.mse_distance /= n;
  r.mse_angle /= n;
  r.crb_distance /= n;
  r.crb_angle /= n;
  r.ratio_distance = r.mse_distance / r.crb_distance;
  r.ratio_angle = r.mse_angle / r.crb_angle;
  r.distance_ok = r.ratio_distance >= slack;
  r.angle_ok = r.ratio_angle >= slack;
  return r;
}

}  // namespace isac::sensing
