#pragma once

#include "isac/radio.hpp"
#include "isac/types.hpp"

#include <span>
#include <utility>

namespace isac::sensing {

/// Mono-static echo constants for one RSU.
struct EchoParams {
  Real rcs = 1.0;             // radar cross-section coefficient
  Real array_gain = 8.0;      // sqrt(M_t M_r)
  Real matched_gain = 32.0;   // G_m
  Real noise_var = 4e-15;     // receiver noise sigma_k^2 (W)
  Real filtered_noise_var = 4e-15;  // post matched-filter noise sigma_m^2
  Real rho = 1.0;             // range-error scaling constant
  Real rho_tilde = 1.0;       // velocity-error scaling constant
  Real light_speed = 3e8;
};

Real reflection_coefficient(Real rcs, Real distance);

struct Variances {
  Real distance = kInf;  // sigma_d^2 (m^2)
  Real velocity = kInf;  // sigma~_v^2 ((m/s)^2)
  bool observable() const { return std::isfinite(distance) && std::isfinite(velocity); }
};

/// Beam-dependent estimation variances; infinite when a^H(theta) f vanishes.
Variances measurement_variances(const CVector& beam, Real theta, Real distance, const EchoParams& echo);

struct SensingMeasurement {
  Real delay = 0.0;            // round-trip delay estimate (s)
  Real doppler = 0.0;          // Doppler estimate under the c/2 mapping
  Real distance = 0.0;         // d-hat
  Real radial_velocity = 0.0;  // v-hat
  Real azimuth = 0.0;          // theta-hat
  Real var_distance = 0.0;
  Real var_velocity = 0.0;
  Real crb_distance = 0.0;
  Real crb_angle = 0.0;
};

/// Truth plus Gaussian errors with the beam-dependent variances. The angle error has the
/// angle CRB as its variance, i.e. an efficient angle estimator is assumed.
SensingMeasurement sense_target(const radio::LinkGeometry& truth, const CVector& beam,
                                const EchoParams& echo, Rng& rng);

std::pair<Real, Real> polar_to_position(Real distance, Real theta);
std::pair<Real, Real> position_to_polar(Real x, Real y);

struct KinematicPrediction {
  Real distance = 0.0;
  Real angle_change = 0.0;
};

/// Law-of-cosines range/angle update after a displacement `delta_d` along the array axis
/// toward the origin side.
KinematicPrediction kinematic_prior(Real distance_prev, Real theta_prev, Real delta_d);

/// Parameters o = [theta, d, speed].
struct FimRecord {
  Eigen::Vector3d params;
  Eigen::Matrix3d fim;
  Eigen::Vector3d covariance;  // diag(sigma_m^2, sigma_tau^2, sigma_nu^2)
};

/// Filtered echo zeta~ = alpha * rho(d) * G_m * a^H(theta) f.
Complex filtered_echo(Real theta, Real distance, const CVector& beam, const EchoParams& echo);

/// Jacobian of phi(o) = [zeta~, 2d/c, 2 speed/c] with respect to o.
Eigen::Matrix3cd observation_jacobian(const Eigen::Vector3d& params, const CVector& beam, const EchoParams& echo);

/// J = Re{D^H Sigma^-1 D}. Real rows (delay, Doppler) give the usual real-Gaussian information,
/// and the complex echo row gives |d zeta~|^2 / sigma_m^2, matching the closed-form angle bound.
FimRecord fim(const Eigen::Vector3d& params, const CVector& beam, const EchoParams& echo,
              const Eigen::Vector3d& covariance);

Real crb_distance(Real delay_var, Real light_speed);
Real crb_angle(Real theta, Real distance, const CVector& beam, const EchoParams& echo);

struct MseReport {
  std::size_t samples = 0;
  Real mse_distance = 0.0;
  Real mse_angle = 0.0;
  Real crb_distance = 0.0;  // mean bound over samples
  Real crb_angle = 0.0;
  Real ratio_distance = 0.0;
  Real ratio_angle = 0.0;
  bool distance_ok = false;  // ratio >= slack
  bool angle_ok = false;
};

inline constexpr std::size_t kMinMseSamples = 1000;

MseReport mse_bound_check(std::span<const SensingMeasurement> measurements,
                          std::span<const radio::LinkGeometry> truth, Real slack = 0.9);

}  // namespace isac::sensing
