#pragma once

#include "isac/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <vector>

namespace isac::radio {

enum class ArraySide { Tx, Rx };

/// Half-wavelength ULA response toward azimuth `theta`:
/// entry m is sqrt(1/M) exp(-j pi m cos(theta)). Transmit and receive arrays share the form.
template <typename Scalar = Real>
VectorT<std::complex<Scalar>> steering_vector(Scalar theta, Index antennas,
                                              ArraySide side = ArraySide::Tx) {
  (void)side;
  if (antennas < 1) throw InvalidInput("steering_vector: need at least one antenna");
  using C = std::complex<Scalar>;
  const Scalar scale = std::sqrt(Scalar(1) / static_cast<Scalar>(antennas));
  const Scalar ramp = std::numbers::pi_v<Scalar> * std::cos(theta);
  VectorT<C> a(antennas);
  for (Index m = 0; m < antennas; ++m) a(m) = scale * std::polar(Scalar(1), -ramp * static_cast<Scalar>(m));
  return a;
}

/// a^H(theta) f
template <typename Derived>
auto beam_gain(typename Derived::RealScalar theta, const Eigen::MatrixBase<Derived>& f) {
  using Scalar = typename Derived::RealScalar;
  return steering_vector<Scalar>(theta, f.size()).dot(f);
}

/// d/dtheta of a^H(theta) f, from differentiating the phase ramp term by term.
template <typename Derived>
auto beam_gain_derivative(typename Derived::RealScalar theta, const Eigen::MatrixBase<Derived>& f) {
  using Scalar = typename Derived::RealScalar;
  using C = std::complex<Scalar>;
  const Index n = f.size();
  const Scalar scale = std::sqrt(Scalar(1) / static_cast<Scalar>(n));
  const Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar ramp = pi * std::cos(theta);
  C acc(0);
  for (Index m = 0; m < n; ++m) {
    const Scalar ms = static_cast<Scalar>(m);
    // conj(a_m) = scale * exp(+j pi m cos theta); its derivative brings down -j pi m sin theta
    acc += C(0, -pi * ms * std::sin(theta)) * std::polar(scale, ramp * ms) * f(m);
  }
  return acc;
}

struct ChannelParams {
  Real gain_ref = 1.0;        // gain at the 1 m reference distance
  Real carrier_hz = 28e9;
  Real light_speed = 3e8;
};

/// LoS coefficient (gain_ref / d) exp(j 2 pi (f_c / c) d).
Complex channel_coefficient(Real distance, const ChannelParams& params);

struct RsuConfig {
  int id = 0;
  Real x = 0.0;
  Real y = 0.0;
  Real height = 15.0;
  int antennas = 8;
  Real max_power_w = 0.2;
  std::vector<int> served;  // vehicle ids, ascending
};

struct LinkGeometry {
  Real distance = 0.0;         // 3-D range RSU -> vehicle (m)
  Real azimuth = 0.0;          // angle from the array axis (road direction)
  Real radial_velocity = 0.0;  // range rate (m/s)
};

LinkGeometry link_geometry(const RsuConfig& rsu, Real x, Real y, Real vx, Real vy);

/// h = sqrt(M) * coefficient(d) * a(theta)
CVector effective_channel(const RsuConfig& rsu, const LinkGeometry& link, const ChannelParams& params);

struct SubcarrierPlan {
  int rsu = 0;
  int subcarriers = 1;
  Real bandwidth_hz = 0.0;  // per subcarrier
  std::map<int, int> assignment;  // vehicle id -> subcarrier index (0-based)

  std::optional<int> subcarrier_of(int vehicle) const;
  bool assigned(int vehicle, int k) const;
};

/// Round-robin over ascending vehicle id; at most one vehicle per subcarrier.
SubcarrierPlan assign_subcarriers(const RsuConfig& rsu, int subcarriers, Real total_bandwidth_hz);

/// The `size` RSUs with the largest LoS gain toward (x, y); ties go to the lower id.
std::vector<int> cluster(Real x, Real y, std::span<const RsuConfig> rsus, int size);

/// Per-slot radio state: channels from every RSU to every vehicle, beam columns per served
/// vehicle, subcarrier plans and user-centric clusters.
struct RadioSnapshot {
  int subcarriers = 1;
  std::vector<SubcarrierPlan> plans;             // indexed by RSU
  std::vector<std::map<int, CVector>> channels;  // [rsu][vehicle] -> h
  std::vector<std::map<int, CVector>> beams;     // [rsu][vehicle] -> f on that vehicle's subcarrier
  std::map<int, std::vector<int>> clusters;      // vehicle -> serving RSUs
};

/// SINR of vehicle v on subcarrier k. Desired power sums |h^H f| over the serving RSUs that
/// use k for v; every other vehicle scheduled on k anywhere contributes interference through
/// v's own channels.
Real sinr(const RadioSnapshot& snap, int vehicle, int k, Real noise_power);

inline Real rate(Real sinr_value) {
  if (sinr_value < 0.0) throw InvalidInput("rate: negative SINR");
  return std::log2(1.0 + sinr_value);
}

/// Total spectral efficiency across v's subcarriers; nullopt when v has no subcarrier.
std::optional<Real> sum_rate(const RadioSnapshot& snap, int vehicle, Real noise_power);

bool sum_rate_ok(const RadioSnapshot& snap, int vehicle, Real noise_power, Real min_rate);

CVector conjugate_beamformer(const CVector& h, Real power);

/// Sum of squared column norms over all subcarriers (squared Frobenius norm of F_r).
Real transmit_power(const RadioSnapshot& snap, int rsu);

}  // namespace isac::radio
