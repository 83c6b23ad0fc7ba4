#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace isac {

using Real = double;
using Complex = std::complex<Real>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using Index = Eigen::Index;

template <typename Scalar> using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar> using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Rng = std::mt19937_64;

inline constexpr Real kPi = std::numbers::pi_v<Real>;
inline constexpr Real kInf = std::numeric_limits<Real>::infinity();

// splitmix64 finaliser; derives independent sub-stream seeds from a master seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Real db_to_linear(Real db) { return std::pow(10.0, db / 10.0); }
inline Real dbm_to_watt(Real dbm) { return db_to_linear(dbm - 30.0); }

// Wraps an angle into [-pi, pi].
inline Real wrap_angle(Real a) {
  a = std::remainder(a, 2.0 * kPi);
  return a;
}

struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised when a target sits in a null of the transmit beam.
struct BeamMisalignment : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// More served vehicles than orthogonal subcarriers or antennas.
struct OverloadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace isac
