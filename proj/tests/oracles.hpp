#pragma once
// Hand-built worlds with known answers, shared by the unit tests and the acceptance runner.

#include "isac/mlp.hpp"
#include "isac/types.hpp"
#include "isac/voi.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace oracle {

using isac::Index;
using isac::Matrix;
using isac::Real;
using isac::Rng;
using isac::Vector;

inline constexpr Real kGaussianPairBits = 0.5 / 0.69314718055994530942;  // 0.7213

// a ~ N(0,1); numerator N(0,1), denominator N(1,1). Means ride in the condition vectors.
inline isac::voi::VoIRecord gaussian_pair(std::size_t samples, Rng& rng) {
  using namespace isac::voi;
  auto sampler = [](Rng& g) {
    std::normal_distribution<Real> n;
    return JointSample{Vector::Constant(1, n(g)), Vector::Zero(1), Vector::Ones(1)};
  };
  auto density = [](const Vector& a, const Vector& mean) {
    const Real r = a(0) - mean(0);
    return -0.5 * std::log(2.0 * isac::kPi) - 0.5 * r * r;
  };
  return kl_mc_estimate(sampler, density, density, samples, rng);
}

struct DiscreteCase {
  Matrix pair;         // P(i, j)
  Matrix numerator;    // P(a | i), drives the action
  Matrix denominator;  // Q(a | j)
  std::vector<isac::voi::DiscreteOutcome> joint;
};

inline Matrix random_stochastic(Index rows, Index cols, Rng& rng) {
  std::uniform_real_distribution<Real> u(0.05, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

inline DiscreteCase discrete_case(Index states, Rng& rng, bool independent = false) {
  DiscreteCase c;
  c.pair = random_stochastic(1, states * states, rng).reshaped(states, states);
  if (independent) {
    c.numerator = random_stochastic(1, states, rng).replicate(states, 1);
    c.denominator = c.numerator;
  } else {
    c.numerator = random_stochastic(states, states, rng);
    c.denominator = random_stochastic(states, states, rng);
  }
  for (Index i = 0; i < states; ++i)
    for (Index j = 0; j < states; ++j)
      for (Index a = 0; a < states; ++a)
        c.joint.push_back({c.pair(i, j) * c.numerator(i, a), static_cast<int>(i), static_cast<int>(j),
                           static_cast<int>(a)});
  return c;
}

inline isac::voi::VoIRecord discrete_mc(const DiscreteCase& c, std::size_t samples, Rng& rng) {
  using namespace isac::voi;
  std::vector<Real> w;
  for (const auto& o : c.joint) w.push_back(o.prob);
  auto sampler = [&c, pick = std::discrete_distribution<std::size_t>(w.begin(), w.end())](Rng& g) mutable {
    const auto& o = c.joint[pick(g)];
    return JointSample{Vector::Constant(1, o.action), Vector::Constant(1, o.numerator_state),
                       Vector::Constant(1, o.denominator_state)};
  };
  auto lookup = [](const Matrix& t) {
    return [&t](const Vector& a, const Vector& s) {
      return std::log(t(static_cast<Index>(s(0)), static_cast<Index>(a(0))));
    };
  };
  return kl_mc_estimate(sampler, lookup(c.numerator), lookup(c.denominator), samples, rng);
}

// Predecessor's next action copies the dependent source's state; the other source is unrelated.
struct CopyWorld {
  std::vector<isac::voi::TransitionRow> dependent;
  std::vector<isac::voi::TransitionRow> independent;
};

inline CopyWorld copy_world(std::size_t rows, Rng& rng, Index dim = 6) {
  std::normal_distribution<Real> n;
  auto draw = [&] {
    Vector v(dim);
    for (auto& x : v) x = n(rng);
    return v;
  };
  CopyWorld w;
  for (std::size_t t = 0; t < rows; ++t) {
    const Vector own = draw(), dep = draw(), ind = draw();
    Vector action(2);
    action << dep(0) + 0.1 * n(rng), 0.5 * dep(1) - dep(2) + 0.1 * n(rng);
    w.dependent.push_back({action, own, dep});
    w.independent.push_back({action, own, ind});
  }
  return w;
}

// Max relative error of backprop against long-double central differences of sum(w .* net(x)).
inline Real backprop_error(const std::vector<Index>& sizes, isac::marl::Activation out, Rng& rng) {
  using isac::marl::Mlp;
  using LD = long double;
  Mlp<> net(sizes, out, rng, 0.5);
  std::normal_distribution<Real> n;
  // zero biases behind a dead unit put pre-activations exactly on the ReLU kink
  for (auto& l : net.mutable_layers())
    for (auto& b : l.bias) b = 0.1 * n(rng);
  Matrix x(sizes.front(), 3), w(sizes.back(), 3);
  for (auto& v : x.reshaped()) v = n(rng);
  for (auto& v : w.reshaped()) v = n(rng);

  Mlp<>::Cache cache;
  net.forward(x, cache);
  const auto grads = net.backward(cache, w);
  Vector analytic(net.parameter_count());
  Index pos = 0;
  for (const auto& l : grads.layers) {
    analytic.segment(pos, l.weights.size()) = l.weights.reshaped();
    pos += l.weights.size();
    analytic.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }

  auto wide = Mlp<LD>::zeros(sizes, out);
  const isac::VectorT<LD> p0 = net.parameters().cast<LD>();
  const isac::MatrixT<LD> xl = x.cast<LD>(), wl = w.cast<LD>();
  auto loss = [&](const isac::VectorT<LD>& p) {
    wide.set_parameters(p);
    return wide.forward(xl).cwiseProduct(wl).sum();
  };
  const LD h = 1e-7L;
  Real worst = 0.0;
  for (Index i = 0; i < p0.size(); ++i) {
    isac::VectorT<LD> up = p0, dn = p0;
    up(i) += h;
    dn(i) -= h;
    const Real fd = static_cast<Real>((loss(up) - loss(dn)) / (2 * h));
    const Real scale = std::max({std::abs(fd), std::abs(analytic(i)), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic(i)) / scale);
  }
  return worst;
}

}  // namespace oracle
