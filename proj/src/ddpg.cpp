#include "isac/ddpg.hpp"

#include <cmath>

namespace isac::marl {

namespace {

std::vector<Index> layer_sizes(Index in, const std::vector<Index>& hidden, Index out) {
  std::vector<Index> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

void clip_gradients(Mlp<>::Gradients& g, Real max_norm) {
  if (max_norm <= 0.0) return;
  const Real n = std::sqrt(g.squared_norm());
  if (n > max_norm) g.scale(max_norm / n);
}

}  // namespace

DdpgAgent::DdpgAgent(std::string name, AgentConfig config, std::uint64_t seed)
    : name_(std::move(name)),
      cfg_(std::move(config)),
      actor_opt_(cfg_.actor_lr),
      critic_opt_(cfg_.critic_lr),
      buffer_(cfg_.capacity),
      rng_(seed) {
  if (cfg_.action_low.size() == 0) cfg_.action_low = Vector::Constant(cfg_.action_dim, -1.0);
  if (cfg_.action_high.size() == 0) cfg_.action_high = Vector::Constant(cfg_.action_dim, 1.0);
  if (cfg_.action_low.size() != cfg_.action_dim || cfg_.action_high.size() != cfg_.action_dim)
    throw InvalidInput("DdpgAgent: action bounds do not match the action dimension");
  if (!(cfg_.gamma >= 0.0 && cfg_.gamma < 1.0)) throw InvalidInput("DdpgAgent: gamma must lie in [0, 1)");
  if (!(cfg_.tau > 0.0 && cfg_.tau < 1.0)) throw InvalidInput("DdpgAgent: tau must lie in (0, 1)");
  center_ = 0.5 * (cfg_.action_high + cfg_.action_low);
  half_ = 0.5 * (cfg_.action_high - cfg_.action_low);

  actor_ = Mlp<>(layer_sizes(cfg_.obs_dim, cfg_.hidden, cfg_.action_dim), Activation::Tanh, rng_);
  critic_ = Mlp<>(layer_sizes(cfg_.extra_dim + cfg_.obs_dim + cfg_.action_dim, cfg_.hidden, 1),
                  Activation::Linear, rng_);
  target_actor_ = actor_;
  target_critic_ = critic_;
}

Matrix DdpgAgent::scale_actions(const Matrix& tanh_out) const {
  return (tanh_out.array().colwise() * half_.array()).colwise() + center_.array();
}

Matrix DdpgAgent::critic_input(const Matrix& extra, const Matrix& states, const Matrix& actions) const {
  Matrix in(cfg_.extra_dim + cfg_.obs_dim + cfg_.action_dim, states.cols());
  if (cfg_.extra_dim > 0) in.topRows(cfg_.extra_dim) = extra;
  in.middleRows(cfg_.extra_dim, cfg_.obs_dim) = states;
  in.bottomRows(cfg_.action_dim) = actions;
  return in;
}

Vector DdpgAgent::policy(const Vector& state) const {
  return scale_actions(actor_.forward(Matrix(state))).col(0);
}

Vector DdpgAgent::act(const Vector& state, Real noise_scale, Rng& rng) const {
  Vector a = policy(state);
  if (noise_scale > 0.0) {
    std::normal_distribution<Real> unit(0.0, 1.0);
    for (Index i = 0; i < a.size(); ++i) a(i) += noise_scale * half_(i) * unit(rng);
  }
  return a.cwiseMax(cfg_.action_low).cwiseMin(cfg_.action_high);
}

namespace {

struct Batch {
  Matrix s, a, s2, x, x2;
  Vector r;
};

Batch gather(std::span<const Transition* const> batch, const AgentConfig& cfg) {
  const Index n = static_cast<Index>(batch.size());
  Batch b{Matrix(cfg.obs_dim, n), Matrix(cfg.action_dim, n), Matrix(cfg.obs_dim, n),
          Matrix(cfg.extra_dim, n), Matrix(cfg.extra_dim, n), Vector(n)};
  for (Index i = 0; i < n; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(i)];
    if (t.state.size() != cfg.obs_dim || t.next_state.size() != cfg.obs_dim || t.action.size() != cfg.action_dim ||
        t.extra.size() != cfg.extra_dim || t.next_extra.size() != cfg.extra_dim)
      throw InvalidInput("DdpgAgent: transition does not match the agent schema");
    b.s.col(i) = t.state;
    b.a.col(i) = t.action;
    b.s2.col(i) = t.next_state;
    b.x.col(i) = t.extra;
    b.x2.col(i) = t.next_extra;
    b.r(i) = t.reward * cfg.reward_scale;
  }
  return b;
}

}  // namespace

Real DdpgAgent::critic_update(std::span<const Transition* const> batch) {
  if (batch.empty()) throw InvalidInput("critic_update: empty batch");
  const Batch b = gather(batch, cfg_);
  const Real n = static_cast<Real>(batch.size());

  Vector y = b.r;
  if (cfg_.gamma > 0.0) {
    const Matrix a2 = scale_actions(target_actor_.forward(b.s2));
    y += cfg_.gamma * target_critic_.forward(critic_input(b.x2, b.s2, a2)).row(0).transpose();
  }
  Mlp<>::Cache cache;
  const Matrix q = critic_.forward(critic_input(b.x, b.s, b.a), cache);
  const Matrix err = q - y.transpose();
  const Real loss = err.squaredNorm() / n;
  auto grads = critic_.backward(cache, 2.0 * err / n);
  clip_gradients(grads, cfg_.grad_clip);
  critic_opt_.step(critic_, grads);
  return loss;
}

Real DdpgAgent::policy_gradient_step(const Matrix& states, const Matrix& action_grad) {
  const Real n = static_cast<Real>(states.cols());
  Mlp<>::Cache cache;
  actor_.forward(states, cache);
  // minimise -mean Q: dL/d(tanh out) = -half * dQ/da / n
  const Matrix grad_out = -(action_grad.array().colwise() * half_.array()).matrix() / n;
  auto grads = actor_.backward(cache, grad_out);
  const Real norm = std::sqrt(grads.squared_norm());
  clip_gradients(grads, cfg_.grad_clip);
  actor_opt_.step(actor_, grads);
  return norm;
}

Real DdpgAgent::actor_update(std::span<const Transition* const> batch) {
  if (batch.empty()) throw InvalidInput("actor_update: empty batch");
  const Batch b = gather(batch, cfg_);
  const Matrix a = scale_actions(actor_.forward(b.s));
  Mlp<>::Cache cache;
  critic_.forward(critic_input(b.x, b.s, a), cache);
  const auto g = critic_.backward(cache, Matrix::Ones(1, a.cols()));
  const Matrix dq_da = g.input.bottomRows(cfg_.action_dim);
  return policy_gradient_step(b.s, dq_da);
}

void DdpgAgent::soft_update_targets() {
  soft_update(actor_, target_actor_, cfg_.tau);
  soft_update(critic_, target_critic_, cfg_.tau);
}

LearnStats DdpgAgent::learn() {
  if (buffer_.empty()) throw InvalidInput("DdpgAgent::learn: empty replay buffer");
  const auto batch = buffer_.sample(cfg_.batch, rng_);
  LearnStats s;
  s.critic_loss = critic_update(batch);
  s.actor_grad_norm = actor_update(batch);
  soft_update_targets();
  if (!all_finite()) throw DivergenceError("agent " + name_ + " produced non-finite parameters");
  return s;
}

bool DdpgAgent::all_finite() const {
  return actor_.all_finite() && critic_.all_finite() && target_actor_.all_finite() && target_critic_.all_finite();
}

}  // namespace isac::marl
