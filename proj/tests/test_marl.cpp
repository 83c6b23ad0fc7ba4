#include "isac/checkpoint.hpp"
#include "isac/ddpg.hpp"
#include "isac/two_timescale.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace isac;
using namespace isac::marl;

TEST_CASE("backprop matches finite differences") {
  Rng rng(1);
  const std::vector<std::vector<Index>> archs{{3, 5, 2}, {1, 8, 8, 1}, {6, 4, 3}, {2, 16, 1}, {4, 7, 7, 7, 2}};
  for (const auto& sizes : archs)
    for (auto act : {Activation::Tanh, Activation::Linear}) CHECK(oracle::backprop_error(sizes, act, rng) < 1e-4);
}

TEST_CASE("MLP special cases") {
  Rng rng(2);
  const auto z = Mlp<>::zeros({3, 4, 2}, Activation::Tanh);
  CHECK(z.forward_one(Vector::Ones(3)).isZero());

  Mlp<> lin({2, 3}, Activation::Linear, rng, 1.0);
  const Vector x = Vector::LinSpaced(2, -1, 2);
  const auto& L = lin.layers()[0];
  CHECK((lin.forward_one(x) - (L.weights * x + L.bias)).norm() < 1e-15);

  CHECK_THROWS_AS(lin.forward_one(Vector::Zero(3)), InvalidInput);
  Mlp<>::Cache cache;
  lin.forward(Matrix(x), cache);
  lin.mutable_layers();
  CHECK_THROWS_AS(lin.backward(cache, Matrix::Ones(3, 1)), InvalidInput);
}

TEST_CASE("actions stay inside the box") {
  AgentConfig cfg;
  cfg.obs_dim = 2;
  cfg.action_dim = 2;
  cfg.action_low = Vector::Constant(2, -3.0);
  cfg.action_high = Vector::Constant(2, 1.0);
  cfg.hidden = {8};
  DdpgAgent agent("a", cfg, 3);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Vector a = agent.act(Vector::Random(2) * 100, 5.0, rng);
    CHECK((a.array() >= -3.0).all());
    CHECK((a.array() <= 1.0).all());
  }
  // saturate the output layer
  for (auto& l : agent.actor().mutable_layers()) l.bias.setConstant(50.0);
  CHECK(agent.policy(Vector::Zero(2)).isApprox(Vector::Constant(2, 1.0)));
}

TEST_CASE("critic and actor solve a one-step bandit") {
  AgentConfig cfg;
  cfg.obs_dim = 1;
  cfg.action_dim = 1;
  cfg.hidden = {32, 32};
  cfg.gamma = 0.0;
  cfg.actor_lr = 1e-3;
  cfg.critic_lr = 1e-3;
  cfg.batch = 64;
  DdpgAgent agent("bandit", cfg, 5);
  Rng rng(6);
  std::uniform_real_distribution<Real> u(-1, 1);
  for (int i = 0; i < 1000; ++i) {
    const Real a = u(rng);
    agent.store({Vector::Ones(1), Vector::Constant(1, a), -(a - 0.5) * (a - 0.5), Vector::Ones(1)});
  }
  LearnStats s;
  for (int i = 0; i < 3000; ++i) s = agent.learn();
  CHECK(s.critic_loss < 1e-3);
  CHECK(agent.policy(Vector::Ones(1))(0) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("soft update closed form") {
  Rng rng(7);
  Mlp<> main({3, 6, 2}, Activation::Tanh, rng, 1.0), target({3, 6, 2}, Activation::Tanh, rng, 1.0);
  const Vector m = main.parameters(), t0 = target.parameters();
  const Real tau = 0.05;
  const int n = 37;
  for (int i = 0; i < n; ++i) soft_update(main, target, tau);
  const Real keep = std::pow(1.0 - tau, n);
  const Vector expect = keep * t0 + (1.0 - keep) * m;
  CHECK((target.parameters() - expect).cwiseAbs().maxCoeff() < 1e-12);

  soft_update(main, target, 1.0);
  CHECK(target.parameters() == main.parameters());
  CHECK_THROWS_AS(soft_update(main, target, 0.0), InvalidInput);
  Mlp<> other({3, 5, 2}, Activation::Tanh, rng);
  CHECK_THROWS_AS(soft_update(main, other, 0.1), InvalidInput);
}

TEST_CASE("replay buffer") {
  ReplayBuffer buf(3);
  CHECK_THROWS_AS(ReplayBuffer(0), InvalidInput);
  Rng rng(8);
  CHECK_THROWS_AS(buf.sample(1, rng), InvalidInput);
  for (int i = 0; i < 5; ++i) buf.push({Vector::Constant(1, i), Vector::Zero(1), Real(i), Vector::Zero(1)});
  CHECK(buf.size() == 3);
  CHECK(buf.at(0).reward == 2.0);
  CHECK(buf.at(2).reward == 4.0);
  for (auto* t : buf.sample(50, rng)) CHECK(t->reward >= 2.0);
}

namespace {

// Agent 0 acts on both cadences, agent 1 only on the short one.
class ToyEnv : public TwoTimescaleEnv {
 public:
  std::size_t agent_count() const override { return 2; }
  int long_steps() const override { return 3; }
  int short_steps() const override { return 5; }
  void reset(int, bool) override { x_ = 0.0; }
  Vector observe(std::size_t, Timescale) const override { return Vector::Constant(1, x_); }
  void apply_long(std::span<const std::optional<Vector>> a) override {
    REQUIRE(a[0].has_value());
    CHECK_FALSE(a[1].has_value());
    ++long_calls;
  }
  std::vector<Real> apply_short(std::span<const std::optional<Vector>> a) override {
    x_ += 0.1 * (*a[0])(0);
    ++short_calls;
    return {-x_ * x_, -std::abs((*a[1])(0))};
  }
  std::vector<Real> long_rewards() override { return {-x_ * x_, 0.0}; }
  int long_calls = 0, short_calls = 0;

 private:
  Real x_ = 0.0;
};

std::vector<AgentBundle> toy_bundles() {
  AgentConfig cfg;
  cfg.hidden = {8};
  cfg.batch = 4;
  std::vector<AgentBundle> b(2);
  b[0].name = "a0";
  b[0].long_agent.emplace("a0", cfg, 1);
  b[0].short_agent.emplace("a0", cfg, 2);
  b[1].name = "a1";
  b[1].short_agent.emplace("a1", cfg, 3);
  return b;
}

}  // namespace

TEST_CASE("two-time-scale accounting") {
  ToyEnv env;
  auto bundles = toy_bundles();
  Schedule sch;
  sch.episodes = 4;
  sch.warmup_long = 4;
  sch.warmup_short = 4;
  Rng rng(9);
  const auto logs = train(env, bundles, sch, rng);
  REQUIRE(logs.size() == 4);
  CHECK(env.long_calls == 12);
  CHECK(env.short_calls == 60);
  for (const auto& l : logs) {
    CHECK(l.long_slots == 3);
    CHECK(l.short_slots == 15);
    CHECK(l.agents[0].long_transitions == 3);
    CHECK(l.agents[0].short_transitions == 15);
    CHECK(l.agents[1].long_transitions == 0);
  }
  CHECK(bundles[0].long_agent->buffer().size() == 12);
  CHECK(bundles[1].short_agent->buffer().size() == 60);
  CHECK(logs.back().agents[0].learn_steps > 0);

  Schedule frozen = sch;
  frozen.learn = false;
  const auto before = bundles[0].long_agent->actor().parameters();
  train(env, bundles, frozen, rng);
  CHECK(bundles[0].long_agent->actor().parameters() == before);
  CHECK(bundles[0].long_agent->buffer().size() == 12);
}

TEST_CASE("training is deterministic") {
  auto run = [] {
    ToyEnv env;
    auto b = toy_bundles();
    Schedule sch;
    sch.episodes = 3;
    sch.warmup_long = 2;
    sch.warmup_short = 4;
    Rng rng(11);
    train(env, b, sch, rng);
    return b[0].long_agent->actor().parameters();
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round trip") {
  auto bundles = toy_bundles();
  Rng rng(12);
  rng.discard(17);
  const auto ck = capture(bundles, 5, rng, {{0, Timescale::Long, {2, 3}}});
  const auto dir = std::filesystem::temp_directory_path() / "isac_ck_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "ck").string();
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  CHECK(back.episode == 5);
  CHECK(back.rng_state == ck.rng_state);
  REQUIRE(back.selections.size() == 1);
  CHECK(back.selections[0].sources == std::vector<int>{2, 3});
  CHECK(serialize(back) == serialize(ck));

  auto fresh = toy_bundles();
  for (auto& l : fresh[0].long_agent->actor().mutable_layers()) l.weights.setZero();
  restore(fresh, back);
  CHECK(fresh[0].long_agent->actor().parameters() == bundles[0].long_agent->actor().parameters());
  CHECK(fresh[1].short_agent->target_critic().parameters() == bundles[1].short_agent->target_critic().parameters());

  // fresh networks carry zero biases
  CHECK(summarize(ck).find("|b|=0\n") != std::string::npos);

  std::string text = serialize(ck);
  text.resize(text.size() / 2);
  CHECK_THROWS_AS(deserialize(text), CheckpointError);
  std::ofstream(path) << text;
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  std::vector<AgentBundle> partial(1);
  partial[0].name = "a0";
  AgentConfig cfg;
  cfg.hidden = {9};
  partial[0].long_agent.emplace("a0", cfg, 1);
  CHECK_THROWS_AS(restore(partial, ck), CheckpointError);
  std::filesystem::remove_all(dir);
}
