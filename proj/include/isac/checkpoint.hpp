#pragma once

#include "isac/ddpg.hpp"

#include <string>
#include <vector>

namespace isac::marl {

inline constexpr int kCheckpointVersion = 1;

/// Unreadable, truncated or mismatched checkpoint.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NetworkSet {
  std::string agent;  // bundle name
  Timescale timescale = Timescale::Long;
  Mlp<> actor, critic, target_actor, target_critic;
};

struct SelectionEntry {
  int vehicle = 0;
  Timescale timescale = Timescale::Long;
  std::vector<int> sources;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  int episode = 0;
  std::vector<NetworkSet> networks;
  std::string rng_state;  // textual std::mt19937_64 state
  std::vector<SelectionEntry> selections;
};

Checkpoint capture(const std::vector<AgentBundle>& bundles, int episode, const Rng& rng,
                   std::vector<SelectionEntry> selections = {});

/// Copies network parameters into matching agents; every learner must be covered with equal shapes.
void restore(std::vector<AgentBundle>& bundles, const Checkpoint& ck);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

std::string serialize(const Checkpoint& ck);
Checkpoint deserialize(const std::string& text);

std::uint64_t fnv1a(const std::string& bytes);

/// Agent names, layer shapes, parameter norms and a hash of the rng state, one item per line.
std::string summarize(const Checkpoint& ck);

}  // namespace isac::marl
