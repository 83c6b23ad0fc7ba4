#pragma once

#include "isac/types.hpp"
#include "isac/voi.hpp"

#include <vector>

namespace isac::marl {

using voi::Timescale;

struct Transition {
  Vector state;
  Vector action;
  Real reward = 0.0;
  Vector next_state;
  Vector extra;       // centralised-critic context (may be empty)
  Vector next_extra;
  Timescale timescale = Timescale::Short;
};

/// Fixed-capacity FIFO ring. Storage grows on demand up to the capacity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {
    if (capacity == 0) throw InvalidInput("ReplayBuffer: capacity must be positive");
  }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }

  /// i-th stored transition, oldest first.
  const Transition& at(std::size_t i) const { return data_.at((head_ + i) % data_.size()); }

  /// Uniform sampling with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
    if (data_.empty()) throw InvalidInput("ReplayBuffer: cannot sample from an empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = pick(rng);
    return idx;
  }

  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (auto i : sample_indices(batch, rng)) out.push_back(&data_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

}  // namespace isac::marl
