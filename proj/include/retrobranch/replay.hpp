#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "retrobranch/retro.hpp"

namespace retrobranch {

/// Binary sum tree over a fixed number of leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  void set(std::size_t i, double value);
  double get(std::size_t i) const { return nodes_[leaf0_ + i]; }
  double total() const { return nodes_[1]; }
  /// Smallest leaf i with prefix sum through i > `mass`; clamps to the last
  /// non-zero leaf when rounding pushes `mass` past the total.
  std::size_t find(double mass) const;
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t leaf0_;
  std::vector<double> nodes_;
};

/// A transition whose reward is already rolled over up to n steps.
struct NStepTransition {
  std::shared_ptr<const BipartiteState> state;
  int action = -1;
  double reward = 0.0;  // sum_k gamma^k r_{t+k}
  std::shared_ptr<const BipartiteState> bootstrap;  // s_{t+n}, null when the window hit done
  double discount = 0.0;                            // gamma^n, or 0 when terminal
};

/// Windows never cross the end of `trajectory`; a window reaching it is terminal.
std::vector<NStepTransition> n_step_transitions(const std::vector<Transition>& trajectory, int n, double gamma);

/// Proportional prioritised replay with max-priority insertion.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, double alpha, double min_priority);

  void add(NStepTransition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const NStepTransition& at(std::size_t i) const { return items_.at(i); }
  double priority(std::size_t i) const { return priority_.at(i); }
  double max_priority() const { return max_priority_; }
  /// P(i) = p_i^alpha / sum_j p_j^alpha
  double probability(std::size_t i) const;

  struct Sample {
    std::vector<std::size_t> indices;
    std::vector<double> weights;  // (N P(i))^-beta / max over the batch
  };
  /// Throws ContractError if fewer than `min_size` items are stored.
  Sample sample(std::size_t batch, double beta, std::mt19937_64& rng, std::size_t min_size = 1) const;
  /// p_i <- |td_i| + min_priority
  void update_priorities(std::span<const std::size_t> indices, std::span<const double> td);

 private:
  std::size_t capacity_;
  double alpha_;
  double min_priority_;
  double max_priority_ = 1.0;
  std::size_t next_ = 0;
  std::vector<NStepTransition> items_;
  std::vector<double> priority_;
  SumTree tree_;
};

}  // namespace retrobranch
