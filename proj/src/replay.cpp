#include "retrobranch/replay.hpp"

#include <algorithm>
#include <cmath>

#include "retrobranch/errors.hpp"

namespace retrobranch {

SumTree::SumTree(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ParameterError("sum tree capacity must be positive");
  leaf0_ = 1;
  while (leaf0_ < capacity) leaf0_ <<= 1;
  nodes_.assign(2 * leaf0_, 0.0);
}

void SumTree::set(std::size_t i, double value) {
  if (i >= capacity_) throw ContractError("sum tree index out of range");
  std::size_t k = leaf0_ + i;
  nodes_[k] = value;
  for (k >>= 1; k >= 1; k >>= 1) nodes_[k] = nodes_[2 * k] + nodes_[2 * k + 1];
}

std::size_t SumTree::find(double mass) const {
  std::size_t k = 1;
  while (k < leaf0_) {
    const double left = nodes_[2 * k];
    if (mass < left || nodes_[2 * k + 1] <= 0.0) {
      k = 2 * k;
    } else {
      mass -= left;
      k = 2 * k + 1;
    }
  }
  std::size_t i = k - leaf0_;
  while (i > 0 && (i >= capacity_ || nodes_[leaf0_ + i] <= 0.0)) --i;
  return i;
}

std::vector<NStepTransition> n_step_transitions(const std::vector<Transition>& trajectory, int n, double gamma) {
  if (n < 1) throw ParameterError("n-step horizon must be >= 1");
  std::vector<NStepTransition> out;
  const std::size_t len = trajectory.size();
  for (std::size_t t = 0; t < len; ++t) {
    NStepTransition nt;
    nt.state = trajectory[t].state;
    nt.action = trajectory[t].action;
    double g = 1.0;
    std::size_t k = 0;
    bool terminal = false;
    for (; k < static_cast<std::size_t>(n) && t + k < len; ++k) {
      nt.reward += g * trajectory[t + k].reward;
      g *= gamma;
      if (trajectory[t + k].done) {
        terminal = true;
        ++k;
        break;
      }
    }
    if (!terminal && t + k < len) {
      nt.bootstrap = trajectory[t + k].state;
      nt.discount = g;
    }
    out.push_back(std::move(nt));
  }
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, double alpha, double min_priority)
    : capacity_(capacity), alpha_(alpha), min_priority_(min_priority), tree_(capacity) {
  if (alpha < 0.0) throw ParameterError("priority exponent must be non-negative");
  if (min_priority <= 0.0) throw ParameterError("min priority must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::add(NStepTransition t) {
  const double p = std::max(max_priority_, min_priority_);
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    priority_.push_back(p);
  } else {
    items_[next_] = std::move(t);
    priority_[next_] = p;
  }
  tree_.set(next_, std::pow(p, alpha_));
  next_ = (next_ + 1) % capacity_;
}

double ReplayBuffer::probability(std::size_t i) const { return tree_.get(i) / tree_.total(); }

ReplayBuffer::Sample ReplayBuffer::sample(std::size_t batch, double beta, std::mt19937_64& rng,
                                          std::size_t min_size) const {
  if (items_.empty() || items_.size() < min_size)
    throw ContractError("replay buffer holds " + std::to_string(items_.size()) + " transitions, need " +
                        std::to_string(std::max<std::size_t>(min_size, 1)));
  Sample s;
  std::uniform_real_distribution<double> u(0.0, tree_.total());
  const double n = static_cast<double>(items_.size());
  double max_w = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t i = tree_.find(u(rng));
    const double w = std::pow(n * probability(i), -beta);
    s.indices.push_back(i);
    s.weights.push_back(w);
    max_w = std::max(max_w, w);
  }
  for (double& w : s.weights) w /= max_w;
  return s;
}

void ReplayBuffer::update_priorities(std::span<const std::size_t> indices, std::span<const double> td) {
  if (indices.size() != td.size()) throw ContractError("update_priorities: size mismatch");
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= items_.size()) throw ContractError("update_priorities: index out of range");
    const double p = std::abs(td[k]) + min_priority_;
    if (!std::isfinite(p)) throw TrainingError("non-finite TD error for replay index " + std::to_string(i));
    priority_[i] = p;
    max_priority_ = std::max(max_priority_, p);
    tree_.set(i, std::pow(p, alpha_));
  }
}

}  // namespace retrobranch
