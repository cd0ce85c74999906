#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "retrobranch/bnb.hpp"

namespace retrobranch {

inline constexpr double kLargeGain = 1e10;
inline constexpr double kScoreEps = 1e-6;

/// max(down, eps) * max(up, eps)
double product_score(double down_gain, double up_gain, double eps = kScoreEps);

/// Index into `scores` of the maximum; ties go to the first.
int argmax_first(std::span<const double> scores);

struct ProbeResult {
  double down_gain = 0.0;
  double up_gain = 0.0;
  double score = 0.0;
};

/// One-step lookahead on every candidate of ctx.node.  Probing counters in ctx
/// are incremented; probe LPs are warm-started from the node basis.
std::vector<ProbeResult> strong_branching_probe(BranchContext& ctx);

class StrongBranching : public BranchingPolicy {
 public:
  std::string name() const override { return "sb"; }
  int choose(BranchContext& ctx) override;
};

class PseudocostStats {
 public:
  enum Direction { down = 0, up = 1 };

  void resize(int num_vars);
  void update(int var, Direction dir, double unit_gain);
  int count(int var, Direction dir) const { return count_[dir][var]; }
  /// Mean unit gain, or the average over initialised variables (1.0 if none)
  /// when this variable has no observation in `dir`.
  double mean(int var, Direction dir) const;
  int num_vars() const { return static_cast<int>(sum_[0].size()); }

 private:
  std::vector<double> sum_[2];
  std::vector<int> count_[2];
  double global_sum_[2] = {0.0, 0.0};
  long global_count_[2] = {0, 0};
};

class PseudocostBranching : public BranchingPolicy {
 public:
  std::string name() const override { return "pb"; }
  int choose(BranchContext& ctx) override;
  void reset(const MilpInstance& inst) override { stats_ = {}; stats_.resize(inst.num_vars()); }
  void observe_children(const TreeNode& parent, int var, const LpResult& down, const LpResult& up) override;

  std::vector<double> scores(const TreeNode& node, std::span<const int> candidates) const;
  PseudocostStats& stats() { return stats_; }
  const PseudocostStats& stats() const { return stats_; }

 private:
  PseudocostStats stats_;
};

class RandomBranching : public BranchingPolicy {
 public:
  std::string name() const override { return "random"; }
  int choose(BranchContext& ctx) override;
};

class MostFractionalBranching : public BranchingPolicy {
 public:
  std::string name() const override { return "mostfrac"; }
  int choose(BranchContext& ctx) override;
};

int random_choose(std::span<const int> candidates, std::mt19937_64& rng);
int most_fractional_choose(const LpResult& lp, std::span<const int> candidates);

enum class ActingMode { greedy, epsilon_stochastic };

/// Pick among candidates given their Q-values (same order).  Greedy takes the
/// argmax; epsilon-stochastic explores uniformly with probability epsilon and
/// otherwise samples a softmax at `temperature`.
int neural_choose(std::span<const double> q, std::span<const int> candidates, ActingMode mode, double epsilon,
                  double temperature, std::mt19937_64& rng);

/// "sb", "pb", "random", "mostfrac".  Neural policies are built from a checkpoint elsewhere.
std::unique_ptr<BranchingPolicy> make_classical_policy(const std::string& name);

}  // namespace retrobranch
