#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "retrobranch/bnb.hpp"
#include "retrobranch/features.hpp"

namespace retrobranch {

enum class LeafHeuristic { mlpg, random, visitation_order, deepest };

const char* to_string(LeafHeuristic h);
LeafHeuristic leaf_heuristic_from_string(const std::string& name);

inline constexpr double kInfeasibleLeafGain = 1e10;

struct RetroTrajectory {
  std::vector<NodeId> nodes;  // branched nodes, root of the sub-tree first
  NodeId leaf = -1;           // destination leaf (-1 for full episodes)
  std::vector<double> rewards;
  std::vector<bool> done;

  int length() const { return static_cast<int>(nodes.size()); }
  double undiscounted_return() const;
};

struct RetroOptions {
  LeafHeuristic heuristic = LeafHeuristic::mlpg;
  std::uint64_t seed = 0;
  // When false the last step of every trajectory earns 0 regardless of
  // whether the sibling of the destination leaf was fathomed.
  bool terminal_zero_requires_both_fathomed = true;
};

struct RetroResult {
  std::vector<RetroTrajectory> trajectories;
  long dropped_nodes = 0;  // branched nodes with no eligible leaf below them
};

/// Eligible destination leaves of the sub-tree rooted at `root`: fathomed
/// leaves reachable through branched nodes.  Ascending ids.
std::vector<NodeId> eligible_leaves(const SearchTree& tree, NodeId root);

/// Pick one of `eligible` (non-empty) for a trajectory rooted at `root`.
NodeId select_leaf(const SearchTree& tree, NodeId root, std::span<const NodeId> eligible, LeafHeuristic heuristic,
                   std::mt19937_64& rng);

RetroResult construct_trajectories(const SearchTree& tree, const RetroOptions& options = {});

/// All branched nodes in visit order as one trajectory.  The last step earns 0
/// only if the solve closed the tree.
RetroTrajectory full_episode(const SearchTree& tree, bool solved);

struct Transition {
  std::shared_ptr<const BipartiteState> state;
  int action = -1;
  double reward = 0.0;
  std::shared_ptr<const BipartiteState> next_state;  // null when done
  bool done = false;
};

/// Needs states captured at focus time on every trajectory node.
std::vector<Transition> emit_transitions(const RetroTrajectory& trajectory, const SearchTree& tree);

/// JSON lines {instance, trajectory, step, node, action, reward, done}.
std::string dump_transitions_jsonl(const std::string& instance, const std::vector<RetroTrajectory>& trajectories,
                                   const SearchTree& tree);

}  // namespace retrobranch
