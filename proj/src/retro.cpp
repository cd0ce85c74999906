#include "retrobranch/retro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "retrobranch/errors.hpp"

namespace retrobranch {

const char* to_string(LeafHeuristic h) {
  switch (h) {
    case LeafHeuristic::mlpg: return "mlpg";
    case LeafHeuristic::random: return "random";
    case LeafHeuristic::visitation_order: return "visitation_order";
    case LeafHeuristic::deepest: return "deepest";
  }
  return "?";
}

LeafHeuristic leaf_heuristic_from_string(const std::string& name) {
  if (name == "mlpg") return LeafHeuristic::mlpg;
  if (name == "random") return LeafHeuristic::random;
  if (name == "visitation_order" || name == "vo") return LeafHeuristic::visitation_order;
  if (name == "deepest") return LeafHeuristic::deepest;
  throw ParameterError("unknown construction heuristic '" + name +
                       "' (expected mlpg, random, visitation_order or deepest)");
}

double RetroTrajectory::undiscounted_return() const { return std::accumulate(rewards.begin(), rewards.end(), 0.0); }

std::vector<NodeId> eligible_leaves(const SearchTree& tree, NodeId root) {
  std::vector<NodeId> out;
  std::vector<NodeId> stack = {root};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    const TreeNode& n = tree.node(id);
    if (n.status == NodeStatus::branched) {
      for (const auto& c : n.children)
        if (c) stack.push_back(*c);
    } else if (is_fathomed(n.status) && id != root) {
      out.push_back(id);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

NodeId select_leaf(const SearchTree& tree, NodeId root, std::span<const NodeId> eligible, LeafHeuristic heuristic,
                   std::mt19937_64& rng) {
  if (eligible.empty()) throw ContractError("select_leaf: no eligible leaf below node " + std::to_string(root));
  std::vector<NodeId> leaves(eligible.begin(), eligible.end());
  std::sort(leaves.begin(), leaves.end());
  if (heuristic == LeafHeuristic::random) {
    std::uniform_int_distribution<std::size_t> pick(0, leaves.size() - 1);
    return leaves[pick(rng)];
  }
  // Every other heuristic maximises a key; strict comparison keeps the lowest id on ties.
  auto key = [&](NodeId id) -> double {
    const TreeNode& leaf = tree.node(id);
    switch (heuristic) {
      case LeafHeuristic::mlpg:
        if (leaf.status == NodeStatus::fathomed_infeasible) return kInfeasibleLeafGain;
        return std::abs(tree.node(root).dual_bound - leaf.dual_bound);
      case LeafHeuristic::deepest:
        return static_cast<double>(leaf.depth);
      case LeafHeuristic::visitation_order: {
        const auto& vo = tree.node(*leaf.parent).visit_order;
        return vo ? -static_cast<double>(*vo) : -std::numeric_limits<double>::infinity();
      }
      case LeafHeuristic::random: break;
    }
    return 0.0;
  };
  NodeId best = leaves.front();
  double best_key = key(best);
  for (std::size_t i = 1; i < leaves.size(); ++i) {
    const double k = key(leaves[i]);
    if (k > best_key) {
      best = leaves[i];
      best_key = k;
    }
  }
  return best;
}

namespace {

bool both_children_fathomed(const SearchTree& tree, NodeId id) {
  const TreeNode& n = tree.node(id);
  for (const auto& c : n.children)
    if (!c || !is_fathomed(tree.node(*c).status)) return false;
  return true;
}

}  // namespace

RetroResult construct_trajectories(const SearchTree& tree, const RetroOptions& options) {
  RetroResult result;
  std::mt19937_64 rng(options.seed);
  // Branched nodes, highest level first.  Open nodes that were never focused
  // are simply never reached: they are neither branched nor fathomed.
  std::vector<NodeId> order;
  for (const TreeNode& n : tree.nodes)
    if (n.status == NodeStatus::branched) order.push_back(n.id);
  std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
    const int da = tree.node(a).depth, db = tree.node(b).depth;
    return da != db ? da < db : a < b;
  });
  std::vector<bool> assigned(static_cast<std::size_t>(tree.size()), false);
  for (NodeId root : order) {
    if (assigned[root]) continue;
    const std::vector<NodeId> leaves = eligible_leaves(tree, root);
    if (leaves.empty()) {
      assigned[root] = true;
      ++result.dropped_nodes;
      continue;
    }
    const NodeId leaf = select_leaf(tree, root, leaves, options.heuristic, rng);
    RetroTrajectory t;
    t.leaf = leaf;
    for (NodeId id = *tree.node(leaf).parent;; id = *tree.node(id).parent) {
      t.nodes.push_back(id);
      assigned[id] = true;
      if (id == root) break;
    }
    std::reverse(t.nodes.begin(), t.nodes.end());
    t.rewards.assign(t.nodes.size(), -1.0);
    t.done.assign(t.nodes.size(), false);
    t.done.back() = true;
    if (!options.terminal_zero_requires_both_fathomed || both_children_fathomed(tree, t.nodes.back()))
      t.rewards.back() = 0.0;
    result.trajectories.push_back(std::move(t));
  }
  return result;
}

RetroTrajectory full_episode(const SearchTree& tree, bool solved) {
  RetroTrajectory t;
  std::vector<std::pair<long, NodeId>> visits;
  for (const TreeNode& n : tree.nodes)
    if (n.visit_order && n.status == NodeStatus::branched) visits.push_back({*n.visit_order, n.id});
  std::sort(visits.begin(), visits.end());
  for (const auto& v : visits) t.nodes.push_back(v.second);
  t.rewards.assign(t.nodes.size(), -1.0);
  t.done.assign(t.nodes.size(), false);
  if (!t.nodes.empty()) {
    t.done.back() = true;
    if (solved) t.rewards.back() = 0.0;
  }
  return t;
}

std::vector<Transition> emit_transitions(const RetroTrajectory& trajectory, const SearchTree& tree) {
  std::vector<Transition> out;
  for (std::size_t k = 0; k < trajectory.nodes.size(); ++k) {
    const TreeNode& n = tree.node(trajectory.nodes[k]);
    if (!n.state) throw ContractError("node " + std::to_string(n.id) + " has no captured state");
    if (!n.branch_var) throw ContractError("node " + std::to_string(n.id) + " was never branched");
    Transition tr;
    tr.state = n.state;
    tr.action = *n.branch_var;
    tr.reward = trajectory.rewards[k];
    tr.done = trajectory.done[k];
    if (!tr.done) {
      const TreeNode& next = tree.node(trajectory.nodes[k + 1]);
      if (!next.state) throw ContractError("node " + std::to_string(next.id) + " has no captured state");
      tr.next_state = next.state;
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::string dump_transitions_jsonl(const std::string& instance, const std::vector<RetroTrajectory>& trajectories,
                                   const SearchTree& tree) {
  std::ostringstream out;
  for (std::size_t t = 0; t < trajectories.size(); ++t) {
    const auto& tr = trajectories[t];
    for (std::size_t k = 0; k < tr.nodes.size(); ++k) {
      const TreeNode& n = tree.node(tr.nodes[k]);
      nlohmann::json j = {{"instance", instance},
                          {"trajectory", t},
                          {"step", k},
                          {"node", n.id},
                          {"action", n.branch_var ? *n.branch_var : -1},
                          {"reward", tr.rewards[k]},
                          {"done", static_cast<bool>(tr.done[k])}};
      out << j.dump() << "\n";
    }
  }
  return out.str();
}

}  // namespace retrobranch
