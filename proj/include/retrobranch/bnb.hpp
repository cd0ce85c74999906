#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "retrobranch/lp.hpp"
#include "retrobranch/milp.hpp"
#include "retrobranch/tree_context.hpp"

namespace retrobranch {

struct BipartiteState;
struct GraphStructure;

using NodeId = int;

enum class NodeStatus { open, branched, fathomed_integral, fathomed_infeasible, fathomed_bound };

const char* to_string(NodeStatus s);
inline bool is_fathomed(NodeStatus s) {
  return s == NodeStatus::fathomed_integral || s == NodeStatus::fathomed_infeasible ||
         s == NodeStatus::fathomed_bound;
}

struct TreeNode {
  NodeId id = 0;
  std::optional<NodeId> parent;
  int depth = 0;
  LocalBounds bounds;
  std::optional<LpResult> lp;
  double dual_bound = -kInf;
  NodeStatus status = NodeStatus::open;
  std::array<std::optional<NodeId>, 2> children;  // {down, up}
  std::optional<int> branch_var;
  std::optional<long> visit_order;
  bool best_at_focus = false;                    // was the best open node when focused
  std::shared_ptr<const BipartiteState> state;  // captured at focus time when observed

  bool is_leaf() const { return !children[0] && !children[1]; }
};

/// Full search tree of one solve.  Node ids are creation order; the root is 0.
struct SearchTree {
  const MilpInstance* instance = nullptr;
  std::vector<TreeNode> nodes;
  TreeContext context;
  std::shared_ptr<const GraphStructure> graph;  // encoder topology, built on first use

  TreeNode& node(NodeId id) { return nodes.at(static_cast<std::size_t>(id)); }
  const TreeNode& node(NodeId id) const { return nodes.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(nodes.size()); }
  std::optional<NodeId> sibling(NodeId id) const;
  int max_depth() const;
};

enum class SolveStatus { optimal, node_limit, time_limit, lp_iteration_limit };
const char* to_string(SolveStatus s);

struct SolveStats {
  long num_nodes = 0;            // focused nodes
  long num_lp_solves = 0;        // root + child LPs
  long num_lp_iterations = 0;    // all pivots, probing included
  long probing_lp_solves = 0;
  long probing_iterations = 0;
  long probing_limit_warnings = 0;
  double primal_bound = kInf;
  double dual_bound = -kInf;
  SolveStatus status = SolveStatus::optimal;
  bool infeasible = false;
  std::vector<double> incumbent_x;
};

struct Incumbent {
  double value = kInf;
  std::vector<double> x;
  NodeId node = -1;
};

enum class NodeSelectorKind { best_first, dfs, bfs };
const char* to_string(NodeSelectorKind k);
NodeSelectorKind node_selector_from_string(const std::string& name);

/// Everything a branching policy may read at a focus node.
struct BranchContext {
  const MilpInstance& instance;
  const SearchTree& tree;
  const TreeNode& node;
  std::span<const int> candidates;
  const SolveStats& stats;
  LpSolver& lp;
  std::mt19937_64& rng;
  const BipartiteState* state = nullptr;
  // Written by policies that probe child LPs.
  long probing_lp_solves = 0;
  long probing_iterations = 0;
  long probing_limit_warnings = 0;
};

class BranchingPolicy {
 public:
  virtual ~BranchingPolicy() = default;
  virtual std::string name() const = 0;
  /// Must return an element of ctx.candidates.
  virtual int choose(BranchContext& ctx) = 0;
  /// Whether the engine should encode the focus node before calling choose().
  virtual bool wants_state() const { return false; }
  /// Called once per solve before the root is processed.
  virtual void reset(const MilpInstance&) {}
  /// Feedback after both children of a branching were solved.
  virtual void observe_children(const TreeNode& /*parent*/, int /*var*/, const LpResult& /*down*/,
                                const LpResult& /*up*/) {}
};

class SolveObserver {
 public:
  virtual ~SolveObserver() = default;
  virtual void on_focus(const SearchTree&, const TreeNode&) {}
};

struct SolveLimits {
  long max_nodes = -1;          // focused nodes; -1 = unlimited
  double max_seconds = 3600.0;
};

struct SolveOptions {
  NodeSelectorKind selector = NodeSelectorKind::best_first;
  SolveLimits limits;
  std::uint64_t seed = 0;
  bool capture_states = false;   // store encoded states on focused nodes
  SolveObserver* observer = nullptr;
  LpOptions lp;
};

struct SolveResult {
  SolveStats stats;
  SearchTree tree;
};

SolveResult solve(const MilpInstance& inst, BranchingPolicy& brancher, const SolveOptions& options = {});

/// Fractional integer variables of the node LP, ascending.
std::vector<int> candidates(const TreeNode& node);

/// Precedence: infeasible, integral (updating the incumbent when better),
/// bound-dominated (ties prune), open.
NodeStatus fathom_check(const LpResult& lp, Incumbent& incumbent, NodeId node = -1, double tol = 1e-9);

std::string dump_tree_json(const SearchTree& tree);

}  // namespace retrobranch
