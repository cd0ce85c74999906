#include "retrobranch/bnb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

#include <json.hpp>

#include "retrobranch/errors.hpp"
#include "retrobranch/features.hpp"

namespace retrobranch {

const char* to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::open: return "open";
    case NodeStatus::branched: return "branched";
    case NodeStatus::fathomed_integral: return "fathomed_integral";
    case NodeStatus::fathomed_infeasible: return "fathomed_infeasible";
    case NodeStatus::fathomed_bound: return "fathomed_bound";
  }
  return "?";
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::node_limit: return "node_limit";
    case SolveStatus::time_limit: return "time_limit";
    case SolveStatus::lp_iteration_limit: return "lp_iteration_limit";
  }
  return "?";
}

const char* to_string(NodeSelectorKind k) {
  switch (k) {
    case NodeSelectorKind::best_first: return "best_first";
    case NodeSelectorKind::dfs: return "dfs";
    case NodeSelectorKind::bfs: return "bfs";
  }
  return "?";
}

NodeSelectorKind node_selector_from_string(const std::string& name) {
  if (name == "best_first") return NodeSelectorKind::best_first;
  if (name == "dfs") return NodeSelectorKind::dfs;
  if (name == "bfs") return NodeSelectorKind::bfs;
  throw ParameterError("unknown node selector '" + name + "' (expected best_first, dfs or bfs)");
}

std::optional<NodeId> SearchTree::sibling(NodeId id) const {
  const TreeNode& n = node(id);
  if (!n.parent) return std::nullopt;
  const TreeNode& p = node(*n.parent);
  for (const auto& c : p.children)
    if (c && *c != id) return c;
  return std::nullopt;
}

int SearchTree::max_depth() const {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

std::vector<int> candidates(const TreeNode& node) {
  if (!node.lp || node.lp->status != LpStatus::optimal)
    throw ContractError("candidates() needs a node with an optimal LP (node " + std::to_string(node.id) + ")");
  return node.lp->fractional_set;
}

NodeStatus fathom_check(const LpResult& lp, Incumbent& incumbent, NodeId node, double tol) {
  if (lp.status == LpStatus::infeasible) return NodeStatus::fathomed_infeasible;
  if (lp.status != LpStatus::optimal) return NodeStatus::open;
  if (lp.fractional_set.empty()) {
    if (lp.objective < incumbent.value) {
      incumbent.value = lp.objective;
      incumbent.x = lp.x;
      incumbent.node = node;
    }
    return NodeStatus::fathomed_integral;
  }
  if (lp.objective >= incumbent.value - tol) return NodeStatus::fathomed_bound;
  return NodeStatus::open;
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kBoundTol = 1e-9;
constexpr double kTightTol = 1e-6;

double frac_change(double now, double prev) {
  if (!std::isfinite(now) || !std::isfinite(prev)) return 0.0;
  return std::abs(now - prev) / std::max(std::abs(prev), kFeatureEps);
}

// Drop per-node vectors nobody reads once a node is closed.  The root keeps
// everything because the encoder reads its LP values.
void compact(TreeNode& n) {
  if (n.id == 0 || !n.lp) return;
  LpResult& lp = *n.lp;
  lp.basis = WarmStart{};
  lp.duals.clear();
  lp.duals.shrink_to_fit();
  lp.reduced_costs.clear();
  lp.reduced_costs.shrink_to_fit();
  lp.row_activity.clear();
  lp.row_activity.shrink_to_fit();
  lp.var_status.clear();
  lp.var_status.shrink_to_fit();
}

class Engine {
 public:
  Engine(const MilpInstance& inst, BranchingPolicy& brancher, const SolveOptions& options)
      : inst_(inst), brancher_(brancher), options_(options), lp_(inst, options.lp), rng_(options.seed) {}

  SolveResult run() {
    start_ = Clock::now();
    SolveResult out;
    tree_ = &out.tree;
    stats_ = &out.stats;
    tree_->instance = &inst_;
    tree_->context.last_branched_event.assign(static_cast<std::size_t>(inst_.num_vars()), -1);
    tree_->context.row_tight_events.assign(static_cast<std::size_t>(inst_.num_cons()), 0);
    brancher_.reset(inst_);

    TreeNode root;
    root.id = 0;
    root.lp = lp_.solve(root.bounds);
    count_lp(*root.lp);
    tree_->nodes.push_back(std::move(root));
    tree_->context.num_nodes = 1;
    TreeNode& r = tree_->node(0);
    if (r.lp->status == LpStatus::unbounded) throw SolverError("root LP relaxation is unbounded");
    if (r.lp->status == LpStatus::iteration_limit) {
      stats_->status = SolveStatus::lp_iteration_limit;
      finish();
    return out;
    }
    r.dual_bound = r.lp->status == LpStatus::optimal ? r.lp->objective : kInf;
    tree_->context.initial_dual_bound = r.dual_bound;
    set_status(r, fathom_check(*r.lp, incumbent_, 0, kBoundTol));
    if (r.status == NodeStatus::open) push(0);

    while (!open_.empty()) {
      if (options_.limits.max_nodes >= 0 && stats_->num_nodes >= options_.limits.max_nodes) {
        stats_->status = SolveStatus::node_limit;
        break;
      }
      if (std::chrono::duration<double>(Clock::now() - start_).count() > options_.limits.max_seconds) {
        stats_->status = SolveStatus::time_limit;
        break;
      }
      const NodeId focus = pop();
      if (!branch(focus)) break;
    }
    finish();
    return out;
  }

 private:
  void count_lp(const LpResult& lp) {
    ++stats_->num_lp_solves;
    stats_->num_lp_iterations += lp.iterations;
  }

  void set_status(TreeNode& n, NodeStatus s) {
    TreeContext& ctx = tree_->context;
    n.status = s;
    if (is_fathomed(s)) {
      ++ctx.num_leaves;
      if (s == NodeStatus::fathomed_infeasible) ++ctx.num_infeasible_leaves;
      else ++ctx.num_feasible_leaves;
    }
    if (s != NodeStatus::open) compact(n);
  }

  void push(NodeId id) {
    const TreeNode& n = tree_->node(id);
    open_.insert({n.dual_bound, id});
    if (options_.selector == NodeSelectorKind::dfs) stack_.push_back(id);
    else if (options_.selector == NodeSelectorKind::bfs) fifo_.push_back(id);
  }

  NodeId pop() {
    switch (options_.selector) {
      case NodeSelectorKind::best_first:
        return open_.begin()->second;
      case NodeSelectorKind::dfs:
        while (true) {
          const NodeId id = stack_.back();
          stack_.pop_back();
          if (tree_->node(id).status == NodeStatus::open) return id;
        }
      case NodeSelectorKind::bfs:
        while (true) {
          const NodeId id = fifo_.front();
          fifo_.pop_front();
          if (tree_->node(id).status == NodeStatus::open) return id;
        }
    }
    throw ContractError("unknown node selector");
  }

  void refresh_context(TreeNode& focus) {
    TreeContext& ctx = tree_->context;
    ++ctx.focus_events;
    ctx.prev_global_dual_bound = ctx.focus_events == 1 ? open_.begin()->first : ctx.global_dual_bound;
    ctx.prev_global_primal_bound = ctx.global_primal_bound;
    ctx.global_dual_bound = open_.begin()->first;
    ctx.global_primal_bound = incumbent_.value;
    ctx.db_frac_change = frac_change(ctx.global_dual_bound, ctx.prev_global_dual_bound);
    ctx.pb_frac_change = frac_change(ctx.global_primal_bound, ctx.prev_global_primal_bound);
    ctx.max_db_frac_change = std::max(ctx.max_db_frac_change, ctx.db_frac_change);
    ctx.max_pb_frac_change = std::max(ctx.max_pb_frac_change, ctx.pb_frac_change);
    ctx.best_node = open_.begin()->second;
    ctx.incumbent_node = incumbent_.node;
    ctx.num_nodes = tree_->size();
    ctx.num_lp_iterations = stats_->num_lp_iterations;
    focus.best_at_focus = ctx.best_node == focus.id;
    const LpResult& lp = *focus.lp;
    for (int i = 0; i < inst_.num_cons(); ++i)
      if (inst_.rows[i].sense == Sense::eq || std::abs(lp.row_activity[i] - inst_.rows[i].rhs) <= kTightTol)
        ++ctx.row_tight_events[i];
  }

  // Returns false when the solve must stop.
  bool branch(NodeId focus_id) {
    {
      TreeNode& focus = tree_->node(focus_id);
      focus.visit_order = stats_->num_nodes++;
      refresh_context(focus);
    }
    const bool encode = options_.observer || options_.capture_states || brancher_.wants_state();
    std::shared_ptr<const BipartiteState> state;
    if (encode) {
      if (!tree_->graph) tree_->graph = build_graph(inst_);
      state = std::make_shared<const BipartiteState>(extract(*tree_, tree_->node(focus_id), *stats_));
      if (options_.capture_states || options_.observer) tree_->node(focus_id).state = state;
    }
    if (options_.observer) options_.observer->on_focus(*tree_, tree_->node(focus_id));

    const std::vector<int> cands = candidates(tree_->node(focus_id));
    int var = -1;
    {
      BranchContext ctx{inst_, *tree_, tree_->node(focus_id), cands, *stats_, lp_, rng_, state.get()};
      var = brancher_.choose(ctx);
      stats_->probing_lp_solves += ctx.probing_lp_solves;
      stats_->probing_iterations += ctx.probing_iterations;
      stats_->probing_limit_warnings += ctx.probing_limit_warnings;
      stats_->num_lp_iterations += ctx.probing_iterations;
    }
    if (!std::binary_search(cands.begin(), cands.end(), var))
      throw PolicyError(brancher_.name() + " chose variable " + std::to_string(var) +
                        ", which is not a branching candidate at node " + std::to_string(focus_id));

    const TreeNode& focus = tree_->node(focus_id);
    const double value = focus.lp->x[var];
    const WarmStart hint = warm_hint(*focus.lp);
    std::array<TreeNode, 2> kids;
    for (int side = 0; side < 2; ++side) {
      TreeNode& k = kids[side];
      k.id = tree_->size() + side;
      k.parent = focus_id;
      k.depth = focus.depth + 1;
      k.bounds = focus.bounds;
      if (side == 0) k.bounds.tighten_upper(inst_, var, std::floor(value));
      else k.bounds.tighten_lower(inst_, var, std::ceil(value));
      k.lp = lp_.solve(k.bounds, &hint);
      count_lp(*k.lp);
      if (k.lp->status == LpStatus::unbounded) throw SolverError("child LP unbounded below a bounded parent");
      k.dual_bound = k.lp->status == LpStatus::optimal ? std::max(k.lp->objective, focus.dual_bound) : kInf;
    }
    if (kids[0].lp->status == LpStatus::iteration_limit || kids[1].lp->status == LpStatus::iteration_limit) {
      stats_->status = SolveStatus::lp_iteration_limit;
      return false;
    }
    brancher_.observe_children(focus, var, *kids[0].lp, *kids[1].lp);

    {
      TreeNode& f = tree_->node(focus_id);
      f.children = {kids[0].id, kids[1].id};
      f.branch_var = var;
      open_.erase({f.dual_bound, focus_id});
      set_status(f, NodeStatus::branched);
    }
    tree_->context.last_branched_event[var] = tree_->context.focus_events;
    tree_->nodes.push_back(std::move(kids[0]));
    tree_->nodes.push_back(std::move(kids[1]));
    tree_->context.num_nodes = tree_->size();

    const NodeId down = tree_->size() - 2;
    const NodeId up = tree_->size() - 1;
    for (NodeId id : {down, up}) {
      TreeNode& k = tree_->node(id);
      const double before = incumbent_.value;
      set_status(k, fathom_check(*k.lp, incumbent_, id, kBoundTol));
      if (incumbent_.value < before) prune_by_bound();
    }
    // DFS plunges into the child with the smaller bound (down on ties), so it is pushed last.
    const bool dfs = options_.selector == NodeSelectorKind::dfs;
    const bool up_first = tree_->node(up).dual_bound < tree_->node(down).dual_bound;
    const NodeId first = !dfs ? down : up_first ? down : up;
    const NodeId second = first == down ? up : down;
    for (NodeId id : {first, second})
      if (tree_->node(id).status == NodeStatus::open) push(id);
    return true;
  }

  void prune_by_bound() {
    while (!open_.empty()) {
      auto last = std::prev(open_.end());
      if (last->first < incumbent_.value - kBoundTol) break;
      set_status(tree_->node(last->second), NodeStatus::fathomed_bound);
      open_.erase(last);
    }
  }

  void finish() {
    SolveStats& s = *stats_;
    s.primal_bound = incumbent_.value;
    if (incumbent_.node >= 0) {
      s.incumbent_x = incumbent_.x;
      for (int j = 0; j < inst_.num_vars(); ++j)
        if (inst_.is_integer[j]) s.incumbent_x[j] = std::round(s.incumbent_x[j]);
    }
    if (s.status == SolveStatus::optimal && open_.empty()) {
      s.dual_bound = s.primal_bound;
      s.infeasible = incumbent_.node < 0;
    } else {
      s.dual_bound = open_.empty() ? s.primal_bound : std::min(open_.begin()->first, s.primal_bound);
    }
    tree_->context.num_nodes = tree_->size();
    tree_->context.global_primal_bound = incumbent_.value;
    tree_->context.incumbent_node = incumbent_.node;
  }

  const MilpInstance& inst_;
  BranchingPolicy& brancher_;
  const SolveOptions& options_;
  LpSolver lp_;
  std::mt19937_64 rng_;
  Clock::time_point start_;
  SearchTree* tree_ = nullptr;
  SolveStats* stats_ = nullptr;
  Incumbent incumbent_;
  std::set<std::pair<double, NodeId>> open_;
  std::vector<NodeId> stack_;
  std::deque<NodeId> fifo_;
};

nlohmann::json bound_json(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

}  // namespace

SolveResult solve(const MilpInstance& inst, BranchingPolicy& brancher, const SolveOptions& options) {
  const auto problems = validate(inst);
  if (!problems.empty()) throw ContractError("solve() on invalid instance: " + problems.front().message);
  if (inst.num_integer() < 1) throw ContractError("solve() needs at least one integer variable");
  Engine engine(inst, brancher, options);
  return engine.run();
}

std::string dump_tree_json(const SearchTree& tree) {
  nlohmann::json arr = nlohmann::json::array();
  for (const TreeNode& n : tree.nodes) {
    nlohmann::json j;
    j["id"] = n.id;
    j["parent"] = n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr);
    j["depth"] = n.depth;
    j["status"] = to_string(n.status);
    j["dual_bound"] = bound_json(n.dual_bound);
    j["branch_var"] = n.branch_var ? nlohmann::json(*n.branch_var) : nlohmann::json(nullptr);
    j["visit_order"] = n.visit_order ? nlohmann::json(*n.visit_order) : nlohmann::json(nullptr);
    nlohmann::json kids = nlohmann::json::array();
    for (const auto& c : n.children) kids.push_back(c ? nlohmann::json(*c) : nlohmann::json(nullptr));
    j["children"] = kids;
    nlohmann::json b = nlohmann::json::array();
    for (const auto& [var, lu] : n.bounds.overrides())
      b.push_back({var, bound_json(lu.first), bound_json(lu.second)});
    j["bounds"] = b;
    arr.push_back(std::move(j));
  }
  return arr.dump() + "\n";
}

}  // namespace retrobranch
