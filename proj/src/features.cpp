#include "retrobranch/features.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "retrobranch/errors.hpp"

namespace retrobranch {

namespace {

constexpr double kAtBoundTol = 1e-9;
constexpr double kTightTol = 1e-6;

double guard(double d) {
  if (std::abs(d) >= kFeatureEps) return d;
  return d < 0 ? -kFeatureEps : kFeatureEps;
}

double ratio(double num, double den) {
  if (!std::isfinite(num) || !std::isfinite(den)) return 0.0;
  return num / guard(den);
}

double count_ratio(double num, double den) { return num / std::max(den, 1.0); }

}  // namespace

const std::array<const char*, kVarFeatures>& var_feature_names() {
  static const std::array<const char*, kVarFeatures> names = {
      "obj_norm", "sol_val", "sol_frac", "at_lb", "at_ub",
      "basis_lower", "basis_basic", "basis_upper", "basis_zero",
      "reduced_cost", "has_lb", "has_ub", "incumbent_val", "has_incumbent",
      "is_candidate", "root_sol_val", "age", "pseudo_gain_down", "pseudo_gain_up",
      "db_frac_change", "pb_frac_change", "max_db_frac_change", "max_pb_frac_change", "gap_frac",
      "num_leaves_frac", "num_feasible_leaves_frac", "num_infeasible_leaves_frac",
      "num_lp_iterations_frac", "num_siblings_frac", "is_curr_node_best", "is_curr_node_parent_best",
      "curr_node_depth", "curr_node_db_rel_init_db", "curr_node_db_rel_global_db",
      "is_best_sibling_none", "is_best_sibling_best_node", "best_sibling_db_rel_init_db",
      "best_sibling_db_rel_global_db", "best_sibling_db_rel_curr_node_db"};
  return names;
}

const std::array<const char*, kConsFeatures>& cons_feature_names() {
  static const std::array<const char*, kConsFeatures> names = {"obj_cosine", "bias", "is_tight", "dual", "age"};
  return names;
}

int var_feature_index(const std::string& name) {
  const auto& names = var_feature_names();
  for (int i = 0; i < kVarFeatures; ++i)
    if (name == names[i]) return i;
  throw ContractError("unknown variable feature '" + name + "'");
}

std::shared_ptr<const GraphStructure> build_graph(const MilpInstance& inst) {
  auto g = std::make_shared<GraphStructure>();
  g->num_vars = inst.num_vars();
  g->num_cons = inst.num_cons();
  double cc = 0.0;
  for (double c : inst.objective) cc += c * c;
  g->objective_norm = std::sqrt(cc);
  for (int i = 0; i < inst.num_cons(); ++i) {
    const Row& row = inst.rows[i];
    const double sign = row.sense == Sense::ge ? -1.0 : 1.0;
    double norm = 0.0, dot = 0.0;
    for (const Coef& a : row.coefs) {
      norm += a.value * a.value;
      dot += a.value * inst.objective[a.var];
    }
    norm = std::sqrt(norm);
    g->row_norm.push_back(norm);
    g->row_sign.push_back(sign);
    g->row_cosine.push_back(sign * dot / (guard(norm) * guard(g->objective_norm)));
    for (const Coef& a : row.coefs) {
      g->edge_cons.push_back(i);
      g->edge_var.push_back(a.var);
      g->edge_feature.push_back(static_cast<float>(sign * a.value / guard(norm)));
    }
  }
  return g;
}

BipartiteState extract(const SearchTree& tree, const TreeNode& node, const SolveStats& stats) {
  if (!node.lp || node.lp->status != LpStatus::optimal)
    throw ContractError("extract() needs a node with an optimal LP (node " + std::to_string(node.id) + ")");
  const MilpInstance& inst = *tree.instance;
  const TreeContext& ctx = tree.context;
  const LpResult& lp = *node.lp;
  const LpResult& root = *tree.node(0).lp;
  const int n = inst.num_vars();
  const int m = inst.num_cons();

  BipartiteState s;
  s.num_vars = n;
  s.num_cons = m;
  s.focus_node = node.id;
  s.graph = tree.graph ? tree.graph : build_graph(inst);
  s.candidates = lp.fractional_set;
  s.candidate_mask.assign(static_cast<std::size_t>(n), 0);
  for (int j : s.candidates) s.candidate_mask[j] = 1;

  const double cnorm = guard(s.graph->objective_norm);
  const bool has_inc = ctx.incumbent_node >= 0;
  const std::vector<double>* inc_x = has_inc ? &tree.node(ctx.incumbent_node).lp->x : nullptr;
  const double events = static_cast<double>(std::max(ctx.focus_events, 1L));

  // Tree-level block, identical on every row.
  std::array<double, kTreeFeatures> t{};
  const double nodes = static_cast<double>(ctx.num_nodes);
  const double gdb = ctx.global_dual_bound;
  const double gpb = ctx.global_primal_bound;
  const double db = node.dual_bound;
  t[0] = ctx.db_frac_change;
  t[1] = ctx.pb_frac_change;
  t[2] = ctx.max_db_frac_change;
  t[3] = ctx.max_pb_frac_change;
  if (std::isfinite(gpb) && std::isfinite(gdb))
    t[4] = std::min(1.0, std::abs(gpb - gdb) / std::max({std::abs(gpb), std::abs(gdb), kFeatureEps}));
  else
    t[4] = 1.0;
  t[5] = count_ratio(static_cast<double>(ctx.num_leaves), nodes);
  t[6] = count_ratio(static_cast<double>(ctx.num_feasible_leaves), nodes);
  t[7] = count_ratio(static_cast<double>(ctx.num_infeasible_leaves), nodes);
  t[8] = count_ratio(nodes, static_cast<double>(ctx.num_lp_iterations));
  const std::optional<NodeId> sib = tree.sibling(node.id);
  const bool sib_open = sib && tree.node(*sib).status == NodeStatus::open;
  t[9] = count_ratio(sib_open ? 1.0 : 0.0, nodes);
  t[10] = node.best_at_focus ? 1.0 : 0.0;
  t[11] = node.parent && tree.node(*node.parent).best_at_focus ? 1.0 : 0.0;
  t[12] = static_cast<double>(node.depth);
  t[13] = ratio(ctx.initial_dual_bound, db);
  t[14] = ratio(gdb, db);
  t[15] = sib_open ? 0.0 : 1.0;
  if (sib_open) {
    const double sdb = tree.node(*sib).dual_bound;
    t[16] = *sib == ctx.best_node ? 1.0 : 0.0;
    t[17] = ratio(ctx.initial_dual_bound, sdb);
    t[18] = ratio(gdb, sdb);
    t[19] = ratio(sdb, db);
  }

  s.var_features.assign(static_cast<std::size_t>(n) * kVarFeatures, 0.0f);
  for (int j = 0; j < n; ++j) {
    float* f = &s.var_features[static_cast<std::size_t>(j) * kVarFeatures];
    const double x = lp.x[j];
    const double lo = node.bounds.lower(inst, j);
    const double hi = node.bounds.upper(inst, j);
    f[0] = static_cast<float>(inst.objective[j] / cnorm);
    f[1] = static_cast<float>(x);
    if (inst.is_integer[j] && s.candidate_mask[j]) f[2] = static_cast<float>(x - std::floor(x));
    f[3] = std::isfinite(lo) && std::abs(x - lo) <= kAtBoundTol ? 1.0f : 0.0f;
    f[4] = std::isfinite(hi) && std::abs(x - hi) <= kAtBoundTol ? 1.0f : 0.0f;
    switch (lp.var_status[j]) {
      case BasisStatus::at_lower: f[5] = 1.0f; break;
      case BasisStatus::basic: f[6] = 1.0f; break;
      case BasisStatus::at_upper: f[7] = 1.0f; break;
      case BasisStatus::free_zero: f[8] = 1.0f; break;
    }
    f[9] = static_cast<float>(lp.reduced_costs[j] / cnorm);
    f[10] = std::isfinite(lo) ? 1.0f : 0.0f;
    f[11] = std::isfinite(hi) ? 1.0f : 0.0f;
    if (has_inc) {
      const double v = (*inc_x)[j];
      f[12] = static_cast<float>(inst.is_integer[j] ? std::round(v) : v);
      f[13] = 1.0f;
    }
    f[14] = s.candidate_mask[j] ? 1.0f : 0.0f;
    f[15] = static_cast<float>(root.x[j]);
    const long last = ctx.last_branched_event[j];
    f[16] = static_cast<float>(last < 0 ? 1.0 : static_cast<double>(ctx.focus_events - last) / events);
    for (int k = 0; k < kTreeFeatures; ++k) f[kBaseVarFeatures + k] = static_cast<float>(t[k]);
  }

  s.cons_features.assign(static_cast<std::size_t>(m) * kConsFeatures, 0.0f);
  for (int i = 0; i < m; ++i) {
    float* f = &s.cons_features[static_cast<std::size_t>(i) * kConsFeatures];
    const Row& row = inst.rows[i];
    const double norm = guard(s.graph->row_norm[i]);
    const double sign = s.graph->row_sign[i];
    f[0] = static_cast<float>(s.graph->row_cosine[i]);
    f[1] = static_cast<float>(sign * row.rhs / norm);
    f[2] = row.sense == Sense::eq || std::abs(lp.row_activity[i] - row.rhs) <= kTightTol ? 1.0f : 0.0f;
    f[3] = static_cast<float>(sign * lp.duals[i] / (norm * cnorm));
    f[4] = static_cast<float>(static_cast<double>(ctx.row_tight_events[i]) / events);
  }
  (void)stats;
  return s;
}

std::string dump_state_json(const BipartiteState& state) {
  nlohmann::json j;
  j["focus_node"] = state.focus_node;
  j["var_feature_names"] = var_feature_names();
  j["cons_feature_names"] = cons_feature_names();
  nlohmann::json vars = nlohmann::json::array();
  for (int i = 0; i < state.num_vars; ++i) {
    std::vector<float> row(state.var_features.begin() + static_cast<long>(i) * kVarFeatures,
                           state.var_features.begin() + static_cast<long>(i + 1) * kVarFeatures);
    vars.push_back(row);
  }
  j["var_features"] = vars;
  nlohmann::json cons = nlohmann::json::array();
  for (int i = 0; i < state.num_cons; ++i) {
    std::vector<float> row(state.cons_features.begin() + static_cast<long>(i) * kConsFeatures,
                           state.cons_features.begin() + static_cast<long>(i + 1) * kConsFeatures);
    cons.push_back(row);
  }
  j["cons_features"] = cons;
  std::vector<int> mask(state.candidate_mask.begin(), state.candidate_mask.end());
  j["candidate_mask"] = mask;
  nlohmann::json edges = nlohmann::json::array();
  for (int e = 0; e < state.graph->num_edges(); ++e)
    edges.push_back({state.graph->edge_cons[e], state.graph->edge_var[e], state.graph->edge_feature[e]});
  j["edges"] = edges;
  return j.dump() + "\n";
}

}  // namespace retrobranch
