#pragma once

#include <memory>
#include <vector>

#include "retrobranch/bnb.hpp"
#include "retrobranch/features.hpp"
#include "retrobranch/milp.hpp"

namespace retrobranch::fixture {

// min -(x1 + 2 x2)  s.t.  x1 + x2 <= 1.5,  x binary
inline MilpInstance worked_instance() {
  MilpInstance inst;
  inst.name = "worked";
  inst.objective = {-1.0, -2.0};
  inst.rows = {Row{{{0, 1.0}, {1, 1.0}}, 1.5, Sense::le}};
  inst.lb = {0.0, 0.0};
  inst.ub = {1.0, 1.0};
  inst.is_integer = {true, true};
  return inst;
}

// Two binaries x0, x1 and a continuous y >= max of four hinge pieces, so the
// root LP sits at x = (0.5, 0.5), y = 0 and the child LP of fixing x_k to 0/1
// costs down[k] / up[k].
inline MilpInstance hinge_instance(double down0, double up0, double down1, double up1) {
  MilpInstance inst;
  inst.name = "hinge";
  inst.objective = {0.0, 0.0, 1.0};
  // y >= 2 d (0.5 - x)   <=>   y + 2 d x >= d
  // y >= 2 u (x - 0.5)   <=>   y - 2 u x >= -u
  inst.rows = {
      Row{{{0, 2 * down0}, {2, 1.0}}, down0, Sense::ge},
      Row{{{0, -2 * up0}, {2, 1.0}}, -up0, Sense::ge},
      Row{{{1, 2 * down1}, {2, 1.0}}, down1, Sense::ge},
      Row{{{1, -2 * up1}, {2, 1.0}}, -up1, Sense::ge},
  };
  inst.lb = {0.0, 0.0, 0.0};
  inst.ub = {1.0, 1.0, 100.0};
  inst.is_integer = {true, true, false};
  return inst;
}

// N0 -> (N1, N2); N1 -> (N3*, N4*); N2 -> (N5*, N6); N6 -> (N7*, N8*), * fathomed.
// Focus order N0, N1, N2, N6.  Dual bounds put the leaf gains relative to N0
// at N3 0.5, N4 0.7, N5 0.3, N7 1.5, N8 1.3.  Each branched node carries a
// placeholder state and branches on variable 10 + id.
inline SearchTree nine_node_tree() {
  SearchTree tree;
  auto add = [&](int id, std::optional<int> parent, int depth, NodeStatus status, double db) {
    TreeNode n;
    n.id = id;
    n.parent = parent;
    n.depth = depth;
    n.status = status;
    n.dual_bound = db;
    tree.nodes.push_back(n);
  };
  add(0, std::nullopt, 0, NodeStatus::branched, 0.0);
  add(1, 0, 1, NodeStatus::branched, 0.1);
  add(2, 0, 1, NodeStatus::branched, 0.2);
  add(3, 1, 2, NodeStatus::fathomed_bound, 0.5);
  add(4, 1, 2, NodeStatus::fathomed_integral, 0.7);
  add(5, 2, 2, NodeStatus::fathomed_bound, 0.3);
  add(6, 2, 2, NodeStatus::branched, 0.25);
  add(7, 6, 3, NodeStatus::fathomed_bound, 1.5);
  add(8, 6, 3, NodeStatus::fathomed_bound, 1.3);
  const std::pair<int, std::array<int, 2>> links[] = {{0, {1, 2}}, {1, {3, 4}}, {2, {5, 6}}, {6, {7, 8}}};
  long vo = 0;
  for (const auto& [id, kids] : links) {
    TreeNode& n = tree.node(id);
    n.children = {kids[0], kids[1]};
    n.visit_order = vo++;
    n.branch_var = 10 + id;
    auto st = std::make_shared<BipartiteState>();
    st->focus_node = id;
    n.state = st;
  }
  return tree;
}

}  // namespace retrobranch::fixture
