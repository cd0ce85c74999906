#include <gtest/gtest.h>

#include <set>

#include <json.hpp>

#include "fixtures.hpp"
#include "retrobranch/branchers.hpp"
#include "retrobranch/errors.hpp"
#include "retrobranch/retro.hpp"

using namespace retrobranch;

namespace {

std::vector<NodeId> ids(std::initializer_list<NodeId> l) { return l; }

void expect_partition(const SearchTree& tree, const RetroResult& r) {
  std::set<NodeId> seen;
  long total = 0;
  for (const auto& t : r.trajectories) {
    for (NodeId id : t.nodes) {
      EXPECT_EQ(tree.node(id).status, NodeStatus::branched);
      EXPECT_TRUE(seen.insert(id).second) << "node " << id << " repeated";
    }
    total += t.length();
  }
  long branched = 0;
  for (const auto& n : tree.nodes) branched += n.status == NodeStatus::branched;
  EXPECT_EQ(total + r.dropped_nodes, branched);
}

}  // namespace

TEST(Retro, NineNodeDeepest) {
  const SearchTree tree = fixture::nine_node_tree();
  const RetroResult r = construct_trajectories(tree, {LeafHeuristic::deepest});
  ASSERT_EQ(r.trajectories.size(), 2u);
  EXPECT_EQ(r.trajectories[0].nodes, ids({0, 2, 6}));
  EXPECT_EQ(r.trajectories[0].leaf, 7);
  EXPECT_EQ(r.trajectories[0].rewards, (std::vector<double>{-1, -1, 0}));
  EXPECT_EQ(r.trajectories[0].done, (std::vector<bool>{false, false, true}));
  EXPECT_EQ(r.trajectories[1].nodes, ids({1}));
  EXPECT_EQ(r.trajectories[1].rewards, (std::vector<double>{0}));
  EXPECT_EQ(r.dropped_nodes, 0);
  expect_partition(tree, r);
}

TEST(Retro, NineNodeVisitationOrder) {
  const SearchTree tree = fixture::nine_node_tree();
  const RetroResult r = construct_trajectories(tree, {LeafHeuristic::visitation_order});
  ASSERT_EQ(r.trajectories.size(), 3u);
  EXPECT_EQ(r.trajectories[0].nodes, ids({0, 1}));
  EXPECT_EQ(r.trajectories[0].leaf, 3);
  EXPECT_EQ(r.trajectories[0].rewards, (std::vector<double>{-1, 0}));
  EXPECT_EQ(r.trajectories[1].nodes, ids({2}));
  EXPECT_EQ(r.trajectories[1].leaf, 5);
  EXPECT_EQ(r.trajectories[1].rewards, (std::vector<double>{-1}));
  EXPECT_EQ(r.trajectories[1].done, (std::vector<bool>{true}));
  EXPECT_EQ(r.trajectories[2].nodes, ids({6}));
  EXPECT_EQ(r.trajectories[2].rewards, (std::vector<double>{0}));
  expect_partition(tree, r);
}

TEST(Retro, NineNodeMlpg) {
  const SearchTree tree = fixture::nine_node_tree();
  std::mt19937_64 rng(0);
  const auto leaves = eligible_leaves(tree, 0);
  EXPECT_EQ(leaves, ids({3, 4, 5, 7, 8}));
  EXPECT_EQ(select_leaf(tree, 0, leaves, LeafHeuristic::mlpg, rng), 7);

  const RetroResult r = construct_trajectories(tree, {LeafHeuristic::mlpg});
  ASSERT_EQ(r.trajectories.size(), 2u);
  EXPECT_EQ(r.trajectories[0].nodes, ids({0, 2, 6}));
  // N1's leaves: gains |0.1 - 0.5| and |0.1 - 0.7|
  EXPECT_EQ(r.trajectories[1].leaf, 4);
}

TEST(Retro, MlpgInfeasibleLeafWins) {
  SearchTree tree = fixture::nine_node_tree();
  tree.node(5).status = NodeStatus::fathomed_infeasible;
  tree.node(5).dual_bound = kInf;
  std::mt19937_64 rng(0);
  EXPECT_EQ(select_leaf(tree, 0, eligible_leaves(tree, 0), LeafHeuristic::mlpg, rng), 5);
}

TEST(Retro, TiesGoToLowestId) {
  SearchTree tree = fixture::nine_node_tree();
  for (int id : {3, 4, 5, 7, 8}) tree.node(id).dual_bound = 1.0;
  std::mt19937_64 rng(0);
  const auto leaves = eligible_leaves(tree, 0);
  EXPECT_EQ(select_leaf(tree, 0, leaves, LeafHeuristic::mlpg, rng), 3);
  EXPECT_EQ(select_leaf(tree, 6, eligible_leaves(tree, 6), LeafHeuristic::deepest, rng), 7);
  EXPECT_EQ(select_leaf(tree, 1, eligible_leaves(tree, 1), LeafHeuristic::visitation_order, rng), 3);
}

TEST(Retro, SingleEligibleLeafForEveryHeuristic) {
  const SearchTree tree = fixture::nine_node_tree();
  const std::vector<NodeId> one = {5};
  for (auto h : {LeafHeuristic::mlpg, LeafHeuristic::random, LeafHeuristic::visitation_order,
                 LeafHeuristic::deepest}) {
    std::mt19937_64 rng(3);
    EXPECT_EQ(select_leaf(tree, 2, one, h, rng), 5) << to_string(h);
  }
  std::mt19937_64 rng(0);
  EXPECT_THROW(select_leaf(tree, 2, std::vector<NodeId>{}, LeafHeuristic::mlpg, rng), ContractError);
}

TEST(Retro, RandomHeuristicCoversAllLeavesAndIsSeeded) {
  const SearchTree tree = fixture::nine_node_tree();
  const auto leaves = eligible_leaves(tree, 0);
  std::set<NodeId> hit;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) hit.insert(select_leaf(tree, 0, leaves, LeafHeuristic::random, rng));
  EXPECT_EQ(hit.size(), leaves.size());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = construct_trajectories(tree, {LeafHeuristic::random, seed});
    const auto b = construct_trajectories(tree, {LeafHeuristic::random, seed});
    ASSERT_EQ(a.trajectories.size(), b.trajectories.size());
    for (std::size_t k = 0; k < a.trajectories.size(); ++k) EXPECT_EQ(a.trajectories[k].nodes, b.trajectories[k].nodes);
    expect_partition(tree, a);
  }
}

TEST(Retro, HeuristicNameRoundTrip) {
  for (auto h : {LeafHeuristic::mlpg, LeafHeuristic::random, LeafHeuristic::visitation_order,
                 LeafHeuristic::deepest})
    EXPECT_EQ(leaf_heuristic_from_string(to_string(h)), h);
  EXPECT_THROW(leaf_heuristic_from_string("widest"), ParameterError);
}

TEST(Retro, RootOnlyBranching) {
  const MilpInstance inst = fixture::worked_instance();
  auto sb = make_classical_policy("sb");
  SolveOptions opts;
  opts.capture_states = true;
  const SolveResult res = solve(inst, *sb, opts);
  ASSERT_EQ(res.stats.num_nodes, 1);
  const RetroResult r = construct_trajectories(res.tree);
  ASSERT_EQ(r.trajectories.size(), 1u);
  EXPECT_EQ(r.trajectories[0].nodes, ids({0}));
  EXPECT_EQ(r.trajectories[0].rewards, (std::vector<double>{0}));
  EXPECT_EQ(r.trajectories[0].undiscounted_return(), 0.0);

  const auto tr = emit_transitions(r.trajectories[0], res.tree);
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_TRUE(tr[0].done);
  EXPECT_EQ(tr[0].next_state, nullptr);
  EXPECT_EQ(tr[0].action, *res.tree.node(0).branch_var);
  EXPECT_EQ(tr[0].state, res.tree.node(0).state);
}

TEST(Retro, NoBranchedNodesGivesEmpty) {
  SearchTree tree;
  TreeNode root;
  root.status = NodeStatus::fathomed_integral;
  tree.nodes.push_back(root);
  const RetroResult r = construct_trajectories(tree);
  EXPECT_TRUE(r.trajectories.empty());
  EXPECT_EQ(r.dropped_nodes, 0);
}

TEST(Retro, TerminalRewardSwitch) {
  const SearchTree tree = fixture::nine_node_tree();
  RetroOptions o{LeafHeuristic::visitation_order};
  o.terminal_zero_requires_both_fathomed = false;
  const RetroResult r = construct_trajectories(tree, o);
  ASSERT_EQ(r.trajectories.size(), 3u);
  EXPECT_EQ(r.trajectories[1].rewards, (std::vector<double>{0}));
}

TEST(Retro, EmitTransitionsNineNode) {
  const SearchTree tree = fixture::nine_node_tree();
  const RetroResult r = construct_trajectories(tree, {LeafHeuristic::deepest});
  const auto tr = emit_transitions(r.trajectories[0], tree);
  ASSERT_EQ(tr.size(), 3u);
  EXPECT_FALSE(tr[0].done);
  EXPECT_FALSE(tr[1].done);
  EXPECT_TRUE(tr[2].done);
  EXPECT_EQ(tr[0].action, 10);
  EXPECT_EQ(tr[1].action, 12);
  EXPECT_EQ(tr[2].action, 16);
  EXPECT_EQ(tr[0].next_state, tree.node(2).state);
  EXPECT_EQ(tr[1].next_state, tree.node(6).state);
  EXPECT_EQ(tr[2].next_state, nullptr);
  std::size_t total = 0;
  for (const auto& t : r.trajectories) total += emit_transitions(t, tree).size();
  EXPECT_EQ(total, 4u);

  SearchTree missing = tree;
  missing.node(6).state = nullptr;
  EXPECT_THROW(emit_transitions(r.trajectories[0], missing), ContractError);
}

TEST(Retro, FullEpisodeNineNode) {
  const SearchTree tree = fixture::nine_node_tree();
  const RetroTrajectory t = full_episode(tree, true);
  EXPECT_EQ(t.nodes, ids({0, 1, 2, 6}));
  EXPECT_EQ(t.rewards, (std::vector<double>{-1, -1, -1, 0}));
  const auto tr = emit_transitions(t, tree);
  ASSERT_EQ(tr.size(), 4u);
  EXPECT_EQ(tr[1].next_state, tree.node(2).state);
  EXPECT_EQ(full_episode(tree, false).rewards.back(), -1.0);
}

TEST(Retro, TransitionDump) {
  const SearchTree tree = fixture::nine_node_tree();
  const RetroResult r = construct_trajectories(tree, {LeafHeuristic::deepest});
  const std::string text = dump_transitions_jsonl("nine", r.trajectories, tree);
  std::istringstream in(text);
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[2]["action"], 16);
  EXPECT_EQ(rows[2]["done"], true);
  EXPECT_EQ(rows[3]["trajectory"], 1);
  EXPECT_EQ(rows[3]["instance"], "nine");
}

TEST(Retro, PropertiesOnRandomSolves) {
  auto random = make_classical_policy("random");
  int with_branching = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    GeneratorSpec spec;
    spec.rows = 50;
    spec.cols = 100;
    spec.density = 0.1;
    spec.seed = seed;
    const MilpInstance inst = generate(spec);
    SolveOptions opts;
    opts.seed = seed;
    const SolveResult res = solve(inst, *random, opts);
    if (res.stats.num_nodes > 1) ++with_branching;
    for (auto h : {LeafHeuristic::mlpg, LeafHeuristic::random, LeafHeuristic::visitation_order,
                   LeafHeuristic::deepest}) {
      const RetroResult r = construct_trajectories(res.tree, {h, seed});
      EXPECT_EQ(r.dropped_nodes, 0);
      expect_partition(res.tree, r);
      for (const auto& t : r.trajectories) {
        EXPECT_LE(t.length(), res.tree.max_depth() + 1);
        int punished = 0;
        for (double x : t.rewards) punished += x != 0.0;
        EXPECT_EQ(t.undiscounted_return(), -punished);
        if (t.rewards.back() == 0.0) EXPECT_EQ(t.undiscounted_return(), -(t.length() - 1));
        // consecutive nodes are parent and child
        for (std::size_t k = 1; k < t.nodes.size(); ++k)
          EXPECT_EQ(res.tree.node(t.nodes[k]).parent, t.nodes[k - 1]);
      }
    }
  }
  EXPECT_GT(with_branching, 5);
}

TEST(Retro, NodeLimitedTreeDropsUnfinishedSubtrees) {
  GeneratorSpec spec;
  spec.rows = 100;
  spec.cols = 200;
  spec.density = 0.1;
  auto random = make_classical_policy("random");
  long dropped = 0;
  int limited = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    const MilpInstance inst = generate(spec);
    SolveOptions opts;
    opts.seed = seed;
    opts.selector = NodeSelectorKind::bfs;
    opts.limits.max_nodes = 4;
    const SolveResult res = solve(inst, *random, opts);
    if (res.stats.status != SolveStatus::node_limit) continue;
    ++limited;
    const RetroResult r = construct_trajectories(res.tree);
    expect_partition(res.tree, r);
    for (const auto& t : r.trajectories) EXPECT_TRUE(is_fathomed(res.tree.node(t.leaf).status));
    dropped += r.dropped_nodes;
  }
  ASSERT_GT(limited, 0);
  EXPECT_GT(dropped, 0);
}
