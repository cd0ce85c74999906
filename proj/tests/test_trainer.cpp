#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "retrobranch/errors.hpp"
#include "retrobranch/imitation.hpp"
#include "retrobranch/trainer.hpp"

using namespace retrobranch;

namespace {

MilpInstance sc(std::uint64_t seed, int rows = 50, int cols = 100, double density = 0.1) {
  GeneratorSpec spec;
  spec.rows = rows;
  spec.cols = cols;
  spec.density = density;
  spec.seed = seed;
  return generate(spec);
}

std::vector<Transition> plain_trajectory(std::initializer_list<double> rewards) {
  std::vector<Transition> out;
  int k = 0;
  for (double r : rewards) {
    Transition t;
    auto st = std::make_shared<BipartiteState>();
    st->focus_node = k;
    t.state = st;
    t.action = k++;
    t.reward = r;
    out.push_back(t);
  }
  for (std::size_t i = 0; i + 1 < out.size(); ++i) out[i].next_state = out[i + 1].state;
  out.back().done = true;
  return out;
}

std::shared_ptr<const BipartiteState> some_state() {
  auto pb = make_classical_policy("pb");
  for (std::uint64_t seed = 0;; ++seed) {
    SolveOptions o;
    o.capture_states = true;
    const SolveResult r = solve(sc(seed), *pb, o);
    if (r.tree.node(0).state) return r.tree.node(0).state;
  }
}

NStepTransition terminal_item(std::shared_ptr<const BipartiteState> s, double reward) {
  NStepTransition t;
  t.state = std::move(s);
  t.action = t.state->candidates.front();
  t.reward = reward;
  return t;
}

}  // namespace

TEST(SumTree, PrefixSearch) {
  SumTree t(5);
  for (std::size_t i = 0; i < 5; ++i) t.set(i, static_cast<double>(i + 1));
  EXPECT_DOUBLE_EQ(t.total(), 15.0);
  EXPECT_EQ(t.find(0.0), 0u);
  EXPECT_EQ(t.find(0.999), 0u);
  EXPECT_EQ(t.find(1.0), 1u);
  EXPECT_EQ(t.find(5.9), 2u);
  EXPECT_EQ(t.find(14.99), 4u);
  EXPECT_EQ(t.find(15.0), 4u);
  t.set(4, 0.0);
  EXPECT_EQ(t.find(10.5), 3u);
  EXPECT_THROW(t.set(5, 1.0), ContractError);
}

TEST(NStep, ThreeStepTerminalWindow) {
  const auto traj = plain_trajectory({-1, -1, 0});
  const auto ns = n_step_transitions(traj, 3, 0.99);
  ASSERT_EQ(ns.size(), 3u);
  EXPECT_DOUBLE_EQ(ns[0].reward, -1.0 + 0.99 * -1.0);
  EXPECT_NEAR(ns[0].reward, -1.99, 1e-12);
  EXPECT_EQ(ns[0].bootstrap, nullptr);
  EXPECT_EQ(ns[0].discount, 0.0);
  EXPECT_DOUBLE_EQ(ns[1].reward, -1.0);
  EXPECT_EQ(ns[2].reward, 0.0);
  EXPECT_EQ(ns[2].action, 2);
}

TEST(NStep, LongTrajectoryBootstraps) {
  const auto traj = plain_trajectory({-1, -1, -1, -1, -1});
  const auto ns = n_step_transitions(traj, 3, 0.5);
  EXPECT_DOUBLE_EQ(ns[0].reward, -1.75);
  EXPECT_EQ(ns[0].bootstrap, traj[3].state);
  EXPECT_DOUBLE_EQ(ns[0].discount, 0.125);
  EXPECT_EQ(ns[1].bootstrap, traj[4].state);
  // windows reaching the end are terminal, never crossing into anything else
  EXPECT_EQ(ns[2].bootstrap, nullptr);
  EXPECT_DOUBLE_EQ(ns[2].reward, -1.75);
  EXPECT_EQ(ns[4].bootstrap, nullptr);
  EXPECT_DOUBLE_EQ(ns[4].reward, -1.0);
  const auto one = n_step_transitions(traj, 1, 0.99);
  EXPECT_EQ(one[0].bootstrap, traj[1].state);
  EXPECT_DOUBLE_EQ(one[0].discount, 0.99);
  EXPECT_THROW(n_step_transitions(traj, 0, 0.99), ParameterError);
}

TEST(Replay, UniformWhenPrioritiesEqual) {
  ReplayBuffer buf(10, 0.6, 1e-3);
  for (int i = 0; i < 10; ++i) buf.add(NStepTransition{});
  std::mt19937_64 rng(1);
  std::vector<long> counts(10, 0);
  const int draws = 100000;
  for (int k = 0; k < draws / 100; ++k)
    for (std::size_t i : buf.sample(100, 0.4, rng).indices) ++counts[i];
  double chi2 = 0.0;
  const double expect = draws / 10.0;
  for (long c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // chi-square with 9 dof: P(X > 21.67) = 0.01
  EXPECT_LT(chi2, 21.67);
}

TEST(Replay, ProportionalToPriority) {
  ReplayBuffer buf(5, 1.0, 1e-3);
  for (int i = 0; i < 5; ++i) buf.add(NStepTransition{});
  const std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
  const std::vector<double> td = {10.0 - 1e-3, 1.0 - 1e-3, 1.0 - 1e-3, 1.0 - 1e-3, 1.0 - 1e-3};
  buf.update_priorities(idx, td);
  EXPECT_NEAR(buf.probability(0), 10.0 / 14.0, 1e-12);
  std::mt19937_64 rng(2);
  std::vector<long> counts(5, 0);
  for (int k = 0; k < 1000; ++k)
    for (std::size_t i : buf.sample(100, 0.4, rng).indices) ++counts[i];
  const double others = (counts[1] + counts[2] + counts[3] + counts[4]) / 4.0;
  EXPECT_NEAR(counts[0] / others, 10.0, 0.3);
}

TEST(Replay, WeightsAndInsertion) {
  ReplayBuffer buf(4, 0.6, 1e-3);
  for (int i = 0; i < 4; ++i) buf.add(NStepTransition{});
  std::mt19937_64 rng(3);
  for (double w : buf.sample(16, 1.0, rng).weights) EXPECT_DOUBLE_EQ(w, 1.0);

  const std::vector<std::size_t> idx = {1};
  const std::vector<double> td = {-4.0};
  buf.update_priorities(idx, td);
  EXPECT_DOUBLE_EQ(buf.priority(1), 4.0 + 1e-3);
  EXPECT_DOUBLE_EQ(buf.max_priority(), 4.0 + 1e-3);
  buf.add(NStepTransition{});  // overwrites slot 0 at the current max priority
  EXPECT_EQ(buf.size(), 4u);
  EXPECT_DOUBLE_EQ(buf.priority(0), 4.0 + 1e-3);
  for (int i = 0; i < 10; ++i) buf.add(NStepTransition{});
  EXPECT_EQ(buf.size(), buf.capacity());

  const auto s = buf.sample(200, 0.5, rng);
  for (double w : s.weights) {
    EXPECT_LE(w, 1.0);
    EXPECT_GT(w, 0.0);
  }
  const std::vector<double> zero = {0.0};
  buf.update_priorities(idx, zero);
  EXPECT_DOUBLE_EQ(buf.priority(1), 1e-3);
  EXPECT_THROW(buf.sample(8, 0.4, rng, 5), ContractError);
}

TEST(Replay, WeightsMatchClosedForm) {
  ReplayBuffer buf(3, 1.0, 1e-3);
  for (int i = 0; i < 3; ++i) buf.add(NStepTransition{});
  const std::vector<std::size_t> idx = {0, 1, 2};
  const std::vector<double> td = {1.0 - 1e-3, 2.0 - 1e-3, 3.0 - 1e-3};
  buf.update_priorities(idx, td);
  std::mt19937_64 rng(4);
  const auto s = buf.sample(500, 0.7, rng);
  std::set<std::size_t> seen(s.indices.begin(), s.indices.end());
  ASSERT_EQ(seen.size(), 3u);
  // max weight belongs to the rarest item (P = 1/6)
  for (std::size_t k = 0; k < s.indices.size(); ++k) {
    const double p = (s.indices[k] + 1.0) / 6.0;
    EXPECT_NEAR(s.weights[k], std::pow(3.0 * p, -0.7) / std::pow(3.0 / 6.0, -0.7), 1e-12);
  }
}

TEST(Learner, TerminalZeroTargetAndZeroLoss) {
  const auto st = some_state();
  QNetwork<float> zero;
  for (auto& t : zero.tensors()) t.setZero();
  const NStepTransition item = terminal_item(st, 0.0);
  EXPECT_EQ(td_targets(zero, {&item}), std::vector<double>{0.0});

  Learner learner;
  for (auto& t : learner.online.tensors()) t.setZero();
  learner.target = learner.online;
  ReplayBuffer buf(8, 0.6, 1e-3);
  for (int i = 0; i < 8; ++i) buf.add(terminal_item(st, 0.0));
  TrainerConfig cfg;
  cfg.batch_size = 4;
  std::mt19937_64 rng(0);
  const auto r = learner_step(learner, buf, cfg, rng);
  EXPECT_EQ(r.loss, 0.0);
  for (std::size_t i = 0; i < buf.size(); ++i) EXPECT_GE(buf.priority(i), 1e-3);
}

TEST(Learner, BootstrapUsesTargetMaxOverCandidates) {
  const auto st = some_state();
  QNetwork<float> target;
  target.init(5);
  NStepTransition item = terminal_item(st, -1.5);
  item.bootstrap = st;
  item.discount = 0.5;
  const auto q = candidate_q(target, *st);
  const double best = *std::max_element(q.begin(), q.end());
  EXPECT_NEAR(td_targets(target, {&item})[0], -1.5 + 0.5 * best, 1e-9);
}

TEST(Learner, SoftUpdateLimitsAndDescent) {
  const auto st = some_state();
  Learner learner({}, 7);
  QNetwork<float> other;
  other.init(8);
  learner.target = other;
  learner.online.soft_update_into(learner.target, 1.0);
  EXPECT_TRUE(learner.target == learner.online);

  ReplayBuffer buf(16, 0.6, 1e-3);
  for (int i = 0; i < 16; ++i) buf.add(terminal_item(st, -1.0));
  TrainerConfig cfg;
  cfg.batch_size = 8;
  cfg.lr = 1e-3;
  std::mt19937_64 rng(0);
  const double first = learner_step(learner, buf, cfg, rng).loss;
  double last = first;
  for (int k = 0; k < 60; ++k) last = learner_step(learner, buf, cfg, rng).loss;
  EXPECT_LT(last, 0.1 * first);
  EXPECT_EQ(learner.steps, 61);
}

TEST(Learner, BetaSchedule) {
  TrainerConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.beta_at(0), 0.4);
  EXPECT_DOUBLE_EQ(cfg.beta_at(2500), 0.7);
  EXPECT_DOUBLE_EQ(cfg.beta_at(5000), 1.0);
  EXPECT_DOUBLE_EQ(cfg.beta_at(50000), 1.0);
}

TEST(Trainer, NineNodeTreeTransitions) {
  const SearchTree tree = fixture::nine_node_tree();
  TrainerConfig cfg;
  cfg.heuristic = LeafHeuristic::deepest;
  const auto retro = trajectories_from_tree(tree, true, cfg, 0);
  std::size_t n = 0;
  for (const auto& t : retro.trajectories) n += t.size();
  EXPECT_EQ(n, 4u);

  cfg.trajectory_mode = TrajectoryMode::full_episode;
  const auto full = trajectories_from_tree(tree, true, cfg, 0);
  ASSERT_EQ(full.trajectories.size(), 1u);
  const auto& t = full.trajectories[0];
  ASSERT_EQ(t.size(), 4u);
  const std::vector<int> actions = {10, 11, 12, 16};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(t[k].action, actions[k]);
    EXPECT_EQ(t[k].reward, k == 3 ? 0.0 : -1.0);
  }
}

TEST(Trainer, EpsilonOneActsUniformly) {
  auto net = std::make_shared<QNetwork<float>>();
  net->init(0);
  TrainerConfig cfg;
  cfg.epsilon = 1.0;
  MilpInstance inst;
  std::shared_ptr<const BipartiteState> root;
  for (std::uint64_t seed = 0; !root || root->candidates.size() < 4; ++seed) {
    inst = sc(seed);
    auto pb = make_classical_policy("pb");
    SolveOptions o;
    o.capture_states = true;
    root = solve(inst, *pb, o).tree.node(0).state;
  }
  std::set<int> first;
  for (std::uint64_t s = 0; s < 60; ++s) {
    const Episode ep = collect_episode(inst, net, cfg, s);
    ASSERT_GT(ep.full_episode_length, 0);
    first.insert(ep.data.trajectories.front().front().action);
  }
  EXPECT_EQ(first.size(), root->candidates.size());
}

TEST(Trainer, ConfigOverridesAndDescribe) {
  TrainerConfig cfg;
  apply_overrides(cfg, {{"batch_size", "128"},
                        {"trajectory_mode", "full_episode"},
                        {"node_selector", "dfs"},
                        {"heuristic", "deepest"},
                        {"lr", "0.001"},
                        {"terminal_zero_requires_both_fathomed", "false"}});
  EXPECT_EQ(cfg.batch_size, 128);
  EXPECT_EQ(cfg.trajectory_mode, TrajectoryMode::full_episode);
  EXPECT_EQ(cfg.node_selector, NodeSelectorKind::dfs);
  EXPECT_EQ(cfg.heuristic, LeafHeuristic::deepest);
  EXPECT_DOUBLE_EQ(cfg.lr, 1e-3);
  EXPECT_FALSE(cfg.terminal_zero_requires_both_fathomed);
  EXPECT_THROW(apply_overrides(cfg, {{"bogus", "1"}}), ParameterError);
  EXPECT_THROW(apply_overrides(cfg, {{"batch_size", "12x"}}), ParameterError);
  EXPECT_NE(describe(cfg).find("batch_size = 128\n"), std::string::npos);

  // describe() output parses back to the same configuration
  std::map<std::string, std::string> kv;
  std::istringstream in(describe(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  TrainerConfig back;
  apply_overrides(back, kv);
  EXPECT_EQ(describe(back), describe(cfg));

  TrainerConfig bad;
  bad.buffer_capacity = 10;
  bad.buffer_init = 20;
  EXPECT_THROW(bad.validate(), ParameterError);
  TrainerConfig{}.validate();
}

TEST(Trainer, TinyRunIsDeterministic) {
  TrainerConfig cfg;
  cfg.batch_size = 8;
  cfg.buffer_init = 30;
  cfg.buffer_capacity = 500;
  cfg.learner_steps = 20;
  cfg.steps_per_epoch = 10;
  cfg.actor_steps_per_update = 1;
  cfg.net.emb = 16;
  cfg.seed = 3;
  std::vector<MilpInstance> val = {sc(9001), sc(9002), sc(9003)};
  auto stream = [](long k) { return sc(100 + static_cast<std::uint64_t>(k)); };
  const std::string path = ::testing::TempDir() + "rb_train_log.csv";
  const TrainRlResult a = train_rl(cfg, stream, val, path);
  const TrainRlResult b = train_rl(cfg, stream, val);
  ASSERT_EQ(a.log.size(), 3u);
  EXPECT_EQ(a.log[0].epoch, 0);
  EXPECT_TRUE(a.log[0].evaluated);
  EXPECT_EQ(a.log[2].learner_steps, 20);
  EXPECT_GE(a.log[2].buffer_size, 30);
  EXPECT_TRUE(a.last == b.last);
  EXPECT_TRUE(a.best == b.best);
  EXPECT_EQ(a.trajectory_lengths, b.trajectory_lengths);
  for (std::size_t k = 0; k < a.log.size(); ++k) EXPECT_EQ(epoch_log_row(a.log[k]), epoch_log_row(b.log[k]));

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, epoch_log_header());
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 3);
  std::remove(path.c_str());
}

TEST(Imitation, ExploreOneLabelsEveryNodeAndMatchesSb) {
  std::vector<LabelledSample> sink;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const MilpInstance inst = sc(seed);
    sink.clear();
    ExploreThenStrongBranch explore(1.0, seed, &sink);
    SolveOptions o;
    const SolveResult a = solve(inst, explore, o);
    auto sb = make_classical_policy("sb");
    const SolveResult b = solve(inst, *sb, o);
    EXPECT_EQ(static_cast<long>(sink.size()), a.stats.num_nodes);
    EXPECT_EQ(a.stats.num_nodes, b.stats.num_nodes);
    for (const auto& s : sink) {
      const TreeNode& n = b.tree.node(s.state->focus_node);
      EXPECT_EQ(n.branch_var, s.action);
    }
  }
}

TEST(Imitation, ExploreZeroIsPseudocost) {
  std::vector<LabelledSample> sink;
  const MilpInstance inst = sc(4, 100, 200, 0.05);
  ExploreThenStrongBranch explore(0.0, 1, &sink);
  const SolveResult a = solve(inst, explore);
  auto pb = make_classical_policy("pb");
  const SolveResult b = solve(inst, *pb);
  EXPECT_TRUE(sink.empty());
  EXPECT_EQ(a.stats.num_nodes, b.stats.num_nodes);
  EXPECT_EQ(a.stats.num_lp_iterations, b.stats.num_lp_iterations);
}

TEST(Imitation, LabelCountAndDatasetRoundTrip) {
  LabelConfig lc;
  lc.explore_prob = 0.5;
  long used = 0;
  const auto ds = label_sb([](long k) { return sc(500 + static_cast<std::uint64_t>(k)); }, 25, lc, &used);
  EXPECT_EQ(ds.size(), 25u);
  EXPECT_GT(used, 0);
  const std::string path = ::testing::TempDir() + "rb_il.json";
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  ASSERT_EQ(back.size(), ds.size());
  QNetwork<float> net;
  net.init(2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back[i].action, ds[i].action);
    EXPECT_EQ(back[i].state->var_features, ds[i].state->var_features);
    EXPECT_EQ(back[i].state->candidates, ds[i].state->candidates);
    EXPECT_EQ(candidate_q(net, *back[i].state), candidate_q(net, *ds[i].state));
  }
  {
    std::ofstream out(path, std::ios::trunc);
    out << "{\"format\": \"retrobranch-il-dataset\", \"feature_set_version\": 1, \"graphs\": [";
  }
  EXPECT_THROW(load_dataset(path), ParseError);
  std::remove(path.c_str());
}

TEST(Imitation, MemorisesOneInstance) {
  // all labels of a single solve
  std::vector<LabelledSample> one;
  for (std::uint64_t seed = 0; one.size() < 3; ++seed) {
    one.clear();
    ExploreThenStrongBranch explore(1.0, 0, &one);
    solve(sc(seed, 100, 200, 0.1), explore);
  }
  IlConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 4;
  cfg.lr = 3e-3;
  cfg.net.emb = 32;
  const IlResult r = train_il(one, {}, cfg);
  EXPECT_DOUBLE_EQ(top1_accuracy(r.best, one).accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.best_val_accuracy, 1.0);
  EXPECT_THROW(train_il({}, {}, cfg), ParameterError);
}

TEST(Imitation, SingletonsExcludedFromAccuracy) {
  auto st = std::make_shared<BipartiteState>(*some_state());
  const int c0 = st->candidates.front();
  st->candidates = {c0};
  QNetwork<float> net;
  net.init(0);
  const auto r = top1_accuracy(net, {{st, c0}});
  EXPECT_EQ(r.counted, 0);
  EXPECT_EQ(r.singletons, 1);
}
