#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "retrobranch/bnb.hpp"
#include "retrobranch/branchers.hpp"
#include "retrobranch/qnet.hpp"
#include "retrobranch/replay.hpp"
#include "retrobranch/retro.hpp"

namespace retrobranch {

enum class TrajectoryMode { retro, full_episode };
const char* to_string(TrajectoryMode m);
TrajectoryMode trajectory_mode_from_string(const std::string& name);

struct TrainerConfig {
  int batch_size = 64;
  int actor_steps_per_update = 5;  // branching decisions per learner step
  double lr = 5e-5;
  double gamma = 0.99;
  long buffer_init = 20000;
  long buffer_capacity = 100000;
  double per_alpha = 0.6;
  double per_beta = 0.4;
  long per_beta_steps = 5000;
  double min_priority = 1e-3;
  double tau = 1e-4;
  double grad_clip = 10.0;
  int n_step = 3;
  double epsilon = 0.025;
  double temperature = 1.0;
  TrajectoryMode trajectory_mode = TrajectoryMode::retro;
  LeafHeuristic heuristic = LeafHeuristic::mlpg;
  bool terminal_zero_requires_both_fathomed = true;
  NodeSelectorKind node_selector = NodeSelectorKind::best_first;

  // run shape
  long learner_steps = 5000;
  long steps_per_epoch = 100;  // learner steps
  int eval_every = 1;          // epochs
  long max_episode_nodes = 2000;
  std::uint64_t seed = 0;
  QNetConfig net;

  /// Throws ParameterError naming the first invalid field.
  void validate() const;
  /// PER exponent after `learner_step` updates, linear to 1.
  double beta_at(long learner_step) const;
};

/// Apply `key -> value` overrides.  Unknown keys and bad values throw
/// ParameterError.
void apply_overrides(TrainerConfig& cfg, const std::map<std::string, std::string>& kv);
/// Canonical `key = value` text of every field, sorted by key.
std::string describe(const TrainerConfig& cfg);

/// Scores candidates with a Q-network.  Greedy by default.
class NeuralBranching : public BranchingPolicy {
 public:
  explicit NeuralBranching(std::shared_ptr<const QNetwork<float>> net, ActingMode mode = ActingMode::greedy,
                           double epsilon = 0.0, double temperature = 1.0, std::string name = "neural");
  std::string name() const override { return name_; }
  int choose(BranchContext& ctx) override;
  bool wants_state() const override { return true; }

  void set_network(std::shared_ptr<const QNetwork<float>> net) { net_ = std::move(net); }

 private:
  std::shared_ptr<const QNetwork<float>> net_;
  ActingMode mode_;
  double epsilon_;
  double temperature_;
  std::string name_;
};

/// Split a solved tree into training trajectories of transitions.
struct EpisodeTrajectories {
  std::vector<std::vector<Transition>> trajectories;
  long dropped_nodes = 0;
};
EpisodeTrajectories trajectories_from_tree(const SearchTree& tree, bool solved, const TrainerConfig& cfg,
                                           std::uint64_t seed);

struct Episode {
  SolveStats stats;
  EpisodeTrajectories data;
  long full_episode_length = 0;  // focused nodes
};

/// Solve `inst` with the epsilon-stochastic policy and cut its tree into trajectories.
Episode collect_episode(const MilpInstance& inst, std::shared_ptr<const QNetwork<float>> net,
                        const TrainerConfig& cfg, std::uint64_t seed);

struct Learner {
  QNetwork<float> online;
  QNetwork<float> target;
  AdamState<float> adam;
  long steps = 0;

  explicit Learner(const QNetConfig& net_cfg = {}, std::uint64_t seed = 0);
};

struct LearnerStepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  double mean_abs_td = 0.0;
};

/// One prioritised n-step double-network update.  Targets use the target
/// network's max over next-state candidates.
LearnerStepResult learner_step(Learner& learner, ReplayBuffer& buffer, const TrainerConfig& cfg,
                               std::mt19937_64& rng);

/// TD targets r + discount * max_a Q_target(s', a) for the given items.
std::vector<double> td_targets(const QNetwork<float>& target, const std::vector<const NStepTransition*>& items);

struct ValidationResult {
  double mean_nodes = 0.0;
  double mean_lp_iterations = 0.0;
  long limit_hits = 0;
};

/// Greedy solves of every instance.
ValidationResult validate_policy(std::shared_ptr<const QNetwork<float>> net, const std::vector<MilpInstance>& instances,
                                 NodeSelectorKind selector, long max_nodes = -1);

struct EpochLog {
  int epoch = 0;
  long learner_steps = 0;
  long actor_steps = 0;
  long episodes = 0;
  double loss = 0.0;
  double mean_trajectory_length = 0.0;
  double mean_episode_length = 0.0;
  long buffer_size = 0;
  long dropped_nodes = 0;
  bool evaluated = false;
  double val_nodes = 0.0;
  double val_lp_iterations = 0.0;
};

std::string epoch_log_header();
std::string epoch_log_row(const EpochLog& e);

struct TrainRlResult {
  std::vector<EpochLog> log;
  QNetwork<float> best;
  QNetwork<float> last;
  int best_epoch = 0;
  double best_val_nodes = 0.0;
  std::vector<int> trajectory_lengths;
  std::vector<long> episode_lengths;
};

/// Instances for episode `k` come from `make_instance(k)`.  Epoch 0 is the
/// untrained network; the best validated network is kept (ties by LP iterations).
/// When `log_csv` is non-empty the log is rewritten after every epoch.
TrainRlResult train_rl(const TrainerConfig& cfg, const std::function<MilpInstance(long)>& make_instance,
                       const std::vector<MilpInstance>& validation, const std::string& log_csv = "");

}  // namespace retrobranch
