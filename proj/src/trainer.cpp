#include "retrobranch/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "retrobranch/branchers.hpp"
#include "retrobranch/errors.hpp"

namespace retrobranch {

const char* to_string(TrajectoryMode m) { return m == TrajectoryMode::retro ? "retro" : "full_episode"; }

TrajectoryMode trajectory_mode_from_string(const std::string& name) {
  if (name == "retro") return TrajectoryMode::retro;
  if (name == "full_episode") return TrajectoryMode::full_episode;
  throw ParameterError("unknown trajectory_mode '" + name + "' (expected retro or full_episode)");
}

void TrainerConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ParameterError(std::string("invalid trainer config: ") + what);
  };
  need(batch_size > 0, "batch_size must be positive");
  need(actor_steps_per_update > 0, "actor_steps_per_update must be positive");
  need(lr > 0.0, "lr must be positive");
  need(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
  need(buffer_init > 0, "buffer_init must be positive");
  need(buffer_capacity >= buffer_init, "buffer_capacity must be >= buffer_init");
  need(per_alpha >= 0.0, "per_alpha must be non-negative");
  need(per_beta > 0.0 && per_beta <= 1.0, "per_beta must be in (0, 1]");
  need(per_beta_steps > 0, "per_beta_steps must be positive");
  need(min_priority > 0.0, "min_priority must be positive");
  need(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
  need(grad_clip > 0.0, "grad_clip must be positive");
  need(n_step > 0, "n_step must be positive");
  need(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must be in [0, 1]");
  need(temperature > 0.0, "temperature must be positive");
  need(learner_steps > 0, "learner_steps must be positive");
  need(steps_per_epoch > 0, "steps_per_epoch must be positive");
  need(eval_every > 0, "eval_every must be positive");
  need(max_episode_nodes != 0, "max_episode_nodes must be positive or -1");
  need(net.emb > 0 && net.conv_pairs > 0, "emb_dim and conv_pairs must be positive");
  need(net.init_std > 0.0, "init_std must be positive");
}

double TrainerConfig::beta_at(long learner_step) const {
  const double frac = std::min(1.0, static_cast<double>(learner_step) / static_cast<double>(per_beta_steps));
  return per_beta + (1.0 - per_beta) * frac;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ParameterError("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ParameterError("config key '" + key + "': expected true or false, got '" + text + "'");
}

struct Field {
  std::function<void(TrainerConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainerConfig&)> get;
};

template <class T>
std::string show(T v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

#define RB_NUM(key, member, type)                                                                        \
  {                                                                                                      \
    key, Field {                                                                                         \
      [](TrainerConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<type>(k, v); }, \
          [](const TrainerConfig& c) { return show(c.member); }                                          \
    }                                                                                                    \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      RB_NUM("batch_size", batch_size, int),
      RB_NUM("actor_steps_per_update", actor_steps_per_update, int),
      RB_NUM("lr", lr, double),
      RB_NUM("gamma", gamma, double),
      RB_NUM("buffer_init", buffer_init, long),
      RB_NUM("buffer_capacity", buffer_capacity, long),
      RB_NUM("per_alpha", per_alpha, double),
      RB_NUM("per_beta", per_beta, double),
      RB_NUM("per_beta_steps", per_beta_steps, long),
      RB_NUM("min_priority", min_priority, double),
      RB_NUM("tau", tau, double),
      RB_NUM("grad_clip", grad_clip, double),
      RB_NUM("n_step", n_step, int),
      RB_NUM("epsilon", epsilon, double),
      RB_NUM("temperature", temperature, double),
      RB_NUM("learner_steps", learner_steps, long),
      RB_NUM("steps_per_epoch", steps_per_epoch, long),
      RB_NUM("eval_every", eval_every, int),
      RB_NUM("max_episode_nodes", max_episode_nodes, long),
      RB_NUM("seed", seed, std::uint64_t),
      RB_NUM("emb_dim", net.emb, int),
      RB_NUM("conv_pairs", net.conv_pairs, int),
      RB_NUM("init_std", net.init_std, double),
      {"trajectory_mode",
       {[](TrainerConfig& c, const std::string&, const std::string& v) {
          c.trajectory_mode = trajectory_mode_from_string(v);
        },
        [](const TrainerConfig& c) { return std::string(to_string(c.trajectory_mode)); }}},
      {"heuristic",
       {[](TrainerConfig& c, const std::string&, const std::string& v) { c.heuristic = leaf_heuristic_from_string(v); },
        [](const TrainerConfig& c) { return std::string(to_string(c.heuristic)); }}},
      {"node_selector",
       {[](TrainerConfig& c, const std::string&, const std::string& v) {
          c.node_selector = node_selector_from_string(v);
        },
        [](const TrainerConfig& c) { return std::string(to_string(c.node_selector)); }}},
      {"terminal_zero_requires_both_fathomed",
       {[](TrainerConfig& c, const std::string& k, const std::string& v) {
          c.terminal_zero_requires_both_fathomed = parse_bool(k, v);
        },
        [](const TrainerConfig& c) { return std::string(c.terminal_zero_requires_both_fathomed ? "true" : "false"); }}},
      {"readout",
       {[](TrainerConfig& c, const std::string&, const std::string& v) { c.net.readout = readout_from_string(v); },
        [](const TrainerConfig& c) { return std::string(to_string(c.net.readout)); }}},
  };
  return f;
}

#undef RB_NUM

}  // namespace

void apply_overrides(TrainerConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ParameterError("unknown trainer config key '" + key + "'");
    it->second.set(cfg, key, value);
  }
}

std::string describe(const TrainerConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

NeuralBranching::NeuralBranching(std::shared_ptr<const QNetwork<float>> net, ActingMode mode, double epsilon,
                                 double temperature, std::string name)
    : net_(std::move(net)), mode_(mode), epsilon_(epsilon), temperature_(temperature), name_(std::move(name)) {
  if (!net_) throw ContractError("neural brancher needs a network");
}

int NeuralBranching::choose(BranchContext& ctx) {
  if (!ctx.state) throw ContractError("neural brancher called without an encoded state");
  const std::vector<double> q = candidate_q(*net_, *ctx.state);
  return neural_choose(q, ctx.state->candidates, mode_, epsilon_, temperature_, ctx.rng);
}

EpisodeTrajectories trajectories_from_tree(const SearchTree& tree, bool solved, const TrainerConfig& cfg,
                                           std::uint64_t seed) {
  EpisodeTrajectories out;
  if (cfg.trajectory_mode == TrajectoryMode::full_episode) {
    const RetroTrajectory t = full_episode(tree, solved);
    if (!t.nodes.empty()) out.trajectories.push_back(emit_transitions(t, tree));
    return out;
  }
  RetroOptions ro;
  ro.heuristic = cfg.heuristic;
  ro.seed = seed;
  ro.terminal_zero_requires_both_fathomed = cfg.terminal_zero_requires_both_fathomed;
  const RetroResult r = construct_trajectories(tree, ro);
  out.dropped_nodes = r.dropped_nodes;
  for (const auto& t : r.trajectories) out.trajectories.push_back(emit_transitions(t, tree));
  return out;
}

Episode collect_episode(const MilpInstance& inst, std::shared_ptr<const QNetwork<float>> net,
                        const TrainerConfig& cfg, std::uint64_t seed) {
  NeuralBranching policy(std::move(net), ActingMode::epsilon_stochastic, cfg.epsilon, cfg.temperature);
  SolveOptions opts;
  opts.selector = cfg.node_selector;
  opts.seed = seed;
  opts.capture_states = true;
  opts.limits.max_nodes = cfg.max_episode_nodes;
  SolveResult res = solve(inst, policy, opts);
  Episode ep;
  ep.stats = res.stats;
  ep.full_episode_length = res.stats.num_nodes;
  ep.data = trajectories_from_tree(res.tree, res.stats.status == SolveStatus::optimal, cfg, seed);
  return ep;
}

Learner::Learner(const QNetConfig& net_cfg, std::uint64_t seed) : online(net_cfg), target(net_cfg) {
  online.init(seed);
  target = online;
}

std::vector<double> td_targets(const QNetwork<float>& target, const std::vector<const NStepTransition*>& items) {
  std::vector<double> y(items.size());
  std::vector<const BipartiteState*> next;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < items.size(); ++i) {
    y[i] = items[i]->reward;
    if (items[i]->bootstrap && items[i]->discount != 0.0) {
      next.push_back(items[i]->bootstrap.get());
      owner.push_back(i);
    }
  }
  if (next.empty()) return y;
  const GraphBatch batch = make_batch(next);
  const auto q = target.forward(batch);
  for (std::size_t g = 0; g < next.size(); ++g) {
    const auto& cands = next[g]->candidates;
    if (cands.empty()) throw ContractError("bootstrap state without branching candidates");
    double best = -kInf;
    for (int j : cands) best = std::max(best, static_cast<double>(q[batch.var_offset[g] + j]));
    y[owner[g]] += items[owner[g]]->discount * best;
  }
  return y;
}

LearnerStepResult learner_step(Learner& learner, ReplayBuffer& buffer, const TrainerConfig& cfg,
                               std::mt19937_64& rng) {
  const auto sample = buffer.sample(static_cast<std::size_t>(cfg.batch_size), cfg.beta_at(learner.steps), rng);
  const std::size_t b = sample.indices.size();
  std::vector<const NStepTransition*> items;
  std::vector<const BipartiteState*> states;
  for (std::size_t i : sample.indices) {
    items.push_back(&buffer.at(i));
    states.push_back(buffer.at(i).state.get());
  }
  const std::vector<double> y = td_targets(learner.target, items);

  const GraphBatch batch = make_batch(states);
  ForwardCache<float> cache;
  const auto q = learner.online.forward(batch, &cache);
  QNetwork<float>::Vec dq = QNetwork<float>::Vec::Zero(q.size());
  std::vector<double> td(b);
  LearnerStepResult r;
  for (std::size_t k = 0; k < b; ++k) {
    const int idx = batch.var_offset[k] + items[k]->action;
    td[k] = static_cast<double>(q[idx]) - y[k];
    r.loss += sample.weights[k] * td[k] * td[k] / static_cast<double>(b);
    r.mean_abs_td += std::abs(td[k]) / static_cast<double>(b);
    dq[idx] += static_cast<float>(2.0 * sample.weights[k] * td[k] / static_cast<double>(b));
  }
  if (!std::isfinite(r.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at learner step " << learner.steps << " (batch " << b << ", first target " << y[0]
        << ", first td " << td[0] << ")";
    throw TrainingError(msg.str());
  }
  AdamConfig adam;
  adam.lr = cfg.lr;
  adam.clip = cfg.grad_clip;
  r.grad_norm = adam_step(learner.online, learner.online.backward(cache, dq), learner.adam, adam);
  buffer.update_priorities(sample.indices, td);
  learner.online.soft_update_into(learner.target, cfg.tau);
  ++learner.steps;
  return r;
}

ValidationResult validate_policy(std::shared_ptr<const QNetwork<float>> net, const std::vector<MilpInstance>& instances,
                                 NodeSelectorKind selector, long max_nodes) {
  ValidationResult out;
  NeuralBranching policy(std::move(net));
  long counted = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    SolveOptions opts;
    opts.selector = selector;
    opts.seed = i;
    opts.limits.max_nodes = max_nodes;
    const SolveResult r = solve(instances[i], policy, opts);
    if (r.stats.status != SolveStatus::optimal) ++out.limit_hits;
    out.mean_nodes += static_cast<double>(r.stats.num_nodes);
    out.mean_lp_iterations += static_cast<double>(r.stats.num_lp_iterations);
    ++counted;
  }
  if (counted > 0) {
    out.mean_nodes /= static_cast<double>(counted);
    out.mean_lp_iterations /= static_cast<double>(counted);
  }
  return out;
}

std::string epoch_log_header() {
  return "epoch,learner_steps,actor_steps,episodes,loss,mean_trajectory_length,mean_episode_length,buffer_size,"
         "dropped_nodes,val_nodes,val_lp_iterations";
}

std::string epoch_log_row(const EpochLog& e) {
  std::ostringstream o;
  o << std::setprecision(10) << e.epoch << ',' << e.learner_steps << ',' << e.actor_steps << ',' << e.episodes << ','
    << e.loss << ',' << e.mean_trajectory_length << ',' << e.mean_episode_length << ',' << e.buffer_size << ','
    << e.dropped_nodes << ',';
  if (e.evaluated) o << e.val_nodes << ',' << e.val_lp_iterations;
  else o << ',';
  return o.str();
}

namespace {

void write_log(const std::string& path, const std::vector<EpochLog>& log) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write training log " + path);
  out << epoch_log_header() << "\n";
  for (const auto& e : log) out << epoch_log_row(e) << "\n";
}

constexpr double kDivergentLoss = 1e6;
constexpr int kDivergencePatience = 100;
constexpr long kMaxEmptyEpisodes = 10000;

}  // namespace

TrainRlResult train_rl(const TrainerConfig& cfg, const std::function<MilpInstance(long)>& make_instance,
                       const std::vector<MilpInstance>& validation, const std::string& log_csv) {
  cfg.validate();
  Learner learner(cfg.net, cfg.seed);
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity), cfg.per_alpha, cfg.min_priority);
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
  TrainRlResult result{{}, learner.online, learner.online, 0, 0.0, {}, {}};

  double best_lp = 0.0;
  auto evaluate = [&](EpochLog& e) {
    const ValidationResult v = validate_policy(std::make_shared<const QNetwork<float>>(learner.online), validation,
                                               cfg.node_selector, cfg.max_episode_nodes);
    e.evaluated = true;
    e.val_nodes = v.mean_nodes;
    e.val_lp_iterations = v.mean_lp_iterations;
    const bool better = result.log.empty() || v.mean_nodes < result.best_val_nodes ||
                        (v.mean_nodes == result.best_val_nodes && v.mean_lp_iterations < best_lp);
    if (better) {
      result.best = learner.online;
      result.best_epoch = e.epoch;
      result.best_val_nodes = v.mean_nodes;
      best_lp = v.mean_lp_iterations;
    }
  };

  {
    EpochLog e0;
    evaluate(e0);
    result.log.push_back(e0);
    write_log(log_csv, result.log);
  }

  EpochLog cur;
  cur.epoch = 1;
  long episodes = 0, actor_steps = 0, pending = 0;
  double loss_sum = 0.0;
  long loss_count = 0, traj_sum = 0, traj_count = 0, ep_sum = 0, ep_count = 0, dropped = 0;
  int divergent = 0;
  auto snapshot = std::make_shared<const QNetwork<float>>(learner.online);

  while (learner.steps < cfg.learner_steps) {
    const MilpInstance inst = make_instance(episodes);
    const Episode ep = collect_episode(inst, snapshot, cfg, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(episodes));
    ++episodes;
    actor_steps += ep.stats.num_nodes;
    ep_sum += ep.full_episode_length;
    ++ep_count;
    result.episode_lengths.push_back(ep.full_episode_length);
    dropped += ep.data.dropped_nodes;
    for (const auto& traj : ep.data.trajectories) {
      traj_sum += static_cast<long>(traj.size());
      ++traj_count;
      result.trajectory_lengths.push_back(static_cast<int>(traj.size()));
      for (auto& t : n_step_transitions(traj, cfg.n_step, cfg.gamma)) buffer.add(std::move(t));
    }
    if (buffer.size() == 0 && episodes >= kMaxEmptyEpisodes)
      throw TrainingError(std::to_string(episodes) + " episodes produced no transitions (every root LP integral?)");
    if (static_cast<long>(buffer.size()) < cfg.buffer_init) continue;
    pending += ep.stats.num_nodes;
    while (pending >= cfg.actor_steps_per_update && learner.steps < cfg.learner_steps) {
      pending -= cfg.actor_steps_per_update;
      const LearnerStepResult r = learner_step(learner, buffer, cfg, rng);
      loss_sum += r.loss;
      ++loss_count;
      divergent = r.loss > kDivergentLoss ? divergent + 1 : 0;
      if (divergent >= kDivergencePatience) {
        write_log(log_csv, result.log);
        throw TrainingError("loss above 1e6 for " + std::to_string(kDivergencePatience) +
                            " consecutive learner steps (last " + std::to_string(r.loss) + ")");
      }
      if (learner.steps % cfg.steps_per_epoch == 0 || learner.steps == cfg.learner_steps) {
        cur.learner_steps = learner.steps;
        cur.actor_steps = actor_steps;
        cur.episodes = episodes;
        cur.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        cur.mean_trajectory_length = traj_count ? static_cast<double>(traj_sum) / static_cast<double>(traj_count) : 0.0;
        cur.mean_episode_length = ep_count ? static_cast<double>(ep_sum) / static_cast<double>(ep_count) : 0.0;
        cur.buffer_size = static_cast<long>(buffer.size());
        cur.dropped_nodes = dropped;
        if (cur.epoch % cfg.eval_every == 0 || learner.steps == cfg.learner_steps) evaluate(cur);
        result.log.push_back(cur);
        write_log(log_csv, result.log);
        const int next = cur.epoch + 1;
        cur = EpochLog{};
        cur.epoch = next;
        loss_sum = 0.0;
        loss_count = traj_sum = traj_count = ep_sum = ep_count = dropped = 0;
      }
    }
    snapshot = std::make_shared<const QNetwork<float>>(learner.online);
  }
  result.last = learner.online;
  return result;
}

}  // namespace retrobranch
