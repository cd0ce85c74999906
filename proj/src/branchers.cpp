#include "retrobranch/branchers.hpp"

#include <algorithm>
#include <cmath>

#include "retrobranch/errors.hpp"

namespace retrobranch {

double product_score(double down_gain, double up_gain, double eps) {
  return std::max(down_gain, eps) * std::max(up_gain, eps);
}

int argmax_first(std::span<const double> scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

namespace {

void require_candidates(std::span<const int> candidates) {
  if (candidates.empty()) throw ContractError("branching policy called with no candidates");
}

double frac(double x) { return x - std::floor(x); }

}  // namespace

std::vector<ProbeResult> strong_branching_probe(BranchContext& ctx) {
  const TreeNode& node = ctx.node;
  if (!node.lp || node.lp->status != LpStatus::optimal)
    throw ContractError("strong branching needs a node with an optimal LP");
  const WarmStart hint = warm_hint(*node.lp);
  std::vector<ProbeResult> out;
  out.reserve(ctx.candidates.size());
  for (int j : ctx.candidates) {
    const double x = node.lp->x[j];
    double gain[2];
    for (int side = 0; side < 2; ++side) {
      LocalBounds b = node.bounds;
      if (side == 0) b.tighten_upper(ctx.instance, j, std::floor(x));
      else b.tighten_lower(ctx.instance, j, std::ceil(x));
      const LpResult r = ctx.lp.solve(b, &hint);
      ++ctx.probing_lp_solves;
      ctx.probing_iterations += r.iterations;
      switch (r.status) {
        case LpStatus::optimal: gain[side] = std::max(0.0, r.objective - node.dual_bound); break;
        case LpStatus::infeasible: gain[side] = kLargeGain; break;
        case LpStatus::iteration_limit:
          gain[side] = 0.0;
          ++ctx.probing_limit_warnings;
          break;
        case LpStatus::unbounded: throw SolverError("probe LP unbounded below a bounded node");
      }
    }
    out.push_back({gain[0], gain[1], product_score(gain[0], gain[1])});
  }
  return out;
}

int StrongBranching::choose(BranchContext& ctx) {
  require_candidates(ctx.candidates);
  if (ctx.candidates.size() == 1) return ctx.candidates[0];
  const std::vector<ProbeResult> probes = strong_branching_probe(ctx);
  std::vector<double> scores;
  for (const auto& p : probes) scores.push_back(p.score);
  return ctx.candidates[argmax_first(scores)];
}

void PseudocostStats::resize(int num_vars) {
  for (int d = 0; d < 2; ++d) {
    sum_[d].assign(static_cast<std::size_t>(num_vars), 0.0);
    count_[d].assign(static_cast<std::size_t>(num_vars), 0);
  }
}

void PseudocostStats::update(int var, Direction dir, double unit_gain) {
  if (var >= num_vars()) {
    for (int d = 0; d < 2; ++d) {
      sum_[d].resize(static_cast<std::size_t>(var) + 1, 0.0);
      count_[d].resize(static_cast<std::size_t>(var) + 1, 0);
    }
  }
  if (count_[dir][var] == 0) ++global_count_[dir];
  // The global average is over per-variable means; keep it in sync.
  if (count_[dir][var] > 0) global_sum_[dir] -= sum_[dir][var] / count_[dir][var];
  sum_[dir][var] += unit_gain;
  ++count_[dir][var];
  global_sum_[dir] += sum_[dir][var] / count_[dir][var];
}

double PseudocostStats::mean(int var, Direction dir) const {
  if (var < num_vars() && count_[dir][var] > 0) return sum_[dir][var] / count_[dir][var];
  if (global_count_[dir] > 0) return global_sum_[dir] / static_cast<double>(global_count_[dir]);
  return 1.0;
}

std::vector<double> PseudocostBranching::scores(const TreeNode& node, std::span<const int> candidates) const {
  std::vector<double> s;
  s.reserve(candidates.size());
  for (int j : candidates) {
    const double f = frac(node.lp->x[j]);
    s.push_back(product_score(stats_.mean(j, PseudocostStats::down) * f, stats_.mean(j, PseudocostStats::up) * (1.0 - f)));
  }
  return s;
}

int PseudocostBranching::choose(BranchContext& ctx) {
  require_candidates(ctx.candidates);
  if (stats_.num_vars() != ctx.instance.num_vars()) stats_.resize(ctx.instance.num_vars());
  const std::vector<double> s = scores(ctx.node, ctx.candidates);
  return ctx.candidates[argmax_first(s)];
}

void PseudocostBranching::observe_children(const TreeNode& parent, int var, const LpResult& down,
                                           const LpResult& up) {
  const double f = frac(parent.lp->x[var]);
  if (down.status == LpStatus::optimal && f > 0.0)
    stats_.update(var, PseudocostStats::down, std::max(0.0, down.objective - parent.dual_bound) / f);
  if (up.status == LpStatus::optimal && f < 1.0)
    stats_.update(var, PseudocostStats::up, std::max(0.0, up.objective - parent.dual_bound) / (1.0 - f));
}

int random_choose(std::span<const int> candidates, std::mt19937_64& rng) {
  require_candidates(candidates);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng)];
}

int most_fractional_choose(const LpResult& lp, std::span<const int> candidates) {
  require_candidates(candidates);
  std::vector<double> dist;
  for (int j : candidates) dist.push_back(std::abs(lp.x[j] - std::round(lp.x[j])));
  return candidates[argmax_first(dist)];
}

int RandomBranching::choose(BranchContext& ctx) { return random_choose(ctx.candidates, ctx.rng); }

int MostFractionalBranching::choose(BranchContext& ctx) { return most_fractional_choose(*ctx.node.lp, ctx.candidates); }

int neural_choose(std::span<const double> q, std::span<const int> candidates, ActingMode mode, double epsilon,
                  double temperature, std::mt19937_64& rng) {
  require_candidates(candidates);
  if (q.size() != candidates.size()) throw ContractError("neural_choose: Q and candidate counts differ");
  for (double v : q)
    if (!std::isfinite(v)) throw PolicyError("non-finite Q-value from the network");
  if (mode == ActingMode::greedy) return candidates[argmax_first(q)];
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < epsilon) return random_choose(candidates, rng);
  const double top = *std::max_element(q.begin(), q.end());
  std::vector<double> w;
  for (double v : q) w.push_back(std::exp((v - top) / temperature));
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return candidates[pick(rng)];
}

std::unique_ptr<BranchingPolicy> make_classical_policy(const std::string& name) {
  if (name == "sb") return std::make_unique<StrongBranching>();
  if (name == "pb") return std::make_unique<PseudocostBranching>();
  if (name == "random") return std::make_unique<RandomBranching>();
  if (name == "mostfrac") return std::make_unique<MostFractionalBranching>();
  throw ParameterError("unknown branching policy '" + name + "' (expected sb, pb, random or mostfrac)");
}

}  // namespace retrobranch
