#include <algorithm>
#include <cmath>

#include "retrobranch/errors.hpp"
#include "retrobranch/lp.hpp"

namespace retrobranch {

void LocalBounds::tighten_upper(const MilpInstance& inst, int var, double upper) {
  const double lo = lower(inst, var);
  const double hi = std::min(this->upper(inst, var), upper);
  overrides_[var] = {lo, hi};
}

void LocalBounds::tighten_lower(const MilpInstance& inst, int var, double lower) {
  const double lo = std::max(this->lower(inst, var), lower);
  const double hi = upper(inst, var);
  overrides_[var] = {lo, hi};
}

double LocalBounds::lower(const MilpInstance& inst, int var) const {
  auto it = overrides_.find(var);
  return it == overrides_.end() ? inst.lb[var] : std::max(inst.lb[var], it->second.first);
}

double LocalBounds::upper(const MilpInstance& inst, int var) const {
  auto it = overrides_.find(var);
  return it == overrides_.end() ? inst.ub[var] : std::min(inst.ub[var], it->second.second);
}

bool LocalBounds::consistent() const {
  return std::all_of(overrides_.begin(), overrides_.end(),
                     [](const auto& kv) { return kv.second.first <= kv.second.second; });
}

const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::iteration_limit: return "iteration_limit";
    case LpStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

bool is_integral_value(double v, double tol) { return std::abs(v - std::round(v)) <= tol; }

LpSolver::LpSolver(const MilpInstance& inst, LpOptions options)
    : inst_(&inst), options_(options), n_(inst.num_vars()), m_(inst.num_cons()) {
  std::vector<int> count(n_, 0);
  for (const Row& row : inst.rows)
    for (const Coef& c : row.coefs) ++count[c.var];
  col_start_.assign(n_ + 1, 0);
  for (int j = 0; j < n_; ++j) col_start_[j + 1] = col_start_[j] + count[j];
  col_row_.resize(col_start_[n_]);
  col_val_.resize(col_start_[n_]);
  std::vector<int> fill(col_start_.begin(), col_start_.end() - 1);
  for (int i = 0; i < m_; ++i)
    for (const Coef& c : inst.rows[i].coefs) {
      col_row_[fill[c.var]] = i;
      col_val_[fill[c.var]++] = c.value;
    }

  cost_.assign(n_ + m_, 0.0);
  std::copy(inst.objective.begin(), inst.objective.end(), cost_.begin());
  rhs_.resize(m_);
  for (int i = 0; i < m_; ++i) rhs_[i] = inst.rows[i].rhs;
}

double LpSolver::column_dot(int col, const Eigen::VectorXd& y) const {
  if (col >= n_) return y[col - n_];
  double s = 0.0;
  for (int k = col_start_[col]; k < col_start_[col + 1]; ++k) s += col_val_[k] * y[col_row_[k]];
  return s;
}

// out += scale * B^{-1} a_col
void LpSolver::add_column(int col, double scale, Eigen::VectorXd& out) const {
  if (col >= n_) {
    out.noalias() += scale * binv_.col(col - n_);
    return;
  }
  for (int k = col_start_[col]; k < col_start_[col + 1]; ++k)
    out.noalias() += (scale * col_val_[k]) * binv_.col(col_row_[k]);
}

void LpSolver::cold_start() {
  status_.assign(n_ + m_, BasisStatus::at_lower);
  head_.resize(m_);
  for (int j = 0; j < n_; ++j) {
    if (std::isfinite(lo_[j])) {
      status_[j] = BasisStatus::at_lower;
      x_[j] = lo_[j];
    } else if (std::isfinite(hi_[j])) {
      status_[j] = BasisStatus::at_upper;
      x_[j] = hi_[j];
    } else {
      status_[j] = BasisStatus::free_zero;
      x_[j] = 0.0;
    }
  }
  for (int i = 0; i < m_; ++i) {
    head_[i] = n_ + i;
    status_[n_ + i] = BasisStatus::basic;
  }
  binv_.setIdentity(m_, m_);
  recompute_basics();
}

bool LpSolver::apply_hint(const WarmStart& hint) {
  if (hint.num_vars != n_ || hint.num_cons != m_) return false;
  if (static_cast<int>(hint.basic_columns.size()) != m_) return false;
  if (static_cast<int>(hint.status.size()) != n_ + m_) return false;
  std::vector<char> seen(n_ + m_, 0);
  for (int c : hint.basic_columns) {
    if (c < 0 || c >= n_ + m_ || seen[c] || hint.status[c] != BasisStatus::basic) return false;
    seen[c] = 1;
  }
  status_ = hint.status;
  head_ = hint.basic_columns;
  for (int j = 0; j < n_ + m_; ++j) {
    if (status_[j] == BasisStatus::basic) {
      if (!seen[j]) return false;
      continue;
    }
    BasisStatus s = status_[j];
    if (s == BasisStatus::at_lower && !std::isfinite(lo_[j])) s = BasisStatus::at_upper;
    if (s == BasisStatus::at_upper && !std::isfinite(hi_[j])) s = BasisStatus::at_lower;
    if (s == BasisStatus::at_lower && !std::isfinite(lo_[j])) s = BasisStatus::free_zero;
    if (s == BasisStatus::free_zero && std::isfinite(lo_[j])) s = BasisStatus::at_lower;
    if (s == BasisStatus::free_zero && std::isfinite(hi_[j])) s = BasisStatus::at_upper;
    status_[j] = s;
    x_[j] = s == BasisStatus::at_lower ? lo_[j] : s == BasisStatus::at_upper ? hi_[j] : 0.0;
  }
  if (!refactor()) return false;
  recompute_basics();
  return true;
}

bool LpSolver::refactor() {
  if (m_ == 0) return true;
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(m_, m_);
  for (int p = 0; p < m_; ++p) {
    const int col = head_[p];
    if (col >= n_) {
      basis(col - n_, p) = 1.0;
    } else {
      for (int k = col_start_[col]; k < col_start_[col + 1]; ++k) basis(col_row_[k], p) = col_val_[k];
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(basis);
  lu.setThreshold(1e-11);
  if (!lu.isInvertible()) return false;
  binv_ = lu.inverse();
  return true;
}

// x_B = B^{-1} (b - N x_N)
void LpSolver::recompute_basics() {
  Eigen::VectorXd r = rhs_;
  for (int j = 0; j < n_ + m_; ++j) {
    if (status_[j] == BasisStatus::basic || x_[j] == 0.0) continue;
    if (j >= n_) {
      r[j - n_] -= x_[j];
    } else {
      for (int k = col_start_[j]; k < col_start_[j + 1]; ++k) r[col_row_[k]] -= col_val_[k] * x_[j];
    }
  }
  const Eigen::VectorXd xb = binv_ * r;
  for (int p = 0; p < m_; ++p) x_[head_[p]] = xb[p];
}

LpResult LpSolver::solve(const LocalBounds& bounds, const WarmStart* hint) {
  const MilpInstance& inst = *inst_;
  warm_ = false;
  if (!bounds.consistent()) return extract(LpStatus::infeasible, 0);

  lo_.assign(n_ + m_, 0.0);
  hi_.assign(n_ + m_, 0.0);
  x_.assign(n_ + m_, 0.0);
  for (int j = 0; j < n_; ++j) {
    lo_[j] = bounds.lower(inst, j);
    hi_[j] = bounds.upper(inst, j);
    if (lo_[j] > hi_[j]) return extract(LpStatus::infeasible, 0);
  }
  for (int i = 0; i < m_; ++i) {
    switch (inst.rows[i].sense) {
      case Sense::le: lo_[n_ + i] = 0.0; hi_[n_ + i] = kInf; break;
      case Sense::ge: lo_[n_ + i] = -kInf; hi_[n_ + i] = 0.0; break;
      case Sense::eq: lo_[n_ + i] = 0.0; hi_[n_ + i] = 0.0; break;
    }
  }

  warm_ = hint != nullptr && apply_hint(*hint);
  if (!warm_) cold_start();

  const double ftol = options_.feasibility_tol;
  const double dtol = options_.optimality_tol;
  const double ptol = options_.pivot_tol;
  const int total = n_ + m_;

  long iterations = 0;
  int since_refactor = 0;
  int stall = 0;
  int recoveries = 0;
  Eigen::VectorXd cb(m_), y(m_), alpha(m_);

  for (;;) {
    // Phase selection: minimise the sum of infeasibilities while any basic
    // variable violates its bounds, otherwise the true objective.
    bool phase_one = false;
    for (int p = 0; p < m_; ++p) {
      const int col = head_[p];
      const double v = x_[col];
      if (v < lo_[col] - ftol) { cb[p] = -1.0; phase_one = true; }
      else if (v > hi_[col] + ftol) { cb[p] = 1.0; phase_one = true; }
      else cb[p] = 0.0;
    }
    if (!phase_one)
      for (int p = 0; p < m_; ++p) cb[p] = cost_[head_[p]];
    y.noalias() = binv_.transpose() * cb;

    const bool bland = stall > options_.stall_threshold;
    int enter = -1;
    double enter_d = 0.0;
    double best_score = 0.0;
    for (int j = 0; j < total; ++j) {
      const BasisStatus s = status_[j];
      if (s == BasisStatus::basic) continue;
      if (lo_[j] == hi_[j]) continue;  // fixed columns never enter
      const double cj = phase_one ? 0.0 : cost_[j];
      const double d = cj - column_dot(j, y);
      bool eligible = false;
      if (s == BasisStatus::at_lower) eligible = d < -dtol;
      else if (s == BasisStatus::at_upper) eligible = d > dtol;
      else eligible = std::abs(d) > dtol;
      if (!eligible) continue;
      if (bland) {
        enter = j;
        enter_d = d;
        break;
      }
      if (std::abs(d) > best_score) {
        best_score = std::abs(d);
        enter = j;
        enter_d = d;
      }
    }

    if (enter < 0) {
      // Guard against drift before declaring a verdict.
      if (since_refactor > 0 && recoveries < 3) {
        ++recoveries;
        if (!refactor()) throw SolverError("singular basis during final refactorisation");
        recompute_basics();
        since_refactor = 0;
        continue;
      }
      return extract(phase_one ? LpStatus::infeasible : LpStatus::optimal, iterations);
    }

    if (iterations >= options_.pivot_limit) return extract(LpStatus::iteration_limit, iterations);

    const double dir = status_[enter] == BasisStatus::at_upper ? -1.0
                       : status_[enter] == BasisStatus::at_lower ? 1.0
                       : (enter_d < 0 ? 1.0 : -1.0);
    alpha.setZero();
    add_column(enter, 1.0, alpha);

    // Ratio test: first breakpoint along the ray, ties to the lowest column.
    double step = kInf;
    int leave_pos = -1;
    double leave_value = 0.0;
    if (std::isfinite(lo_[enter]) && std::isfinite(hi_[enter])) step = hi_[enter] - lo_[enter];
    for (int p = 0; p < m_; ++p) {
      if (std::abs(alpha[p]) < ptol) continue;
      const double rate = -alpha[p] * dir;
      const int col = head_[p];
      const double v = x_[col];
      double target;
      if (rate < 0) {
        if (v > hi_[col] + ftol) target = hi_[col];
        else if (v >= lo_[col] - ftol && std::isfinite(lo_[col])) target = lo_[col];
        else continue;
      } else {
        if (v < lo_[col] - ftol) target = lo_[col];
        else if (v <= hi_[col] + ftol && std::isfinite(hi_[col])) target = hi_[col];
        else continue;
      }
      const double t = std::max(0.0, (target - v) / rate);
      if (t < step - 1e-12 ||
          (leave_pos >= 0 && t <= step + 1e-12 && col < head_[leave_pos])) {
        if (t < step) step = t;
        leave_pos = p;
        leave_value = target;
      }
    }

    if (!std::isfinite(step)) {
      if (phase_one) throw SolverError("unbounded ray while minimising infeasibility");
      return extract(LpStatus::unbounded, iterations);
    }

    ++iterations;
    stall = step <= 1e-12 ? stall + 1 : 0;

    if (step != 0.0) {
      for (int p = 0; p < m_; ++p) x_[head_[p]] -= alpha[p] * dir * step;
    }

    if (leave_pos < 0) {
      // Bound flip of the entering column.
      if (dir > 0) { x_[enter] = hi_[enter]; status_[enter] = BasisStatus::at_upper; }
      else { x_[enter] = lo_[enter]; status_[enter] = BasisStatus::at_lower; }
      continue;
    }

    x_[enter] += dir * step;
    const int leave = head_[leave_pos];
    x_[leave] = leave_value;
    status_[leave] = leave_value == lo_[leave] ? BasisStatus::at_lower : BasisStatus::at_upper;
    status_[enter] = BasisStatus::basic;
    head_[leave_pos] = enter;

    const double pivot = alpha[leave_pos];
    if (std::abs(pivot) < ptol) throw SolverError("pivot below tolerance");
    binv_.row(leave_pos) /= pivot;
    alpha[leave_pos] = 0.0;
    binv_.noalias() -= alpha * binv_.row(leave_pos);

    if (++since_refactor >= options_.refactor_every) {
      if (!refactor()) throw SolverError("singular basis after pivot");
      recompute_basics();
      since_refactor = 0;
    }
  }
}

LpResult LpSolver::extract(LpStatus status, long iterations) {
  LpResult r;
  r.status = status;
  r.iterations = iterations;
  r.warm_started = warm_;
  if (status != LpStatus::optimal) return r;

  const MilpInstance& inst = *inst_;
  r.x.assign(x_.begin(), x_.begin() + n_);
  for (int j = 0; j < n_; ++j) {
    // Snap tiny drift onto the active bound.
    if (std::abs(r.x[j] - lo_[j]) <= 1e-12) r.x[j] = lo_[j];
    if (std::abs(r.x[j] - hi_[j]) <= 1e-12) r.x[j] = hi_[j];
  }
  r.objective = objective_value(inst, r.x);

  Eigen::VectorXd cb(m_);
  for (int p = 0; p < m_; ++p) cb[p] = cost_[head_[p]];
  const Eigen::VectorXd y = binv_.transpose() * cb;
  r.duals.assign(y.data(), y.data() + m_);
  r.reduced_costs.assign(n_, 0.0);
  for (int j = 0; j < n_; ++j)
    if (status_[j] != BasisStatus::basic) r.reduced_costs[j] = cost_[j] - column_dot(j, y);
  r.row_activity.resize(m_);
  for (int i = 0; i < m_; ++i) r.row_activity[i] = row_activity(inst.rows[i], r.x);
  r.var_status.assign(status_.begin(), status_.begin() + n_);

  for (int j = 0; j < n_; ++j)
    if (inst.is_integer[j] && !is_integral_value(r.x[j], options_.integrality_tol)) r.fractional_set.push_back(j);

  r.basis.num_vars = n_;
  r.basis.num_cons = m_;
  r.basis.basic_columns = head_;
  r.basis.status = status_;
  return r;
}

LpResult solve_lp(const MilpInstance& inst, const LocalBounds& bounds, long pivot_limit) {
  LpOptions opts;
  opts.pivot_limit = pivot_limit;
  LpSolver solver(inst, opts);
  return solver.solve(bounds);
}

WarmStart warm_hint(const LpResult& parent) {
  if (parent.status != LpStatus::optimal) throw ContractError("warm_hint requires an optimal parent LP");
  return parent.basis;
}

}  // namespace retrobranch
