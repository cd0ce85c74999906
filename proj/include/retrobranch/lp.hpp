#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "retrobranch/milp.hpp"

namespace retrobranch {

/// Per-node bound tightenings relative to the instance bounds.
class LocalBounds {
 public:
  void set(int var, double lower, double upper) { overrides_[var] = {lower, upper}; }
  void tighten_upper(const MilpInstance& inst, int var, double upper);
  void tighten_lower(const MilpInstance& inst, int var, double lower);

  double lower(const MilpInstance& inst, int var) const;
  double upper(const MilpInstance& inst, int var) const;

  /// False when some override has lower > upper (empty box).
  bool consistent() const;
  bool empty() const { return overrides_.empty(); }
  const std::map<int, std::pair<double, double>>& overrides() const { return overrides_; }

 private:
  std::map<int, std::pair<double, double>> overrides_;
};

enum class LpStatus { optimal, infeasible, iteration_limit, unbounded };
enum class BasisStatus : std::uint8_t { basic, at_lower, at_upper, free_zero };

const char* to_string(LpStatus s);

/// Opaque basis hint.  Columns [0, n) are structural, [n, n+m) are row slacks.
struct WarmStart {
  int num_vars = 0;
  int num_cons = 0;
  std::vector<int> basic_columns;     // size m
  std::vector<BasisStatus> status;    // size n + m
};

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  double objective = kInf;
  std::vector<double> x;                  // structural values, size n
  long iterations = 0;                    // pivots + bound flips
  std::vector<int> fractional_set;        // ascending
  std::vector<double> reduced_costs;      // size n, 0 for basic columns
  std::vector<double> duals;              // size m
  std::vector<double> row_activity;       // size m
  std::vector<BasisStatus> var_status;    // size n
  WarmStart basis;
  bool warm_started = false;
};

struct LpOptions {
  double feasibility_tol = 1e-7;
  double integrality_tol = 1e-6;
  double pivot_tol = 1e-9;
  double optimality_tol = 1e-9;
  long pivot_limit = 50000;
  int stall_threshold = 50;   // degenerate pivots before Bland's rule kicks in
  int refactor_every = 64;
};

/// Bounded-variable primal simplex over { A x + s = b, bounds on x and s }.
/// Holds per-solve scratch: one solver per thread.
class LpSolver {
 public:
  explicit LpSolver(const MilpInstance& inst, LpOptions options = {});

  LpResult solve(const LocalBounds& bounds, const WarmStart* hint = nullptr);

  const MilpInstance& instance() const { return *inst_; }
  const LpOptions& options() const { return options_; }

 private:
  bool apply_hint(const WarmStart& hint);
  void cold_start();
  bool refactor();
  void recompute_basics();
  double column_dot(int col, const Eigen::VectorXd& y) const;
  void add_column(int col, double scale, Eigen::VectorXd& out) const;
  LpResult extract(LpStatus status, long iterations);

  const MilpInstance* inst_;
  LpOptions options_;
  int n_ = 0;
  int m_ = 0;
  std::vector<int> col_start_;
  std::vector<int> col_row_;
  std::vector<double> col_val_;
  std::vector<double> cost_;
  Eigen::VectorXd rhs_;

  std::vector<double> lo_, hi_, x_;
  std::vector<BasisStatus> status_;
  std::vector<int> head_;
  Eigen::MatrixXd binv_;
  bool warm_ = false;
};

/// One-shot convenience wrapper around LpSolver.
LpResult solve_lp(const MilpInstance& inst, const LocalBounds& bounds, long pivot_limit = 50000);

/// Basis of an optimal parent LP, for seeding child solves.
WarmStart warm_hint(const LpResult& parent);

bool is_integral_value(double v, double tol);

}  // namespace retrobranch
