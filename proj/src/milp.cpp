#include "retrobranch/milp.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace retrobranch {

int MilpInstance::num_integer() const {
  return static_cast<int>(std::count(is_integer.begin(), is_integer.end(), true));
}

std::vector<Violation> validate(const MilpInstance& inst) {
  std::vector<Violation> out;
  const int n = inst.num_vars();
  auto add = [&](std::string field, int index, std::string message) {
    out.push_back({std::move(field), index, std::move(message)});
  };

  if (static_cast<int>(inst.lb.size()) != n) add("lb", -1, "length differs from num_vars");
  if (static_cast<int>(inst.ub.size()) != n) add("ub", -1, "length differs from num_vars");
  if (static_cast<int>(inst.is_integer.size()) != n)
    add("is_integer", -1, "length differs from num_vars");

  for (int j = 0; j < n; ++j) {
    if (!std::isfinite(inst.objective[j])) add("objective", j, "non-finite coefficient");
  }

  for (int i = 0; i < inst.num_cons(); ++i) {
    const Row& row = inst.rows[i];
    const std::string field = "rows[" + std::to_string(i) + "]";
    if (!std::isfinite(row.rhs)) add(field + ".rhs", i, "non-finite right-hand side");
    std::unordered_set<int> seen;
    for (const Coef& c : row.coefs) {
      if (c.var < 0 || c.var >= n) {
        add(field + ".coefs", i, "var_index " + std::to_string(c.var) + " out of range");
        continue;
      }
      if (!seen.insert(c.var).second)
        add(field + ".coefs", i, "duplicate var_index " + std::to_string(c.var));
      if (!std::isfinite(c.value))
        add(field + ".coefs", i, "non-finite coefficient for var " + std::to_string(c.var));
    }
  }

  const int bounded = std::min({n, static_cast<int>(inst.lb.size()),
                                static_cast<int>(inst.ub.size())});
  for (int j = 0; j < bounded; ++j) {
    const double l = inst.lb[j];
    const double u = inst.ub[j];
    if (std::isnan(l) || l == kInf) add("lb", j, "lower bound must be finite or -inf");
    if (std::isnan(u) || u == -kInf) add("ub", j, "upper bound must be finite or +inf");
    if (l > u) add("bounds", j, "lower bound exceeds upper bound");
    if (j < static_cast<int>(inst.is_integer.size()) && inst.is_integer[j]) {
      if (std::isfinite(l) && l != std::floor(l)) add("lb", j, "integer variable with fractional bound");
      if (std::isfinite(u) && u != std::floor(u)) add("ub", j, "integer variable with fractional bound");
    }
  }
  return out;
}

double row_activity(const Row& row, std::span<const double> x) {
  double a = 0.0;
  for (const Coef& c : row.coefs) a += c.value * x[c.var];
  return a;
}

double objective_value(const MilpInstance& inst, std::span<const double> x) {
  double v = 0.0;
  for (int j = 0; j < inst.num_vars(); ++j) v += inst.objective[j] * x[j];
  return v;
}

bool is_feasible(const MilpInstance& inst, std::span<const double> x, double tol) {
  if (static_cast<int>(x.size()) != inst.num_vars()) return false;
  for (int j = 0; j < inst.num_vars(); ++j) {
    if (x[j] < inst.lb[j] - tol || x[j] > inst.ub[j] + tol) return false;
    if (inst.is_integer[j] && std::abs(x[j] - std::round(x[j])) > tol) return false;
  }
  for (const Row& row : inst.rows) {
    const double a = row_activity(row, x);
    switch (row.sense) {
      case Sense::le: if (a > row.rhs + tol) return false; break;
      case Sense::ge: if (a < row.rhs - tol) return false; break;
      case Sense::eq: if (std::abs(a - row.rhs) > tol) return false; break;
    }
  }
  return true;
}

}  // namespace retrobranch
