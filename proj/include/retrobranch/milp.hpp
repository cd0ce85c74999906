#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace retrobranch {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { le, ge, eq };

struct Coef {
  int var = 0;
  double value = 0.0;
  friend bool operator==(const Coef&, const Coef&) = default;
};

struct Row {
  std::vector<Coef> coefs;
  double rhs = 0.0;
  Sense sense = Sense::le;
  friend bool operator==(const Row&, const Row&) = default;
};

/// Minimisation MILP:  min c'x  s.t. rows, lb <= x <= ub, x_j integral where
/// is_integer[j].  Immutable once built; share freely across threads.
struct MilpInstance {
  std::string name;
  std::vector<double> objective;
  std::vector<Row> rows;
  std::vector<double> lb;
  std::vector<double> ub;
  std::vector<bool> is_integer;

  int num_vars() const { return static_cast<int>(objective.size()); }
  int num_cons() const { return static_cast<int>(rows.size()); }
  int num_integer() const;

  friend bool operator==(const MilpInstance&, const MilpInstance&) = default;
};

struct Violation {
  std::string field;  // e.g. "rows[3].coefs", "lb"
  int index = -1;
  std::string message;
};

/// Empty iff every structural invariant holds.  Never throws.
std::vector<Violation> validate(const MilpInstance& inst);

double objective_value(const MilpInstance& inst, std::span<const double> x);
double row_activity(const Row& row, std::span<const double> x);

/// Direct constraint evaluation (bounds, rows, integrality) within `tol`.
bool is_feasible(const MilpInstance& inst, std::span<const double> x, double tol = 1e-6);

// ---------------------------------------------------------------------------
// Generators

enum class ProblemClass {
  set_covering,
  combinatorial_auction,
  capacitated_facility_location,
  maximum_independent_set,
};

std::string to_string(ProblemClass pc);
ProblemClass problem_class_from_string(const std::string& name);

struct GeneratorSpec {
  ProblemClass problem_class = ProblemClass::set_covering;
  // set covering
  int rows = 100;
  int cols = 200;
  double density = 0.05;
  // combinatorial auction
  int items = 10;
  int bids = 50;
  // capacitated facility location
  int customers = 5;
  int facilities = 5;
  double capacity_ratio = 5.0;
  // maximum independent set
  int nodes = 25;
  int affinity = 4;

  std::uint64_t seed = 0;
};

/// Throws ParameterError for out-of-range sizes/densities and
/// GenerationError when the spec cannot produce an instance.
MilpInstance generate(const GeneratorSpec& spec);

/// Maximum independent set over an explicit edge list (one x_i + x_j <= 1 row
/// per edge, objective -sum x).
MilpInstance independent_set_from_edges(int num_nodes,
                                        const std::vector<std::pair<int, int>>& edges,
                                        std::string name = "mis");

// ---------------------------------------------------------------------------
// Instance JSON (.milp.json)

std::string encode(const MilpInstance& inst);
MilpInstance decode(const std::string& text);

MilpInstance read_instance(const std::string& path);
void write_instance(const MilpInstance& inst, const std::string& path);

}  // namespace retrobranch
