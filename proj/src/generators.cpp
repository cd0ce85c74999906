#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "retrobranch/errors.hpp"
#include "retrobranch/milp.hpp"

namespace retrobranch {

namespace {

using Rng = std::mt19937_64;

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

MilpInstance binary_skeleton(int n, std::string name) {
  MilpInstance inst;
  inst.name = std::move(name);
  inst.objective.assign(n, 0.0);
  inst.lb.assign(n, 0.0);
  inst.ub.assign(n, 1.0);
  inst.is_integer.assign(n, true);
  return inst;
}

void sort_coefs(Row& row) {
  std::sort(row.coefs.begin(), row.coefs.end(),
            [](const Coef& a, const Coef& b) { return a.var < b.var; });
}

// Balas & Ho style: every row covered by >= 2 columns, every column used at
// least once, the rest of the nonzeros sampled uniformly.
MilpInstance set_covering(const GeneratorSpec& spec, Rng& rng) {
  const int m = spec.rows;
  const int n = spec.cols;
  if (n < 2) throw GenerationError("set covering needs at least 2 columns to cover each row twice");

  const auto total = static_cast<long long>(m) * n;
  long long nnz = std::llround(spec.density * static_cast<double>(total));
  nnz = std::max<long long>({nnz, 2LL * m, static_cast<long long>(n)});
  nnz = std::min(nnz, total);

  std::vector<std::set<int>> cover(m);
  std::vector<bool> used(n, false);
  long long count = 0;
  for (int i = 0; i < m; ++i) {
    while (cover[i].size() < 2) {
      const int j = uniform_int(rng, 0, n - 1);
      if (cover[i].insert(j).second) {
        used[j] = true;
        ++count;
      }
    }
  }
  for (int j = 0; j < n; ++j) {
    if (used[j]) continue;
    const int i = uniform_int(rng, 0, m - 1);
    cover[i].insert(j);
    ++count;
  }
  while (count < nnz) {
    const int i = uniform_int(rng, 0, m - 1);
    const int j = uniform_int(rng, 0, n - 1);
    if (cover[i].insert(j).second) ++count;
  }

  MilpInstance inst = binary_skeleton(n, "setcover");
  for (int j = 0; j < n; ++j) inst.objective[j] = uniform_int(rng, 1, 100);
  inst.rows.reserve(m);
  for (int i = 0; i < m; ++i) {
    Row row;
    row.sense = Sense::ge;
    row.rhs = 1.0;
    for (int j : cover[i]) row.coefs.push_back({j, 1.0});
    inst.rows.push_back(std::move(row));
  }
  return inst;
}

// Winner determination: one binary per bid, one <=1 row per item.
MilpInstance combinatorial_auction(const GeneratorSpec& spec, Rng& rng) {
  const int items = spec.items;
  const int bids = spec.bids;
  std::vector<int> item_value(items);
  for (int& v : item_value) v = uniform_int(rng, 1, 10);

  std::geometric_distribution<int> extra(0.5);
  std::vector<std::set<int>> bundle(bids);
  for (int b = 0; b < bids; ++b) {
    const int size = std::min(items, 1 + extra(rng));
    while (static_cast<int>(bundle[b].size()) < size) bundle[b].insert(uniform_int(rng, 0, items - 1));
  }
  std::vector<bool> covered(items, false);
  for (const auto& s : bundle)
    for (int it : s) covered[it] = true;
  for (int it = 0; it < items; ++it)
    if (!covered[it]) bundle[uniform_int(rng, 0, bids - 1)].insert(it);

  MilpInstance inst = binary_skeleton(bids, "cauction");
  for (int b = 0; b < bids; ++b) {
    int value = 0;
    for (int it : bundle[b]) value += item_value[it];
    value += uniform_int(rng, 0, 5 * static_cast<int>(bundle[b].size()));
    inst.objective[b] = -static_cast<double>(value);
  }
  inst.rows.resize(items);
  for (int it = 0; it < items; ++it) {
    inst.rows[it].sense = Sense::le;
    inst.rows[it].rhs = 1.0;
  }
  for (int b = 0; b < bids; ++b)
    for (int it : bundle[b]) inst.rows[it].coefs.push_back({b, 1.0});
  return inst;
}

// Cornuejols-style capacitated facility location.  Variables: y_j (open,
// binary) for j < F, then x_ij (fraction of customer i served by j).
MilpInstance facility_location(const GeneratorSpec& spec, Rng& rng) {
  const int C = spec.customers;
  const int F = spec.facilities;
  std::vector<double> cx(C), cy(C), fx(F), fy(F);
  for (int i = 0; i < C; ++i) { cx[i] = uniform_real(rng, 0, 1); cy[i] = uniform_real(rng, 0, 1); }
  for (int j = 0; j < F; ++j) { fx[j] = uniform_real(rng, 0, 1); fy[j] = uniform_real(rng, 0, 1); }
  std::vector<double> demand(C), capacity(F), fixed(F);
  for (double& d : demand) d = uniform_int(rng, 5, 35);
  for (double& s : capacity) s = uniform_int(rng, 10, 160);
  for (int j = 0; j < F; ++j)
    fixed[j] = std::floor(uniform_real(rng, 100, 110) * std::sqrt(capacity[j]) + uniform_int(rng, 0, 90));

  double total_demand = 0, total_capacity = 0;
  for (double d : demand) total_demand += d;
  for (double s : capacity) total_capacity += s;
  const double scale = spec.capacity_ratio * total_demand / total_capacity;
  for (double& s : capacity) s = std::max(1.0, std::floor(s * scale));
  total_capacity = 0;
  for (double s : capacity) total_capacity += s;
  if (total_capacity < total_demand)
    throw GenerationError("facility capacities cannot cover total demand");

  auto x_index = [&](int i, int j) { return F + i * F + j; };
  const int n = F + C * F;
  MilpInstance inst;
  inst.name = "capfac";
  inst.objective.assign(n, 0.0);
  inst.lb.assign(n, 0.0);
  inst.ub.assign(n, 1.0);
  inst.is_integer.assign(n, false);
  for (int j = 0; j < F; ++j) {
    inst.objective[j] = fixed[j];
    inst.is_integer[j] = true;
  }
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < F; ++j) {
      const double dist = std::hypot(cx[i] - fx[j], cy[i] - fy[j]);
      inst.objective[x_index(i, j)] = std::round(10.0 * dist * demand[i]);
    }

  for (int i = 0; i < C; ++i) {
    Row row{{}, 1.0, Sense::ge};
    for (int j = 0; j < F; ++j) row.coefs.push_back({x_index(i, j), 1.0});
    inst.rows.push_back(std::move(row));
  }
  for (int j = 0; j < F; ++j) {
    Row row{{}, 0.0, Sense::le};
    row.coefs.push_back({j, -capacity[j]});
    for (int i = 0; i < C; ++i) row.coefs.push_back({x_index(i, j), demand[i]});
    inst.rows.push_back(std::move(row));
  }
  {
    Row row{{}, total_demand, Sense::ge};
    for (int j = 0; j < F; ++j) row.coefs.push_back({j, capacity[j]});
    inst.rows.push_back(std::move(row));
  }
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < F; ++j) {
      Row row{{}, 0.0, Sense::le};
      row.coefs.push_back({j, -1.0});
      row.coefs.push_back({x_index(i, j), 1.0});
      inst.rows.push_back(std::move(row));
    }
  return inst;
}

// Barabasi-Albert graph: the first affinity+1 nodes form a clique, each later
// node attaches to `affinity` distinct earlier nodes chosen proportionally to
// degree.
std::vector<std::pair<int, int>> barabasi_albert(int nodes, int affinity, Rng& rng) {
  std::vector<std::pair<int, int>> edges;
  const int core = std::min(nodes, affinity + 1);
  std::vector<int> endpoints;  // each node repeated once per incident edge
  for (int a = 0; a < core; ++a)
    for (int b = a + 1; b < core; ++b) {
      edges.emplace_back(a, b);
      endpoints.push_back(a);
      endpoints.push_back(b);
    }
  for (int v = core; v < nodes; ++v) {
    std::set<int> targets;
    while (static_cast<int>(targets.size()) < affinity) {
      const auto k = std::uniform_int_distribution<std::size_t>(0, endpoints.size() - 1)(rng);
      targets.insert(endpoints[k]);
    }
    for (int t : targets) {
      edges.emplace_back(t, v);
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return edges;
}

void check_spec(const GeneratorSpec& spec) {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ParameterError(std::string(what) + " must be >= 1");
  };
  switch (spec.problem_class) {
    case ProblemClass::set_covering:
      positive(spec.rows, "rows");
      positive(spec.cols, "cols");
      if (std::isnan(spec.density) || spec.density < 0.0 || spec.density > 1.0)
        throw ParameterError("density must lie in (0, 1]");
      if (spec.density == 0.0) throw GenerationError("zero density produces no coverage");
      break;
    case ProblemClass::combinatorial_auction:
      positive(spec.items, "items");
      positive(spec.bids, "bids");
      break;
    case ProblemClass::capacitated_facility_location:
      positive(spec.customers, "customers");
      positive(spec.facilities, "facilities");
      if (!(spec.capacity_ratio >= 1.0)) throw ParameterError("capacity_ratio must be >= 1");
      break;
    case ProblemClass::maximum_independent_set:
      positive(spec.nodes, "nodes");
      positive(spec.affinity, "affinity");
      break;
  }
}

}  // namespace

std::string to_string(ProblemClass pc) {
  switch (pc) {
    case ProblemClass::set_covering: return "set_covering";
    case ProblemClass::combinatorial_auction: return "combinatorial_auction";
    case ProblemClass::capacitated_facility_location: return "capacitated_facility_location";
    case ProblemClass::maximum_independent_set: return "maximum_independent_set";
  }
  return "unknown";
}

ProblemClass problem_class_from_string(const std::string& name) {
  for (auto pc : {ProblemClass::set_covering, ProblemClass::combinatorial_auction,
                  ProblemClass::capacitated_facility_location, ProblemClass::maximum_independent_set})
    if (to_string(pc) == name) return pc;
  throw ParameterError("unknown problem class '" + name + "'");
}

MilpInstance independent_set_from_edges(int num_nodes, const std::vector<std::pair<int, int>>& edges,
                                        std::string name) {
  MilpInstance inst = binary_skeleton(num_nodes, std::move(name));
  std::fill(inst.objective.begin(), inst.objective.end(), -1.0);
  for (auto [a, b] : edges) {
    if (a == b || a < 0 || b < 0 || a >= num_nodes || b >= num_nodes)
      throw ParameterError("invalid edge (" + std::to_string(a) + ", " + std::to_string(b) + ")");
    Row row{{{std::min(a, b), 1.0}, {std::max(a, b), 1.0}}, 1.0, Sense::le};
    inst.rows.push_back(std::move(row));
  }
  return inst;
}

MilpInstance generate(const GeneratorSpec& spec) {
  check_spec(spec);
  Rng rng(spec.seed);
  MilpInstance inst;
  switch (spec.problem_class) {
    case ProblemClass::set_covering: inst = set_covering(spec, rng); break;
    case ProblemClass::combinatorial_auction: inst = combinatorial_auction(spec, rng); break;
    case ProblemClass::capacitated_facility_location: inst = facility_location(spec, rng); break;
    case ProblemClass::maximum_independent_set:
      inst = independent_set_from_edges(spec.nodes, barabasi_albert(spec.nodes, spec.affinity, rng), "indset");
      break;
  }
  for (Row& row : inst.rows) sort_coefs(row);
  inst.name += "_s" + std::to_string(spec.seed);
  return inst;
}

}  // namespace retrobranch
