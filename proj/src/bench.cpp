#include "retrobranch/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "retrobranch/errors.hpp"

namespace retrobranch {

namespace fs = std::filesystem;

std::vector<NamedInstance> load_instance_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ParameterError("instance directory '" + dir + "' does not exist");
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > 10 && name.ends_with(".milp.json")) paths.push_back(e.path());
  }
  if (paths.empty()) throw ParameterError("no .milp.json instances in '" + dir + "'");
  std::sort(paths.begin(), paths.end());
  std::vector<NamedInstance> out;
  for (const auto& p : paths) {
    std::string id = p.filename().string();
    id.resize(id.size() - std::string(".milp.json").size());
    out.push_back({id, read_instance(p.string())});
  }
  return out;
}

namespace {

bool solved(const std::string& status) { return status == "optimal" || status == "infeasible"; }

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

std::string fmt6(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(6) << v;
  return o.str();
}

}  // namespace

EvalRecord evaluate_one(const NamedInstance& inst, BranchingPolicy& policy, NodeSelectorKind selector,
                        std::uint64_t seed, const SolveLimits& limits) {
  SolveOptions opts;
  opts.selector = selector;
  opts.seed = seed;
  opts.limits = limits;
  const auto t0 = std::chrono::steady_clock::now();
  const SolveResult r = solve(inst.instance, policy, opts);
  EvalRecord rec;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  rec.instance = inst.id;
  rec.seed = seed;
  rec.brancher = policy.name();
  rec.node_selector = to_string(selector);
  rec.num_nodes = r.stats.num_nodes;
  rec.num_lp_solves = r.stats.num_lp_solves;
  rec.num_lp_iterations = r.stats.num_lp_iterations - r.stats.probing_iterations;
  rec.probing_iterations = r.stats.probing_iterations;
  rec.status = r.stats.status == SolveStatus::optimal ? (r.stats.infeasible ? "infeasible" : "optimal")
                                                      : to_string(r.stats.status);
  rec.objective = r.stats.primal_bound;
  return rec;
}

std::vector<EvalRecord> evaluate(const std::vector<NamedInstance>& instances, BranchingPolicy& policy,
                                 NodeSelectorKind selector, std::uint64_t seed, const SolveLimits& limits) {
  if (instances.empty()) throw ParameterError("no instances to evaluate");
  std::vector<EvalRecord> out;
  for (const auto& inst : instances) out.push_back(evaluate_one(inst, policy, selector, seed, limits));
  return out;
}

double shifted_geomean(const std::vector<double>& values, double shift) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += std::log(v + shift);
  return std::exp(s / static_cast<double>(values.size())) - shift;
}

EvalSummary summarize(const std::vector<EvalRecord>& records) {
  EvalSummary s;
  std::vector<double> nodes, lps;
  for (const auto& r : records) {
    if (!solved(r.status)) {
      ++s.excluded;
      continue;
    }
    ++s.counted;
    nodes.push_back(static_cast<double>(r.num_nodes));
    lps.push_back(static_cast<double>(r.num_lp_iterations));
    s.mean_nodes += static_cast<double>(r.num_nodes);
    s.mean_lp_iterations += static_cast<double>(r.num_lp_iterations);
    s.mean_probing_iterations += static_cast<double>(r.probing_iterations);
    s.mean_lp_solves += static_cast<double>(r.num_lp_solves);
  }
  if (s.counted > 0) {
    const double n = static_cast<double>(s.counted);
    s.mean_nodes /= n;
    s.mean_lp_iterations /= n;
    s.mean_probing_iterations /= n;
    s.mean_lp_solves /= n;
    s.geomean_nodes = shifted_geomean(nodes);
    s.geomean_lp_iterations = shifted_geomean(lps);
  }
  return s;
}

std::string eval_csv_header() {
  return "instance,seed,brancher,node_selector,num_nodes,num_lp_solves,num_lp_iterations,probing_iterations,status,"
         "objective";
}

std::string eval_csv_row(const EvalRecord& r) {
  std::ostringstream o;
  o << r.instance << ',' << r.seed << ',' << r.brancher << ',' << r.node_selector << ',' << r.num_nodes << ','
    << r.num_lp_solves << ',' << r.num_lp_iterations << ',' << r.probing_iterations << ',' << r.status << ','
    << fmt(r.objective);
  return o.str();
}

std::string eval_csv(const std::vector<EvalRecord>& records) {
  std::ostringstream o;
  o << eval_csv_header() << "\n";
  for (const auto& r : records) o << eval_csv_row(r) << "\n";
  if (records.empty()) return o.str();
  const EvalSummary s = summarize(records);
  const std::string tail = "summary n=" + std::to_string(s.counted) + " excluded=" + std::to_string(s.excluded);
  const auto& f = records.front();
  o << "mean,," << f.brancher << ',' << f.node_selector << ',' << fmt6(s.mean_nodes) << ',' << fmt6(s.mean_lp_solves)
    << ',' << fmt6(s.mean_lp_iterations) << ',' << fmt6(s.mean_probing_iterations) << ',' << tail << ",\n";
  o << "geomean,," << f.brancher << ',' << f.node_selector << ',' << fmt6(s.geomean_nodes) << ",,"
    << fmt6(s.geomean_lp_iterations) << ",," << tail << ",\n";
  return o.str();
}

std::vector<EvalRecord> parse_eval_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != eval_csv_header()) throw ParseError("not an evaluation CSV (bad header)");
  std::vector<EvalRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (line.back() == ',') f.push_back("");
    if (f.size() != 10) throw ParseError("evaluation CSV line " + std::to_string(lineno) + ": expected 10 fields");
    if (f[8].starts_with("summary")) continue;
    try {
      EvalRecord r;
      r.instance = f[0];
      r.seed = std::stoull(f[1]);
      r.brancher = f[2];
      r.node_selector = f[3];
      r.num_nodes = std::stol(f[4]);
      r.num_lp_solves = std::stol(f[5]);
      r.num_lp_iterations = std::stol(f[6]);
      r.probing_iterations = std::stol(f[7]);
      r.status = f[8];
      r.objective = f[9] == "inf" ? kInf : f[9] == "-inf" ? -kInf : std::stod(f[9]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ParseError("evaluation CSV line " + std::to_string(lineno) + ": bad number");
    }
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

double ratio(long candidate, long baseline) {
  if (baseline > 0) return static_cast<double>(candidate) / static_cast<double>(baseline);
  return static_cast<double>(candidate + 1);
}

}  // namespace

CompareReport compare(const std::vector<EvalRecord>& baseline, const std::vector<EvalRecord>& candidate) {
  std::map<std::string, const EvalRecord*> b, c;
  for (const auto& r : baseline)
    if (!b.emplace(r.instance, &r).second) throw ParameterError("duplicate instance '" + r.instance + "' in baseline");
  for (const auto& r : candidate)
    if (!c.emplace(r.instance, &r).second) throw ParameterError("duplicate instance '" + r.instance + "' in candidate");
  std::vector<std::string> diff;
  for (const auto& [id, _] : b)
    if (!c.count(id)) diff.push_back(id);
  for (const auto& [id, _] : c)
    if (!b.count(id)) diff.push_back(id);
  if (!diff.empty()) {
    std::sort(diff.begin(), diff.end());
    std::string msg = "instance sets differ; symmetric difference:";
    for (const auto& id : diff) msg += " " + id;
    throw ParameterError(msg);
  }
  if (b.empty()) throw ParameterError("nothing to compare");

  CompareReport rep;
  rep.baseline_name = baseline.front().brancher + "/" + baseline.front().node_selector;
  rep.candidate_name = candidate.front().brancher + "/" + candidate.front().node_selector;
  long wins = 0, ties = 0, losses = 0;
  double bn = 0.0, cn = 0.0, bl = 0.0, cl = 0.0;
  std::vector<double> bnodes, cnodes;
  for (const auto& [id, br] : b) {
    const EvalRecord* cr = c.at(id);
    if (!solved(br->status) || !solved(cr->status)) {
      ++rep.excluded;
      continue;
    }
    CompareRow row;
    row.instance = id;
    row.baseline_nodes = br->num_nodes;
    row.candidate_nodes = cr->num_nodes;
    row.baseline_lp = br->num_lp_iterations;
    row.candidate_lp = cr->num_lp_iterations;
    row.node_ratio = ratio(cr->num_nodes, br->num_nodes);
    row.lp_ratio = ratio(cr->num_lp_iterations, br->num_lp_iterations);
    if (cr->num_nodes < br->num_nodes) ++wins;
    else if (cr->num_nodes == br->num_nodes) ++ties;
    else ++losses;
    bn += static_cast<double>(br->num_nodes);
    cn += static_cast<double>(cr->num_nodes);
    bl += static_cast<double>(br->num_lp_iterations);
    cl += static_cast<double>(cr->num_lp_iterations);
    bnodes.push_back(static_cast<double>(br->num_nodes));
    cnodes.push_back(static_cast<double>(cr->num_nodes));
    rep.rows.push_back(row);
  }
  const double n = static_cast<double>(rep.rows.size());
  if (n > 0) {
    rep.mean_node_ratio = rep.mean_lp_ratio = 0.0;
    for (const auto& r : rep.rows) {
      rep.mean_node_ratio += r.node_ratio / n;
      rep.mean_lp_ratio += r.lp_ratio / n;
    }
    rep.normalized_nodes = bn > 0 ? cn / bn : (cn > 0 ? cn + 1 : 1.0);
    rep.normalized_lp = bl > 0 ? cl / bl : (cl > 0 ? cl + 1 : 1.0);
    rep.win = static_cast<double>(wins) / n;
    rep.tie = static_cast<double>(ties) / n;
    rep.loss = static_cast<double>(losses) / n;
  }
  for (double q : {0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0})
    rep.cdf.push_back({q, quantile(bnodes, q), quantile(cnodes, q)});
  return rep;
}

std::string format_report(const CompareReport& r) {
  std::ostringstream o;
  o << "baseline," << r.baseline_name << "\n";
  o << "candidate," << r.candidate_name << "\n";
  o << "instances," << r.rows.size() << "\n";
  o << "excluded," << r.excluded << "\n";
  o << "mean_node_ratio," << fmt6(r.mean_node_ratio) << "\n";
  o << "mean_lp_ratio," << fmt6(r.mean_lp_ratio) << "\n";
  o << "normalized_nodes," << fmt6(r.normalized_nodes) << "\n";
  o << "normalized_lp_iterations," << fmt6(r.normalized_lp) << "\n";
  o << "win," << fmt6(r.win) << "\n";
  o << "tie," << fmt6(r.tie) << "\n";
  o << "loss," << fmt6(r.loss) << "\n";
  o << "win_or_tie," << fmt6(r.win + r.tie) << "\n";
  o << "\nquantile,baseline_nodes,candidate_nodes\n";
  for (const auto& c : r.cdf) o << fmt6(c.quantile) << ',' << fmt6(c.baseline) << ',' << fmt6(c.candidate) << "\n";
  o << "\ninstance,baseline_nodes,candidate_nodes,node_ratio,baseline_lp_iterations,candidate_lp_iterations,lp_ratio\n";
  for (const auto& row : r.rows)
    o << row.instance << ',' << row.baseline_nodes << ',' << row.candidate_nodes << ',' << fmt6(row.node_ratio) << ','
      << row.baseline_lp << ',' << row.candidate_lp << ',' << fmt6(row.lp_ratio) << "\n";
  return o.str();
}

}  // namespace retrobranch
