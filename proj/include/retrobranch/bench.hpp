#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "retrobranch/bnb.hpp"

namespace retrobranch {

struct EvalRecord {
  std::string instance;
  std::uint64_t seed = 0;
  std::string brancher;
  std::string node_selector;
  long num_nodes = 0;
  long num_lp_solves = 0;
  long num_lp_iterations = 0;  // probing excluded
  long probing_iterations = 0;
  std::string status;
  double objective = 0.0;
  double wall_ms = 0.0;  // not written to CSV
};

struct NamedInstance {
  std::string id;
  MilpInstance instance;
};

/// Instances of `dir` matching *.milp.json, sorted by file name.  Throws
/// ParameterError when there are none.
std::vector<NamedInstance> load_instance_dir(const std::string& dir);

EvalRecord evaluate_one(const NamedInstance& inst, BranchingPolicy& policy, NodeSelectorKind selector,
                        std::uint64_t seed, const SolveLimits& limits = {});

std::vector<EvalRecord> evaluate(const std::vector<NamedInstance>& instances, BranchingPolicy& policy,
                                 NodeSelectorKind selector, std::uint64_t seed, const SolveLimits& limits = {});

struct EvalSummary {
  long counted = 0;
  long excluded = 0;  // limit-terminated
  double mean_nodes = 0.0, mean_lp_iterations = 0.0, mean_probing_iterations = 0.0, mean_lp_solves = 0.0;
  double geomean_nodes = 0.0, geomean_lp_iterations = 0.0;
};

/// Geometric means use a shift of one: exp(mean(log(x + 1))) - 1.
EvalSummary summarize(const std::vector<EvalRecord>& records);
double shifted_geomean(const std::vector<double>& values, double shift = 1.0);

std::string eval_csv_header();
std::string eval_csv_row(const EvalRecord& r);
/// Records then two summary rows (instance "mean" and "geomean").
std::string eval_csv(const std::vector<EvalRecord>& records);
/// Per-instance rows of an evaluation CSV; summary rows are skipped.
std::vector<EvalRecord> parse_eval_csv(const std::string& text);

struct CompareRow {
  std::string instance;
  long baseline_nodes = 0, candidate_nodes = 0;
  long baseline_lp = 0, candidate_lp = 0;
  double node_ratio = 1.0;
  double lp_ratio = 1.0;
};

struct CompareReport {
  std::string baseline_name, candidate_name;
  std::vector<CompareRow> rows;
  long excluded = 0;  // instances where either run hit a limit
  double mean_node_ratio = 1.0, mean_lp_ratio = 1.0;
  double normalized_nodes = 1.0;  // candidate mean / baseline mean
  double normalized_lp = 1.0;
  double win = 0.0, tie = 0.0, loss = 0.0;  // fractions on node count
  struct CdfRow {
    double quantile;
    double baseline, candidate;
  };
  std::vector<CdfRow> cdf;
};

/// Ratios are candidate / baseline; a zero baseline compares n + 1 to 1.
/// Throws ParameterError listing the symmetric difference when the instance
/// sets differ.
CompareReport compare(const std::vector<EvalRecord>& baseline, const std::vector<EvalRecord>& candidate);
std::string format_report(const CompareReport& report);

/// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

}  // namespace retrobranch
