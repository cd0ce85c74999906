#pragma once

#include <vector>

#include "retrobranch/milp.hpp"

namespace retrobranch {

/// Global search statistics the observation encoder reads.  Maintained by the
/// engine and refreshed at every focus event; "previous" values are those of
/// the preceding focus event.
struct TreeContext {
  double initial_dual_bound = -kInf;
  double global_dual_bound = -kInf;
  double global_primal_bound = kInf;
  double prev_global_dual_bound = -kInf;
  double prev_global_primal_bound = kInf;
  double max_db_frac_change = 0.0;
  double max_pb_frac_change = 0.0;
  double db_frac_change = 0.0;
  double pb_frac_change = 0.0;

  int best_node = -1;       // open node with the lowest dual bound (ties: lowest id)
  int incumbent_node = -1;  // node whose LP produced the incumbent

  long num_nodes = 0;       // nodes created so far
  long num_leaves = 0;      // fathomed nodes
  long num_feasible_leaves = 0;
  long num_infeasible_leaves = 0;
  long num_lp_iterations = 0;
  long focus_events = 0;

  std::vector<long> last_branched_event;  // per variable, -1 if never branched
  std::vector<long> row_tight_events;     // per row, # focus LPs where the row was tight
};

}  // namespace retrobranch
