#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "retrobranch/bnb.hpp"

namespace retrobranch {

inline constexpr int kBaseVarFeatures = 19;
inline constexpr int kTreeFeatures = 20;
inline constexpr int kVarFeatures = kBaseVarFeatures + kTreeFeatures;
inline constexpr int kConsFeatures = 5;
inline constexpr int kEdgeFeatures = 1;
inline constexpr int kFeatureSetVersion = 1;
inline constexpr double kFeatureEps = 1e-12;

/// Instance-level graph topology shared by every state of one solve.  Rows are
/// oriented as <= (>= rows negated) before normalisation.
struct GraphStructure {
  int num_vars = 0;
  int num_cons = 0;
  std::vector<int> edge_cons;
  std::vector<int> edge_var;
  std::vector<float> edge_feature;   // a_ij / ||a_i||
  std::vector<double> row_norm;
  std::vector<double> row_sign;      // +1 or -1 orientation
  std::vector<double> row_cosine;    // cos(a_i, c)
  double objective_norm = 0.0;

  int num_edges() const { return static_cast<int>(edge_cons.size()); }
};

std::shared_ptr<const GraphStructure> build_graph(const MilpInstance& inst);

struct BipartiteState {
  int num_vars = 0;
  int num_cons = 0;
  std::vector<float> var_features;   // num_vars x kVarFeatures, row-major
  std::vector<float> cons_features;  // num_cons x kConsFeatures, row-major
  std::shared_ptr<const GraphStructure> graph;
  std::vector<unsigned char> candidate_mask;
  std::vector<int> candidates;
  NodeId focus_node = -1;

  float var(int i, int f) const { return var_features[static_cast<std::size_t>(i) * kVarFeatures + f]; }
  float cons(int i, int f) const { return cons_features[static_cast<std::size_t>(i) * kConsFeatures + f]; }
};

/// Encode `node` of `tree`.  Reads tree.context as it stands, so call at focus time.
BipartiteState extract(const SearchTree& tree, const TreeNode& node, const SolveStats& stats);

const std::array<const char*, kVarFeatures>& var_feature_names();
const std::array<const char*, kConsFeatures>& cons_feature_names();
int var_feature_index(const std::string& name);

std::string dump_state_json(const BipartiteState& state);

}  // namespace retrobranch
