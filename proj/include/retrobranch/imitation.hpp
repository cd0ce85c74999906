#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "retrobranch/bnb.hpp"
#include "retrobranch/branchers.hpp"
#include "retrobranch/qnet.hpp"

namespace retrobranch {

struct LabelledSample {
  std::shared_ptr<const BipartiteState> state;
  int action = -1;  // variable chosen by strong branching
};

/// With probability explore_prob branch with strong branching and record the
/// decision, otherwise branch with pseudocosts.
class ExploreThenStrongBranch : public BranchingPolicy {
 public:
  ExploreThenStrongBranch(double explore_prob, std::uint64_t seed, std::vector<LabelledSample>* sink);
  std::string name() const override { return "explore_sb"; }
  int choose(BranchContext& ctx) override;
  bool wants_state() const override { return true; }
  void reset(const MilpInstance& inst) override { pb_.reset(inst); }
  void observe_children(const TreeNode& parent, int var, const LpResult& down, const LpResult& up) override {
    pb_.observe_children(parent, var, down, up);
  }
  long sb_calls() const { return sb_calls_; }

 private:
  double explore_prob_;
  std::mt19937_64 rng_;
  std::vector<LabelledSample>* sink_;
  StrongBranching sb_;
  PseudocostBranching pb_;
  long sb_calls_ = 0;
};

struct LabelConfig {
  double explore_prob = 0.05;
  std::uint64_t seed = 0;
  NodeSelectorKind selector = NodeSelectorKind::best_first;
  long max_nodes = -1;
};

/// Solve make_instance(0), make_instance(1), ... until `num_samples` labels
/// exist; the last instance's surplus is dropped.
std::vector<LabelledSample> label_sb(const std::function<MilpInstance(long)>& make_instance, long num_samples,
                                     const LabelConfig& cfg, long* instances_used = nullptr);

void save_dataset(const std::vector<LabelledSample>& samples, const std::string& path);
std::vector<LabelledSample> load_dataset(const std::string& path);

struct IlConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  double grad_clip = 10.0;
  std::uint64_t seed = 0;
  QNetConfig net;
};

struct AccuracyResult {
  double accuracy = 0.0;  // over samples with two or more candidates
  long counted = 0;
  long singletons = 0;
};

AccuracyResult top1_accuracy(const QNetwork<float>& net, const std::vector<LabelledSample>& samples);

/// Mean cross-entropy of the candidate softmax against the labels, and its
/// gradient w.r.t. every tensor.
double imitation_loss(const QNetwork<float>& net, const std::vector<const LabelledSample*>& batch,
                      std::vector<QNetwork<float>::Mat>* grads);

struct IlEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct IlResult {
  QNetwork<float> best;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::vector<IlEpochLog> log;
};

/// Keeps the network with the best validation accuracy (training accuracy
/// when `valid` is empty).
IlResult train_il(const std::vector<LabelledSample>& train, const std::vector<LabelledSample>& valid,
                  const IlConfig& cfg);

std::string il_log_header();
std::string il_log_row(const IlEpochLog& e);

}  // namespace retrobranch
