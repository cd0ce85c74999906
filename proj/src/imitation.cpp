#include "retrobranch/imitation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "retrobranch/errors.hpp"
#include "retrobranch/features.hpp"

namespace retrobranch {

ExploreThenStrongBranch::ExploreThenStrongBranch(double explore_prob, std::uint64_t seed,
                                                 std::vector<LabelledSample>* sink)
    : explore_prob_(explore_prob), rng_(seed), sink_(sink) {
  if (!(explore_prob >= 0.0 && explore_prob <= 1.0)) throw ParameterError("explore_prob must be in [0, 1]");
}

int ExploreThenStrongBranch::choose(BranchContext& ctx) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng_) < explore_prob_) {
    ++sb_calls_;
    const int var = sb_.choose(ctx);
    if (sink_ && ctx.state) sink_->push_back({std::make_shared<const BipartiteState>(*ctx.state), var});
    return var;
  }
  return pb_.choose(ctx);
}

std::vector<LabelledSample> label_sb(const std::function<MilpInstance(long)>& make_instance, long num_samples,
                                     const LabelConfig& cfg, long* instances_used) {
  if (num_samples <= 0) throw ParameterError("number of samples must be positive");
  std::vector<LabelledSample> out;
  long k = 0;
  long barren = 0;
  while (static_cast<long>(out.size()) < num_samples) {
    const std::size_t before = out.size();
    ExploreThenStrongBranch policy(cfg.explore_prob, cfg.seed * 7919ULL + static_cast<std::uint64_t>(k), &out);
    const MilpInstance inst = make_instance(k);
    SolveOptions opts;
    opts.selector = cfg.selector;
    opts.seed = cfg.seed + static_cast<std::uint64_t>(k);
    opts.limits.max_nodes = cfg.max_nodes;
    solve(inst, policy, opts);
    ++k;
    barren = out.size() == before ? barren + 1 : 0;
    if (barren >= 10000) throw GenerationError("labelling produced no samples in 10000 consecutive instances");
  }
  out.resize(static_cast<std::size_t>(num_samples));
  if (instances_used) *instances_used = k;
  return out;
}

namespace {

template <class T>
std::string pack(const std::vector<T>& v) {
  std::vector<unsigned char> bytes(v.size() * sizeof(T));
  if (!v.empty()) std::memcpy(bytes.data(), v.data(), bytes.size());
  return base64_encode(bytes);
}

template <class T>
std::vector<T> unpack(const std::string& text, std::size_t expected, const char* what) {
  const auto bytes = base64_decode(text);
  if (bytes.size() != expected * sizeof(T))
    throw ParseError(std::string("dataset field '") + what + "' has the wrong length");
  std::vector<T> v(expected);
  if (expected) std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

}  // namespace

void save_dataset(const std::vector<LabelledSample>& samples, const std::string& path) {
  nlohmann::json j;
  j["format"] = "retrobranch-il-dataset";
  j["feature_set_version"] = kFeatureSetVersion;
  std::map<const GraphStructure*, int> graph_index;
  nlohmann::json graphs = nlohmann::json::array();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : samples) {
    const GraphStructure* g = s.state->graph.get();
    auto it = graph_index.find(g);
    if (it == graph_index.end()) {
      it = graph_index.emplace(g, static_cast<int>(graphs.size())).first;
      graphs.push_back({{"num_vars", g->num_vars},
                        {"num_cons", g->num_cons},
                        {"num_edges", g->num_edges()},
                        {"edge_cons", pack(g->edge_cons)},
                        {"edge_var", pack(g->edge_var)},
                        {"edge_feature", pack(g->edge_feature)}});
    }
    rows.push_back({{"graph", it->second},
                    {"focus_node", s.state->focus_node},
                    {"var_features", pack(s.state->var_features)},
                    {"cons_features", pack(s.state->cons_features)},
                    {"candidates", s.state->candidates},
                    {"action", s.action}});
  }
  j["graphs"] = graphs;
  j["samples"] = rows;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path);
  out << j.dump() << "\n";
}

std::vector<LabelledSample> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read dataset " + path);
  std::vector<LabelledSample> out;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format") != "retrobranch-il-dataset") throw ParseError("not an imitation dataset: " + path);
    const int version = j.at("feature_set_version").get<int>();
    if (version != kFeatureSetVersion)
      throw IncompatibleCheckpoint("dataset feature set version " + std::to_string(version) +
                                   " but this build encodes version " + std::to_string(kFeatureSetVersion));
    std::vector<std::shared_ptr<const GraphStructure>> graphs;
    for (const auto& gj : j.at("graphs")) {
      auto g = std::make_shared<GraphStructure>();
      g->num_vars = gj.at("num_vars").get<int>();
      g->num_cons = gj.at("num_cons").get<int>();
      const auto ne = gj.at("num_edges").get<std::size_t>();
      g->edge_cons = unpack<int>(gj.at("edge_cons").get<std::string>(), ne, "edge_cons");
      g->edge_var = unpack<int>(gj.at("edge_var").get<std::string>(), ne, "edge_var");
      g->edge_feature = unpack<float>(gj.at("edge_feature").get<std::string>(), ne, "edge_feature");
      graphs.push_back(std::move(g));
    }
    for (const auto& sj : j.at("samples")) {
      const auto gi = sj.at("graph").get<std::size_t>();
      if (gi >= graphs.size()) throw ParseError("dataset sample refers to a missing graph");
      auto st = std::make_shared<BipartiteState>();
      st->graph = graphs[gi];
      st->num_vars = st->graph->num_vars;
      st->num_cons = st->graph->num_cons;
      st->focus_node = sj.at("focus_node").get<int>();
      st->var_features = unpack<float>(sj.at("var_features").get<std::string>(),
                                       static_cast<std::size_t>(st->num_vars) * kVarFeatures, "var_features");
      st->cons_features = unpack<float>(sj.at("cons_features").get<std::string>(),
                                        static_cast<std::size_t>(st->num_cons) * kConsFeatures, "cons_features");
      st->candidates = sj.at("candidates").get<std::vector<int>>();
      st->candidate_mask.assign(static_cast<std::size_t>(st->num_vars), 0);
      for (int c : st->candidates) {
        if (c < 0 || c >= st->num_vars) throw ParseError("dataset candidate out of range");
        st->candidate_mask[c] = 1;
      }
      const int action = sj.at("action").get<int>();
      if (!std::binary_search(st->candidates.begin(), st->candidates.end(), action))
        throw ParseError("dataset label is not a candidate");
      out.push_back({std::move(st), action});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed dataset " + path + ": " + e.what());
  }
  return out;
}

AccuracyResult top1_accuracy(const QNetwork<float>& net, const std::vector<LabelledSample>& samples) {
  AccuracyResult r;
  long hits = 0;
  for (const auto& s : samples) {
    if (s.state->candidates.size() < 2) {
      ++r.singletons;
      continue;
    }
    const auto q = candidate_q(net, *s.state);
    const auto& c = s.state->candidates;
    const std::size_t best = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    hits += c[best] == s.action;
    ++r.counted;
  }
  r.accuracy = r.counted ? static_cast<double>(hits) / static_cast<double>(r.counted) : 0.0;
  return r;
}

double imitation_loss(const QNetwork<float>& net, const std::vector<const LabelledSample*>& batch,
                      std::vector<QNetwork<float>::Mat>* grads) {
  std::vector<const BipartiteState*> states;
  for (const auto* s : batch) states.push_back(s->state.get());
  const GraphBatch gb = make_batch(states);
  ForwardCache<float> cache;
  const auto q = net.forward(gb, grads ? &cache : nullptr);
  QNetwork<float>::Vec dq = QNetwork<float>::Vec::Zero(q.size());
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t g = 0; g < batch.size(); ++g) {
    const auto& cands = states[g]->candidates;
    const int off = gb.var_offset[g];
    double mx = -kInf;
    for (int j : cands) mx = std::max(mx, static_cast<double>(q[off + j]));
    double z = 0.0;
    for (int j : cands) z += std::exp(static_cast<double>(q[off + j]) - mx);
    const double log_z = mx + std::log(z);
    loss += (log_z - static_cast<double>(q[off + batch[g]->action])) * inv_b;
    for (int j : cands) {
      const double p = std::exp(static_cast<double>(q[off + j]) - log_z);
      dq[off + j] += static_cast<float>((p - (j == batch[g]->action ? 1.0 : 0.0)) * inv_b);
    }
  }
  if (grads) *grads = net.backward(cache, dq);
  return loss;
}

IlResult train_il(const std::vector<LabelledSample>& train, const std::vector<LabelledSample>& valid,
                  const IlConfig& cfg) {
  if (train.empty()) throw ParameterError("imitation dataset is empty");
  if (cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.lr <= 0.0) throw ParameterError("invalid imitation config");
  QNetwork<float> net(cfg.net);
  net.init(cfg.seed);
  AdamState<float> adam;
  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.clip = cfg.grad_clip;
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  IlResult result{net, 0, -1.0, {}};
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const LabelledSample*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k)
        batch.push_back(&train[order[k]]);
      std::vector<QNetwork<float>::Mat> grads;
      const double l = imitation_loss(net, batch, &grads);
      if (!std::isfinite(l)) throw TrainingError("non-finite imitation loss in epoch " + std::to_string(epoch));
      adam_step(net, std::move(grads), adam, ac);
      loss += l;
      ++batches;
    }
    IlEpochLog e;
    e.epoch = epoch;
    e.train_loss = loss / static_cast<double>(batches);
    e.train_accuracy = top1_accuracy(net, train).accuracy;
    e.val_accuracy = valid.empty() ? e.train_accuracy : top1_accuracy(net, valid).accuracy;
    result.log.push_back(e);
    if (e.val_accuracy > result.best_val_accuracy) {
      result.best = net;
      result.best_epoch = epoch;
      result.best_val_accuracy = e.val_accuracy;
    }
  }
  return result;
}

std::string il_log_header() { return "epoch,train_loss,train_accuracy,val_accuracy"; }

std::string il_log_row(const IlEpochLog& e) {
  std::ostringstream o;
  o << std::setprecision(10) << e.epoch << ',' << e.train_loss << ',' << e.train_accuracy << ',' << e.val_accuracy;
  return o.str();
}

}  // namespace retrobranch
