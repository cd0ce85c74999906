#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "retrobranch/features.hpp"

namespace retrobranch {

enum class Readout {
  neg_leaky_relu,  // y = -LeakyReLU(z)
  leaky_min,       // y = z for z < 0, slope * z otherwise
};

const char* to_string(Readout r);
Readout readout_from_string(const std::string& s);

struct QNetConfig {
  int emb = 64;
  int conv_pairs = 1;
  double slope = 0.01;
  Readout readout = Readout::neg_leaky_relu;
  double init_std = 0.01;
  double ln_eps = 1e-5;

  friend bool operator==(const QNetConfig&, const QNetConfig&) = default;
};

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
};

std::vector<TensorSpec> qnet_layout(const QNetConfig& cfg);

/// Disjoint union of one or more states.  Features are column-per-node.
struct GraphBatch {
  int num_graphs = 0;
  Eigen::MatrixXf var_x;   // kVarFeatures x total vars
  Eigen::MatrixXf cons_x;  // kConsFeatures x total cons
  std::vector<int> edge_cons;
  std::vector<int> edge_var;
  std::vector<float> edge_f;
  std::vector<int> var_offset;   // num_graphs + 1
  std::vector<int> cons_offset;  // num_graphs + 1

  int num_vars() const { return static_cast<int>(var_x.cols()); }
  int num_cons() const { return static_cast<int>(cons_x.cols()); }
};

GraphBatch make_batch(const std::vector<const BipartiteState*>& states);
GraphBatch make_batch(const BipartiteState& state);

template <class S>
struct ForwardCache;

template <class S>
class QNetwork {
 public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

  explicit QNetwork(QNetConfig cfg = {});

  /// Linear weights ~ N(0, init_std), biases 0, layer-norm gains 1 and offsets 0.
  void init(std::uint64_t seed);

  const QNetConfig& config() const { return cfg_; }
  const std::vector<TensorSpec>& layout() const { return layout_; }
  std::vector<Mat>& tensors() { return tensors_; }
  const std::vector<Mat>& tensors() const { return tensors_; }
  std::size_t num_parameters() const;

  /// Per-variable Q over the whole batch.  Fills `cache` when given.
  Vec forward(const GraphBatch& batch, ForwardCache<S>* cache = nullptr) const;
  /// Gradients of sum(dq .* q) w.r.t. every tensor, in layout order.
  std::vector<Mat> backward(const ForwardCache<S>& cache, const Vec& dq) const;

  template <class T>
  QNetwork<T> cast() const;

  /// target <- tau * this + (1 - tau) * target
  void soft_update_into(QNetwork& target, double tau) const;

  bool operator==(const QNetwork& other) const { return cfg_ == other.cfg_ && tensors_ == other.tensors_; }

 private:
  template <class>
  friend class QNetwork;

  QNetConfig cfg_;
  std::vector<TensorSpec> layout_;
  std::vector<Mat> tensors_;
};

template <class S>
struct ForwardCache {
  using Mat = typename QNetwork<S>::Mat;
  struct Norm {
    Mat input;   // pre-LN (linear output)
    Mat xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
    Mat pre_act;  // post-LN, pre-activation
  };
  struct Half {
    Mat src;      // source embeddings used for messages
    Mat dst;      // destination embeddings before update
    Mat agg;
    Norm norm;
  };
  bool valid = false;
  Mat var_x, cons_x;
  std::vector<int> edge_cons, edge_var;
  std::vector<S> edge_f;
  std::vector<S> inv_deg_cons, inv_deg_var;
  std::vector<S> mean_f_cons, mean_f_var;
  Norm var_emb, cons_emb;
  std::vector<Half> halves;  // vc, cv, vc, cv, ...
  Mat head_in;               // final variable embeddings
  Mat head_pre;              // before hidden activation
  Mat head_hidden;
  Eigen::Matrix<S, 1, Eigen::Dynamic> z;
};

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 10.0;
};

template <class S>
struct AdamState {
  std::vector<typename QNetwork<S>::Mat> m, v;
  long step = 0;
};

/// Global-norm clip then Adam.  Returns the pre-clip gradient norm.  Throws
/// TrainingError on non-finite gradients.
template <class S>
double adam_step(QNetwork<S>& net, std::vector<typename QNetwork<S>::Mat> grads, AdamState<S>& state,
                 const AdamConfig& cfg);

/// Checkpoint I/O (.qnet.json).  `meta` is stored verbatim as a JSON object string.
void save_qnet(const QNetwork<float>& net, const std::string& path, const std::string& meta_json = "{}");
QNetwork<float> load_qnet(const std::string& path, std::string* meta_json = nullptr);
std::string encode_qnet(const QNetwork<float>& net, const std::string& meta_json = "{}");
QNetwork<float> decode_qnet(const std::string& text, std::string* meta_json = nullptr);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

/// Q-values for the candidates of one state, in candidate order.
std::vector<double> candidate_q(const QNetwork<float>& net, const BipartiteState& state);

extern template class QNetwork<float>;
extern template class QNetwork<double>;

}  // namespace retrobranch
