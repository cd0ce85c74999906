#include "retrobranch/qnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "retrobranch/errors.hpp"

namespace retrobranch {

const char* to_string(Readout r) {
  switch (r) {
    case Readout::neg_leaky_relu: return "neg_leaky_relu";
    case Readout::leaky_min: return "leaky_min";
  }
  return "?";
}

Readout readout_from_string(const std::string& s) {
  if (s == "neg_leaky_relu") return Readout::neg_leaky_relu;
  if (s == "leaky_min") return Readout::leaky_min;
  throw ParameterError("unknown readout '" + s + "'");
}

namespace {

constexpr int kEmbBase = 0;    // var_emb (4 tensors), cons_emb (4)
constexpr int kEdgeBase = 8;   // edge_emb weight, bias
constexpr int kConvBase = 10;  // 6 tensors per half-convolution
constexpr int kHalfSize = 6;

int head_base(const QNetConfig& cfg) { return kConvBase + 2 * cfg.conv_pairs * kHalfSize; }

bool is_linear_weight(const std::string& name) {
  auto ends = [&](const char* suffix) {
    const std::size_t n = std::strlen(suffix);
    return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
  };
  if (ends(".ln.weight") || ends(".ln.bias") || ends(".bias")) return false;
  return true;
}

}  // namespace

std::vector<TensorSpec> qnet_layout(const QNetConfig& cfg) {
  const int e = cfg.emb;
  std::vector<TensorSpec> l;
  for (const auto& [prefix, width] : {std::pair<std::string, int>{"var_emb", kVarFeatures}, {"cons_emb", kConsFeatures}}) {
    l.push_back({prefix + ".weight", e, width});
    l.push_back({prefix + ".bias", e, 1});
    l.push_back({prefix + ".ln.weight", e, 1});
    l.push_back({prefix + ".ln.bias", e, 1});
  }
  l.push_back({"edge_emb.weight", e, kEdgeFeatures});
  l.push_back({"edge_emb.bias", e, 1});
  for (int k = 0; k < cfg.conv_pairs; ++k) {
    for (const char* dir : {"vc", "cv"}) {
      const std::string p = "conv" + std::to_string(k) + "." + dir;
      l.push_back({p + ".src", e, e});
      l.push_back({p + ".edge", e, e});
      l.push_back({p + ".update.weight", e, 2 * e});
      l.push_back({p + ".update.bias", e, 1});
      l.push_back({p + ".ln.weight", e, 1});
      l.push_back({p + ".ln.bias", e, 1});
    }
  }
  l.push_back({"head.0.weight", e, e});
  l.push_back({"head.0.bias", e, 1});
  l.push_back({"head.1.weight", 1, e});
  l.push_back({"head.1.bias", 1, 1});
  return l;
}

GraphBatch make_batch(const std::vector<const BipartiteState*>& states) {
  GraphBatch b;
  b.num_graphs = static_cast<int>(states.size());
  int nv = 0, nc = 0, ne = 0;
  for (const auto* s : states) {
    nv += s->num_vars;
    nc += s->num_cons;
    ne += s->graph->num_edges();
  }
  b.var_x.resize(kVarFeatures, nv);
  b.cons_x.resize(kConsFeatures, nc);
  b.edge_cons.reserve(static_cast<std::size_t>(ne));
  b.edge_var.reserve(static_cast<std::size_t>(ne));
  b.edge_f.reserve(static_cast<std::size_t>(ne));
  int vo = 0, co = 0;
  b.var_offset.push_back(0);
  b.cons_offset.push_back(0);
  for (const auto* s : states) {
    // Row-major n x F storage is exactly column-major F x n.
    b.var_x.middleCols(vo, s->num_vars) =
        Eigen::Map<const Eigen::MatrixXf>(s->var_features.data(), kVarFeatures, s->num_vars);
    b.cons_x.middleCols(co, s->num_cons) =
        Eigen::Map<const Eigen::MatrixXf>(s->cons_features.data(), kConsFeatures, s->num_cons);
    const GraphStructure& g = *s->graph;
    for (int e = 0; e < g.num_edges(); ++e) {
      b.edge_cons.push_back(g.edge_cons[e] + co);
      b.edge_var.push_back(g.edge_var[e] + vo);
      b.edge_f.push_back(g.edge_feature[e]);
    }
    vo += s->num_vars;
    co += s->num_cons;
    b.var_offset.push_back(vo);
    b.cons_offset.push_back(co);
  }
  return b;
}

GraphBatch make_batch(const BipartiteState& state) { return make_batch(std::vector<const BipartiteState*>{&state}); }

template <class S>
QNetwork<S>::QNetwork(QNetConfig cfg) : cfg_(cfg), layout_(qnet_layout(cfg)) {
  if (cfg.emb < 1 || cfg.conv_pairs < 0) throw ParameterError("invalid network shape");
  for (const auto& t : layout_) tensors_.push_back(Mat::Zero(t.rows, t.cols));
}

template <class S>
void QNetwork<S>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, cfg_.init_std);
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const std::string& name = layout_[i].name;
    Mat& t = tensors_[i];
    if (is_linear_weight(name)) {
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        for (Eigen::Index r = 0; r < t.rows(); ++r) t(r, c) = static_cast<S>(normal(rng));
    } else if (name.size() > 10 && name.compare(name.size() - 10, 10, ".ln.weight") == 0) {
      t.setOnes();
    } else {
      t.setZero();
    }
  }
}

template <class S>
std::size_t QNetwork<S>::num_parameters() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
  return n;
}

template <class S>
template <class T>
QNetwork<T> QNetwork<S>::cast() const {
  QNetwork<T> out(cfg_);
  for (std::size_t i = 0; i < tensors_.size(); ++i) out.tensors_[i] = tensors_[i].template cast<T>();
  return out;
}

template <class S>
void QNetwork<S>::soft_update_into(QNetwork& target, double tau) const {
  if (!(target.cfg_ == cfg_)) throw ContractError("soft update between different architectures");
  const S t = static_cast<S>(tau);
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tau == 1.0) target.tensors_[i] = tensors_[i];
    else target.tensors_[i] = t * tensors_[i] + (S(1) - t) * target.tensors_[i];
  }
}

namespace {

template <class S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecT = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
MatT<S> leaky(const MatT<S>& x, S slope) {
  return x.unaryExpr([slope](S v) { return v > S(0) ? v : slope * v; });
}

template <class S>
MatT<S> leaky_grad(const MatT<S>& pre, const MatT<S>& up, S slope) {
  return up.binaryExpr(pre, [slope](S g, S v) { return v > S(0) ? g : slope * g; });
}

// Linear (already applied) -> layer norm -> leaky ReLU.
template <class S>
MatT<S> norm_act(MatT<S> y, const MatT<S>& gain, const MatT<S>& bias, S eps, S slope,
                 typename ForwardCache<S>::Norm* cache) {
  const Eigen::Index d = y.rows();
  VecT<S> inv_std(y.cols());
  MatT<S> xhat(y.rows(), y.cols());
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    const S mu = y.col(c).mean();
    const S var = (y.col(c).array() - mu).square().sum() / static_cast<S>(d);
    inv_std[c] = S(1) / std::sqrt(var + eps);
    xhat.col(c) = (y.col(c).array() - mu) * inv_std[c];
  }
  MatT<S> pre = (xhat.array().colwise() * gain.col(0).array()).colwise() + bias.col(0).array();
  MatT<S> out = leaky<S>(pre, slope);
  if (cache) {
    cache->input = std::move(y);
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->pre_act = std::move(pre);
  }
  return out;
}

// Backward of norm_act.  Returns d(linear output); accumulates gain/bias grads.
template <class S>
MatT<S> norm_act_backward(const typename ForwardCache<S>::Norm& c, const MatT<S>& dout, const MatT<S>& gain,
                          S slope, MatT<S>& dgain, MatT<S>& dbias) {
  const MatT<S> dpre = leaky_grad<S>(c.pre_act, dout, slope);
  dgain.col(0) += (dpre.array() * c.xhat.array()).rowwise().sum().matrix();
  dbias.col(0) += dpre.rowwise().sum();
  const MatT<S> dxhat = dpre.array().colwise() * gain.col(0).array();
  MatT<S> dy(dpre.rows(), dpre.cols());
  const S d = static_cast<S>(dpre.rows());
  for (Eigen::Index col = 0; col < dpre.cols(); ++col) {
    const S m1 = dxhat.col(col).sum() / d;
    const S m2 = dxhat.col(col).dot(c.xhat.col(col)) / d;
    dy.col(col) = c.inv_std[col] * (dxhat.col(col).array() - m1 - c.xhat.col(col).array() * m2);
  }
  return dy;
}

}  // namespace

template <class S>
typename QNetwork<S>::Vec QNetwork<S>::forward(const GraphBatch& batch, ForwardCache<S>* cache) const {
  const auto& T = tensors_;
  const S slope = static_cast<S>(cfg_.slope);
  const S eps = static_cast<S>(cfg_.ln_eps);
  const int nv = batch.num_vars();
  const int nc = batch.num_cons();
  if (batch.var_x.rows() != kVarFeatures || batch.cons_x.rows() != kConsFeatures)
    throw ContractError("graph batch feature widths do not match the network");
  const std::size_t ne = batch.edge_f.size();

  ForwardCache<S> local;
  ForwardCache<S>& c = cache ? *cache : local;
  c = ForwardCache<S>{};
  c.var_x = batch.var_x.template cast<S>();
  c.cons_x = batch.cons_x.template cast<S>();
  c.edge_cons = batch.edge_cons;
  c.edge_var = batch.edge_var;
  c.edge_f.assign(batch.edge_f.begin(), batch.edge_f.end());

  // Degree and mean edge feature per endpoint.
  std::vector<S> deg_c(static_cast<std::size_t>(nc), S(0)), deg_v(static_cast<std::size_t>(nv), S(0));
  c.mean_f_cons.assign(static_cast<std::size_t>(nc), S(0));
  c.mean_f_var.assign(static_cast<std::size_t>(nv), S(0));
  for (std::size_t e = 0; e < ne; ++e) {
    deg_c[c.edge_cons[e]] += 1;
    deg_v[c.edge_var[e]] += 1;
    c.mean_f_cons[c.edge_cons[e]] += c.edge_f[e];
    c.mean_f_var[c.edge_var[e]] += c.edge_f[e];
  }
  c.inv_deg_cons.resize(deg_c.size());
  c.inv_deg_var.resize(deg_v.size());
  for (std::size_t i = 0; i < deg_c.size(); ++i) {
    c.inv_deg_cons[i] = deg_c[i] > 0 ? S(1) / deg_c[i] : S(0);
    c.mean_f_cons[i] *= c.inv_deg_cons[i];
  }
  for (std::size_t i = 0; i < deg_v.size(); ++i) {
    c.inv_deg_var[i] = deg_v[i] > 0 ? S(1) / deg_v[i] : S(0);
    c.mean_f_var[i] *= c.inv_deg_var[i];
  }

  Mat hv = norm_act<S>((T[0] * c.var_x).colwise() + T[1].col(0), T[2], T[3], eps, slope, &c.var_emb);
  Mat hc = norm_act<S>((T[4] * c.cons_x).colwise() + T[5].col(0), T[6], T[7], eps, slope, &c.cons_emb);
  const Mat& we = T[kEdgeBase];
  const Mat& be = T[kEdgeBase + 1];
  const int e = cfg_.emb;

  for (int h = 0; h < 2 * cfg_.conv_pairs; ++h) {
    const bool to_cons = h % 2 == 0;
    const int base = kConvBase + h * kHalfSize;
    const Mat& A = T[base];
    const Mat& B = T[base + 1];
    const Mat& U = T[base + 2];
    Mat& src = to_cons ? hv : hc;
    Mat& dst = to_cons ? hc : hv;
    const std::vector<int>& src_idx = to_cons ? c.edge_var : c.edge_cons;
    const std::vector<int>& dst_idx = to_cons ? c.edge_cons : c.edge_var;
    const std::vector<S>& inv_deg = to_cons ? c.inv_deg_cons : c.inv_deg_var;
    const std::vector<S>& mean_f = to_cons ? c.mean_f_cons : c.mean_f_var;

    const Mat P = A * src;
    const Vec u = B * we;
    const Vec v = B * be;
    Mat agg = Mat::Zero(e, dst.cols());
    for (std::size_t k = 0; k < ne; ++k) agg.col(dst_idx[k]) += P.col(src_idx[k]) * inv_deg[dst_idx[k]];
    for (Eigen::Index d = 0; d < dst.cols(); ++d)
      if (inv_deg[d] > 0) agg.col(d) += u * mean_f[d] + v;

    Mat in(2 * e, dst.cols());
    in.topRows(e) = dst;
    in.bottomRows(e) = agg;
    typename ForwardCache<S>::Half half;
    half.src = src;
    half.dst = dst;
    half.agg = agg;
    dst = norm_act<S>((U * in).colwise() + T[base + 3].col(0), T[base + 4], T[base + 5], eps, slope, &half.norm);
    c.halves.push_back(std::move(half));
  }

  const int hb = head_base(cfg_);
  c.head_in = hv;
  c.head_pre = (T[hb] * hv).colwise() + T[hb + 1].col(0);
  c.head_hidden = leaky<S>(c.head_pre, slope);
  c.z = (T[hb + 2] * c.head_hidden).array() + T[hb + 3](0, 0);
  Vec q(nv);
  for (int i = 0; i < nv; ++i) {
    const S z = c.z(0, i);
    if (cfg_.readout == Readout::neg_leaky_relu) q[i] = -(z > S(0) ? z : slope * z);
    else q[i] = z < S(0) ? z : slope * z;
  }
  c.valid = true;
  return q;
}

template <class S>
std::vector<typename QNetwork<S>::Mat> QNetwork<S>::backward(const ForwardCache<S>& c, const Vec& dq) const {
  if (!c.valid) throw ContractError("backward() before forward()");
  if (dq.size() != c.z.cols()) throw ContractError("backward(): dq length does not match the cached batch");
  const auto& T = tensors_;
  const S slope = static_cast<S>(cfg_.slope);
  const int e = cfg_.emb;
  std::vector<Mat> g;
  for (const auto& t : T) g.push_back(Mat::Zero(t.rows(), t.cols()));

  const int hb = head_base(cfg_);
  Eigen::Matrix<S, 1, Eigen::Dynamic> dz(c.z.cols());
  for (Eigen::Index i = 0; i < c.z.cols(); ++i) {
    const S z = c.z(0, i);
    S d;
    if (cfg_.readout == Readout::neg_leaky_relu) d = z > S(0) ? S(-1) : -slope;
    else d = z < S(0) ? S(1) : slope;
    dz[i] = dq[i] * d;
  }
  g[hb + 2] = dz * c.head_hidden.transpose();
  g[hb + 3](0, 0) = dz.sum();
  const Mat dhidden = T[hb + 2].transpose() * dz;
  const Mat dpre = leaky_grad<S>(c.head_pre, dhidden, slope);
  g[hb] = dpre * c.head_in.transpose();
  g[hb + 1].col(0) = dpre.rowwise().sum();

  Mat dh[2];  // 0 = variables, 1 = constraints
  dh[0] = T[hb].transpose() * dpre;
  dh[1] = Mat::Zero(e, c.cons_x.cols());

  const Mat& we = T[kEdgeBase];
  const Mat& be = T[kEdgeBase + 1];
  for (int h = 2 * cfg_.conv_pairs - 1; h >= 0; --h) {
    const bool to_cons = h % 2 == 0;
    const int d_kind = to_cons ? 1 : 0;
    const int s_kind = to_cons ? 0 : 1;
    const int base = kConvBase + h * kHalfSize;
    const auto& half = c.halves[static_cast<std::size_t>(h)];
    const std::vector<int>& src_idx = to_cons ? c.edge_var : c.edge_cons;
    const std::vector<int>& dst_idx = to_cons ? c.edge_cons : c.edge_var;
    const std::vector<S>& inv_deg = to_cons ? c.inv_deg_cons : c.inv_deg_var;
    const std::vector<S>& mean_f = to_cons ? c.mean_f_cons : c.mean_f_var;

    const Mat dy = norm_act_backward<S>(half.norm, dh[d_kind], T[base + 4], slope, g[base + 4], g[base + 5]);
    Mat in(2 * e, half.dst.cols());
    in.topRows(e) = half.dst;
    in.bottomRows(e) = half.agg;
    g[base + 2] += dy * in.transpose();
    g[base + 3].col(0) += dy.rowwise().sum();
    const Mat din = T[base + 2].transpose() * dy;
    dh[d_kind] = din.topRows(e);
    const Mat dagg = din.bottomRows(e);

    Vec du = Vec::Zero(e), dv = Vec::Zero(e);
    for (Eigen::Index d = 0; d < dagg.cols(); ++d) {
      if (inv_deg[d] > 0) {
        du += dagg.col(d) * mean_f[d];
        dv += dagg.col(d);
      }
    }
    Mat dP = Mat::Zero(e, half.src.cols());
    for (std::size_t k = 0; k < src_idx.size(); ++k) dP.col(src_idx[k]) += dagg.col(dst_idx[k]) * inv_deg[dst_idx[k]];
    g[base] += dP * half.src.transpose();
    dh[s_kind] += T[base].transpose() * dP;
    g[base + 1] += du * we.transpose() + dv * be.transpose();
    g[kEdgeBase] += T[base + 1].transpose() * du;
    g[kEdgeBase + 1] += T[base + 1].transpose() * dv;
  }

  const Mat dyv = norm_act_backward<S>(c.var_emb, dh[0], T[2], slope, g[2], g[3]);
  g[0] += dyv * c.var_x.transpose();
  g[1].col(0) += dyv.rowwise().sum();
  const Mat dyc = norm_act_backward<S>(c.cons_emb, dh[1], T[6], slope, g[6], g[7]);
  g[4] += dyc * c.cons_x.transpose();
  g[5].col(0) += dyc.rowwise().sum();
  (void)kEmbBase;
  return g;
}

template <class S>
double adam_step(QNetwork<S>& net, std::vector<typename QNetwork<S>::Mat> grads, AdamState<S>& state,
                 const AdamConfig& cfg) {
  auto& params = net.tensors();
  if (grads.size() != params.size()) throw ContractError("adam_step: gradient count mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols())
      throw ContractError("adam_step: gradient shape mismatch for " + net.layout()[i].name);
    sq += static_cast<double>(grads[i].squaredNorm());
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm");
  if (cfg.clip > 0 && norm > cfg.clip) {
    const S scale = static_cast<S>(cfg.clip / norm);
    for (auto& gm : grads) gm *= scale;
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(QNetwork<S>::Mat::Zero(p.rows(), p.cols()));
      state.v.push_back(QNetwork<S>::Mat::Zero(p.rows(), p.cols()));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (S(1) - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (S(1) - b2) * grads[i].cwiseProduct(grads[i]);
    const auto mhat = state.m[i].array() / static_cast<S>(bc1);
    const auto vhat = state.v[i].array() / static_cast<S>(bc2);
    params[i].array() -= static_cast<S>(cfg.lr) * mhat / (vhat.sqrt() + static_cast<S>(cfg.eps));
  }
  return norm;
}

template class QNetwork<float>;
template class QNetwork<double>;
template QNetwork<double> QNetwork<float>::cast<double>() const;
template QNetwork<float> QNetwork<double>::cast<float>() const;
template QNetwork<float> QNetwork<float>::cast<float>() const;
template double adam_step<float>(QNetwork<float>&, std::vector<QNetwork<float>::Mat>, AdamState<float>&,
                                 const AdamConfig&);
template double adam_step<double>(QNetwork<double>&, std::vector<QNetwork<double>::Mat>, AdamState<double>&,
                                  const AdamConfig&);

// ---- checkpoint -------------------------------------------------------------

namespace {

constexpr const char* kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char ch) {
  if (ch >= 'A' && ch <= 'Z') return ch - 'A';
  if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
  if (ch >= '0' && ch <= '9') return ch - '0' + 52;
  if (ch == '+') return 62;
  if (ch == '/') return 63;
  return -1;
}

nlohmann::json architecture_json(const QNetConfig& cfg) {
  return {{"emb", cfg.emb},
          {"conv_pairs", cfg.conv_pairs},
          {"slope", cfg.slope},
          {"readout", to_string(cfg.readout)},
          {"aggregation", "mean"},
          {"var_features", kVarFeatures},
          {"cons_features", kConsFeatures},
          {"edge_features", kEdgeFeatures}};
}

}  // namespace

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    unsigned v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ParseError("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad > 0) throw ParseError("base64 padding in the middle of a quantum");
      v[k] = b64_value(ch);
      if (v[k] < 0) throw ParseError("invalid base64 character");
    }
    const unsigned w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<unsigned char>((w >> 16) & 255));
    if (pad < 2) out.push_back(static_cast<unsigned char>((w >> 8) & 255));
    if (pad < 1) out.push_back(static_cast<unsigned char>(w & 255));
  }
  return out;
}

std::string encode_qnet(const QNetwork<float>& net, const std::string& meta_json) {
  nlohmann::json j;
  j["format"] = "qnet";
  j["format_version"] = 1;
  j["feature_set_version"] = kFeatureSetVersion;
  j["architecture"] = architecture_json(net.config());
  j["init_std"] = net.config().init_std;
  j["ln_eps"] = net.config().ln_eps;
  j["meta"] = nlohmann::json::parse(meta_json);
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < net.layout().size(); ++i) {
    const auto& spec = net.layout()[i];
    const auto& t = net.tensors()[i];
    std::vector<unsigned char> bytes;
    bytes.reserve(static_cast<std::size_t>(t.size()) * 4);
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        std::uint32_t u;
        const float f = t(r, c);
        std::memcpy(&u, &f, 4);
        for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<unsigned char>((u >> (8 * k)) & 255));
      }
    }
    tensors.push_back({{"name", spec.name},
                       {"shape", {spec.rows, spec.cols}},
                       {"dtype", "float32"},
                       {"layout", "row_major"},
                       {"data", base64_encode(bytes)}});
  }
  j["tensors"] = tensors;
  return j.dump(1) + "\n";
}

QNetwork<float> decode_qnet(const std::string& text, std::string* meta_json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "qnet") throw ParseError("not a qnet checkpoint");
    const int fv = j.at("feature_set_version").get<int>();
    if (fv != kFeatureSetVersion)
      throw IncompatibleCheckpoint("checkpoint feature set version " + std::to_string(fv) +
                                   " does not match encoder version " + std::to_string(kFeatureSetVersion));
    const auto& a = j.at("architecture");
    if (a.at("var_features").get<int>() != kVarFeatures || a.at("cons_features").get<int>() != kConsFeatures)
      throw IncompatibleCheckpoint("checkpoint feature widths differ from the encoder");
    QNetConfig cfg;
    cfg.emb = a.at("emb").get<int>();
    cfg.conv_pairs = a.at("conv_pairs").get<int>();
    cfg.slope = a.at("slope").get<double>();
    cfg.readout = readout_from_string(a.at("readout").get<std::string>());
    cfg.init_std = j.value("init_std", cfg.init_std);
    cfg.ln_eps = j.value("ln_eps", cfg.ln_eps);
    QNetwork<float> net(cfg);
    const auto& tensors = j.at("tensors");
    if (tensors.size() != net.layout().size()) throw ParseError("checkpoint tensor count does not match architecture");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& spec = net.layout()[i];
      const auto& t = tensors[i];
      if (t.at("name") != spec.name) throw ParseError("unexpected tensor '" + t.at("name").get<std::string>() + "'");
      if (t.at("shape")[0].get<int>() != spec.rows || t.at("shape")[1].get<int>() != spec.cols)
        throw ParseError("tensor '" + spec.name + "' has the wrong shape");
      const auto bytes = base64_decode(t.at("data").get<std::string>());
      if (bytes.size() != static_cast<std::size_t>(spec.rows) * spec.cols * 4)
        throw ParseError("tensor '" + spec.name + "' payload is truncated");
      std::size_t k = 0;
      for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c, k += 4) {
          const std::uint32_t u = bytes[k] | (bytes[k + 1] << 8) | (bytes[k + 2] << 16) |
                                  (static_cast<std::uint32_t>(bytes[k + 3]) << 24);
          float f;
          std::memcpy(&f, &u, 4);
          net.tensors()[i](r, c) = f;
        }
      }
    }
    if (meta_json) *meta_json = j.contains("meta") ? j["meta"].dump() : "{}";
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_qnet(const QNetwork<float>& net, const std::string& path, const std::string& meta_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << encode_qnet(net, meta_json);
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

QNetwork<float> load_qnet(const std::string& path, std::string* meta_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_qnet(ss.str(), meta_json);
}

std::vector<double> candidate_q(const QNetwork<float>& net, const BipartiteState& state) {
  const auto q = net.forward(make_batch(state));
  std::vector<double> out;
  out.reserve(state.candidates.size());
  for (int j : state.candidates) out.push_back(static_cast<double>(q[j]));
  return out;
}

}  // namespace retrobranch
