#pragma once

// Independent reference solvers used only by the tests.  Nothing here touches
// the simplex or the branch-and-bound code paths.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "retrobranch/milp.hpp"

namespace retrobranch::oracle {

/// Exhaustive vertex enumeration for a bounded LP (finite variable bounds).
/// Picks every n-subset of the constraint hyperplanes {rows, x_j = l_j,
/// x_j = u_j} that contains all equality rows, solves the square system and
/// keeps the best feasible point.  Returns nullopt when infeasible.
inline std::optional<double> vertex_enumeration_optimum(const MilpInstance& inst, double tol = 1e-7) {
  const int n = inst.num_vars();
  struct Plane {
    Eigen::VectorXd a;
    double b;
  };
  std::vector<Plane> planes;
  std::vector<int> mandatory;
  for (const Row& row : inst.rows) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (const Coef& c : row.coefs) a[c.var] = c.value;
    if (row.sense == Sense::eq) mandatory.push_back(static_cast<int>(planes.size()));
    planes.push_back({a, row.rhs});
  }
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[j] = 1.0;
    planes.push_back({e, inst.lb[j]});
    planes.push_back({e, inst.ub[j]});
  }

  std::optional<double> best;
  const int total = static_cast<int>(planes.size());
  std::vector<int> pick(n);
  // Iterate n-combinations of [0, total).
  for (int i = 0; i < n; ++i) pick[i] = i;
  if (n == 0) return 0.0;
  for (;;) {
    bool has_all = true;
    for (int mi : mandatory)
      if (std::find(pick.begin(), pick.end(), mi) == pick.end()) { has_all = false; break; }
    if (has_all) {
      Eigen::MatrixXd A(n, n);
      Eigen::VectorXd b(n);
      for (int r = 0; r < n; ++r) {
        A.row(r) = planes[pick[r]].a.transpose();
        b[r] = planes[pick[r]].b;
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
      if (lu.isInvertible()) {
        Eigen::VectorXd x = lu.solve(b);
        std::vector<double> xv(x.data(), x.data() + n);
        bool ok = true;
        for (int j = 0; j < n && ok; ++j) ok = xv[j] >= inst.lb[j] - tol && xv[j] <= inst.ub[j] + tol;
        for (const Row& row : inst.rows) {
          if (!ok) break;
          const double act = row_activity(row, xv);
          if (row.sense == Sense::le) ok = act <= row.rhs + tol;
          else if (row.sense == Sense::ge) ok = act >= row.rhs - tol;
          else ok = std::abs(act - row.rhs) <= tol;
        }
        if (ok) {
          const double v = objective_value(inst, xv);
          if (!best || v < *best) best = v;
        }
      }
    }
    int i = n - 1;
    while (i >= 0 && pick[i] == total - n + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int k = i + 1; k < n; ++k) pick[k] = pick[k - 1] + 1;
  }
  return best;
}

/// Brute force over all 2^n points of a pure binary MILP.
inline std::optional<double> binary_enumeration_optimum(const MilpInstance& inst) {
  const int n = inst.num_vars();
  std::optional<double> best;
  std::vector<double> x(n);
  for (long mask = 0; mask < (1L << n); ++mask) {
    for (int j = 0; j < n; ++j) x[j] = (mask >> j) & 1L;
    if (!is_feasible(inst, x, 1e-9)) continue;
    const double v = objective_value(inst, x);
    if (!best || v < *best) best = v;
  }
  return best;
}

/// Random bounded LP with n, m <= 6: integer-ish coefficients in [-5, 5],
/// finite boxes so the relaxation is always bounded.
inline MilpInstance random_small_lp(std::mt19937_64& rng, int n, int m) {
  std::uniform_int_distribution<int> coef(-5, 5);
  std::uniform_int_distribution<int> sense(0, 5);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  MilpInstance inst;
  inst.name = "rand_lp";
  for (int j = 0; j < n; ++j) {
    inst.objective.push_back(coef(rng) + 0.5 * frac(rng));
    const double lo = -static_cast<double>(std::uniform_int_distribution<int>(0, 3)(rng));
    inst.lb.push_back(lo);
    inst.ub.push_back(lo + 1 + std::uniform_int_distribution<int>(0, 4)(rng));
    inst.is_integer.push_back(false);
  }
  for (int i = 0; i < m; ++i) {
    Row row;
    for (int j = 0; j < n; ++j) {
      const int c = coef(rng);
      if (c != 0) row.coefs.push_back({j, static_cast<double>(c)});
    }
    const int s = sense(rng);
    row.sense = s < 3 ? Sense::le : s < 5 ? Sense::ge : Sense::eq;
    row.rhs = coef(rng) + frac(rng);
    inst.rows.push_back(std::move(row));
  }
  return inst;
}

/// Random pure-binary knapsack-style MILP; x = 0 is always feasible.
inline MilpInstance random_binary_milp(std::mt19937_64& rng, int n, int m) {
  std::uniform_int_distribution<int> coef(-3, 9);
  std::uniform_int_distribution<int> obj(-20, 5);
  MilpInstance inst;
  inst.name = "rand_bin";
  for (int j = 0; j < n; ++j) {
    inst.objective.push_back(obj(rng));
    inst.lb.push_back(0.0);
    inst.ub.push_back(1.0);
    inst.is_integer.push_back(true);
  }
  for (int i = 0; i < m; ++i) {
    Row row;
    double sum_pos = 0.0;
    for (int j = 0; j < n; ++j) {
      const int c = coef(rng);
      if (c != 0) {
        row.coefs.push_back({j, static_cast<double>(c)});
        if (c > 0) sum_pos += c;
      }
    }
    row.sense = Sense::le;
    row.rhs = std::floor(sum_pos * std::uniform_real_distribution<double>(0.2, 0.6)(rng)) + 0.5;
    inst.rows.push_back(std::move(row));
  }
  return inst;
}

}  // namespace retrobranch::oracle

#include "retrobranch/qnet.hpp"

namespace retrobranch::oracle {

/// Straight-line dense re-derivation of the Q-network forward pass: explicit
/// per-edge embeddings and messages, a dense mean-adjacency matrix, and
/// element-by-element layer norms.  Shares nothing with QNetwork::forward
/// beyond the parameter tensors.
inline std::vector<double> dense_qnet_forward(const QNetwork<double>& net, const BipartiteState& s) {
  const QNetConfig& cfg = net.config();
  const auto& layout = net.layout();
  auto T = [&](const std::string& name) -> const Eigen::MatrixXd& {
    for (std::size_t i = 0; i < layout.size(); ++i)
      if (layout[i].name == name) return net.tensors()[i];
    throw std::runtime_error("no tensor " + name);
  };
  const int E = cfg.emb;
  const double a = cfg.slope;
  auto lrelu = [a](double x) { return x > 0 ? x : a * x; };
  auto layer = [&](const Eigen::VectorXd& y, const Eigen::MatrixXd& g, const Eigen::MatrixXd& b) {
    double mu = 0;
    for (int i = 0; i < y.size(); ++i) mu += y[i];
    mu /= static_cast<double>(y.size());
    double var = 0;
    for (int i = 0; i < y.size(); ++i) var += (y[i] - mu) * (y[i] - mu);
    var /= static_cast<double>(y.size());
    Eigen::VectorXd out(y.size());
    for (int i = 0; i < y.size(); ++i) out[i] = lrelu(g(i, 0) * (y[i] - mu) / std::sqrt(var + cfg.ln_eps) + b(i, 0));
    return out;
  };
  const int n = s.num_vars, m = s.num_cons;
  std::vector<Eigen::VectorXd> hv(n), hc(m);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd x(kVarFeatures);
    for (int k = 0; k < kVarFeatures; ++k) x[k] = s.var(j, k);
    hv[j] = layer(T("var_emb.weight") * x + T("var_emb.bias"), T("var_emb.ln.weight"), T("var_emb.ln.bias"));
  }
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd x(kConsFeatures);
    for (int k = 0; k < kConsFeatures; ++k) x[k] = s.cons(i, k);
    hc[i] = layer(T("cons_emb.weight") * x + T("cons_emb.bias"), T("cons_emb.ln.weight"), T("cons_emb.ln.bias"));
  }
  const GraphStructure& g = *s.graph;
  std::vector<Eigen::VectorXd> edge_emb;
  for (int e = 0; e < g.num_edges(); ++e)
    edge_emb.push_back(T("edge_emb.weight") * static_cast<double>(g.edge_feature[e]) + T("edge_emb.bias"));
  for (int k = 0; k < cfg.conv_pairs; ++k) {
    for (int dir = 0; dir < 2; ++dir) {
      const std::string p = "conv" + std::to_string(k) + (dir == 0 ? ".vc" : ".cv");
      auto& dst = dir == 0 ? hc : hv;
      const auto& src = dir == 0 ? hv : hc;
      std::vector<Eigen::VectorXd> sum(dst.size(), Eigen::VectorXd::Zero(E));
      std::vector<int> count(dst.size(), 0);
      for (int e = 0; e < g.num_edges(); ++e) {
        const int d = dir == 0 ? g.edge_cons[e] : g.edge_var[e];
        const int sidx = dir == 0 ? g.edge_var[e] : g.edge_cons[e];
        sum[d] += T(p + ".src") * src[sidx] + T(p + ".edge") * edge_emb[e];
        ++count[d];
      }
      std::vector<Eigen::VectorXd> next(dst.size());
      for (std::size_t d = 0; d < dst.size(); ++d) {
        Eigen::VectorXd in(2 * E);
        in.head(E) = dst[d];
        in.tail(E) = count[d] ? Eigen::VectorXd(sum[d] / count[d]) : Eigen::VectorXd::Zero(E);
        next[d] = layer(T(p + ".update.weight") * in + T(p + ".update.bias"), T(p + ".ln.weight"), T(p + ".ln.bias"));
      }
      dst = next;
    }
  }
  std::vector<double> q(n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd h = T("head.0.weight") * hv[j] + T("head.0.bias");
    for (int i = 0; i < h.size(); ++i) h[i] = lrelu(h[i]);
    const double z = (T("head.1.weight") * h)(0, 0) + T("head.1.bias")(0, 0);
    q[j] = cfg.readout == Readout::neg_leaky_relu ? -lrelu(z) : (z < 0 ? z : a * z);
  }
  return q;
}

// Random state with n variables, m constraints and a random sparsity pattern
// (every constraint gets at least one edge).
inline BipartiteState random_state(std::mt19937_64& rng, int n, int m, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  BipartiteState s;
  s.num_vars = n;
  s.num_cons = m;
  for (int k = 0; k < n * kVarFeatures; ++k) s.var_features.push_back(static_cast<float>(normal(rng)));
  for (int k = 0; k < m * kConsFeatures; ++k) s.cons_features.push_back(static_cast<float>(normal(rng)));
  auto g = std::make_shared<GraphStructure>();
  g->num_vars = n;
  g->num_cons = m;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i % n || rng() % 2) {
        g->edge_cons.push_back(i);
        g->edge_var.push_back(j);
        g->edge_feature.push_back(static_cast<float>(normal(rng)));
      }
    }
  }
  s.graph = g;
  s.candidate_mask.assign(static_cast<std::size_t>(n), 1);
  for (int j = 0; j < n; ++j) s.candidates.push_back(j);
  return s;
}

// Signs of every pre-activation; a finite difference straddling a kink is not
// a valid derivative estimate.
inline std::vector<bool> kink_signature(const ForwardCache<double>& c) {
  std::vector<bool> sig;
  auto add = [&](const Eigen::MatrixXd& mtx) {
    for (Eigen::Index i = 0; i < mtx.size(); ++i) sig.push_back(mtx.data()[i] > 0);
  };
  add(c.var_emb.pre_act);
  add(c.cons_emb.pre_act);
  for (const auto& h : c.halves) add(h.norm.pre_act);
  add(c.head_pre);
  add(c.z);
  return sig;
}


struct FdCheck {
  double worst_relative_error = 0.0;
  long checked = 0;
  long skipped = 0;  // perturbation crossed a kink
};

/// Central differences of dq . Q(theta) against QNetwork::backward for every
/// parameter.
inline FdCheck finite_difference_check(QNetwork<double>& net, const GraphBatch& batch, const Eigen::VectorXd& dq,
                                       double h = 1e-4) {
  FdCheck out;
  ForwardCache<double> cache;
  net.forward(batch, &cache);
  const auto grads = net.backward(cache, dq);
  for (std::size_t t = 0; t < net.tensors().size(); ++t) {
    auto& tensor = net.tensors()[t];
    for (Eigen::Index k = 0; k < tensor.size(); ++k) {
      const double orig = tensor.data()[k];
      ForwardCache<double> cp, cm;
      tensor.data()[k] = orig + h;
      const double lp = dq.dot(net.forward(batch, &cp));
      tensor.data()[k] = orig - h;
      const double lm = dq.dot(net.forward(batch, &cm));
      tensor.data()[k] = orig;
      if (kink_signature(cp) != kink_signature(cm)) {
        ++out.skipped;
        continue;
      }
      const double fd = (lp - lm) / (2 * h);
      const double an = grads[t].data()[k];
      out.worst_relative_error =
          std::max(out.worst_relative_error, std::abs(fd - an) / std::max({1e-6, std::abs(fd), std::abs(an)}));
      ++out.checked;
    }
  }
  return out;
}

}  // namespace retrobranch::oracle
