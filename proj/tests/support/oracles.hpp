// Copyright 2026 The AGCN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Independent reference computations used only by tests. Nothing here calls
// the library routine it is meant to check.

#pragma once

#include "agcn/agcn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

namespace agcn::oracle {

using Dense = Eigen::MatrixXd;

inline Dense dense_adjacency(const Graph& g) {
  Dense a = Dense::Zero(g.n_nodes(), g.n_nodes());
  for (const auto& [u, v] : g.edge_list()) a(u, v) = a(v, u) = 1.0;
  return a;
}

/// D^{-1/2} A D^{-1/2} by explicit diagonal matrices.
inline Dense dense_normalized(const Graph& g, bool self_loops) {
  Dense a = dense_adjacency(g);
  if (self_loops) a += Dense::Identity(a.rows(), a.cols());
  const Eigen::VectorXd deg = a.rowwise().sum();
  Dense d = Dense::Zero(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) d(i, i) = deg[i] > 0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
  return d * a * d;
}

inline Dense to_dense(const SparseMatrix& s) { return Dense(s); }

/// All-pairs distances by Floyd-Warshall; -1 for unreachable.
inline std::vector<std::vector<Index>> all_pairs_distances(const Graph& g) {
  const Index n = g.n_nodes();
  const Index inf = std::numeric_limits<Index>::max() / 4;
  std::vector<std::vector<Index>> d(n, std::vector<Index>(n, inf));
  for (Index i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& [u, v] : g.edge_list()) d[u][v] = d[v][u] = 1;
  for (Index m = 0; m < n; ++m)
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][m] + d[m][j]);
  for (auto& row : d)
    for (auto& x : row)
      if (x >= inf) x = -1;
  return d;
}

/// Per-node queue BFS with depth cap.
inline std::vector<std::vector<Index>> bfs_mask_lists(const Graph& g, int k) {
  const Index n = g.n_nodes();
  const Dense a = dense_adjacency(g);
  std::vector<std::vector<Index>> out(n);
  for (Index s = 0; s < n; ++s) {
    std::vector<int> depth(n, -1);
    std::vector<Index> queue{s};
    depth[s] = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const Index u = queue[head];
      if (depth[u] == k) continue;
      for (Index v = 0; v < n; ++v)
        if (a(u, v) != 0.0 && depth[v] < 0) {
          depth[v] = depth[u] + 1;
          queue.push_back(v);
        }
    }
    for (Index v = 0; v < n; ++v)
      if (depth[v] >= 0) out[s].push_back(v);
  }
  return out;
}

/// Random G(n, p) with Gaussian features.
inline Graph random_graph(Index n, double p, std::uint64_t seed, Index d = 3,
                          std::optional<int> classes = std::nullopt) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (u(rng) < p) edges.emplace_back(i, j);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = gauss(rng);
  std::optional<std::vector<int>> labels;
  if (classes) {
    labels.emplace(n);
    std::uniform_int_distribution<int> pick(0, *classes - 1);
    for (auto& l : *labels) l = pick(rng);
  }
  return Graph::from_edges(n, edges, std::move(x), std::move(labels));
}

/// Path 0-1-...-(n-1).
inline Graph path_graph(Index n, Index d = 2, std::uint64_t seed = 0) {
  std::vector<Edge> edges;
  for (Index i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix x(n, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
  return Graph::from_edges(n, edges, std::move(x));
}

/// Literal per-node form: gather X_att = H[N_i], then project K_i = X_att W_K
/// and V_i = X_att W_V for every node separately.
inline Matrix naive_layer(const Matrix& h_prev, const Matrix& x,
                          const std::vector<std::vector<Index>>& lists, const LayerParams& p,
                          const ModelDims& dims) {
  const Index n = h_prev.rows();
  const Index dq = dims.d_q / dims.heads, dv = dims.d_v / dims.heads;
  Matrix z = Matrix::Zero(n, dims.d_v);
  for (Index i = 0; i < n; ++i) {
    const auto& nb = lists[i];
    Dense x_att(nb.size(), h_prev.cols());
    for (std::size_t e = 0; e < nb.size(); ++e) x_att.row(e) = h_prev.row(nb[e]);
    const Dense k_i = x_att * Dense(p.w_k);
    const Dense v_i = x_att * Dense(p.w_v);
    const Eigen::RowVectorXd q_i = h_prev.row(i) * p.w_q;
    for (Index t = 0; t < dims.heads; ++t) {
      Eigen::VectorXd s = k_i.middleCols(t * dq, dq) * q_i.segment(t * dq, dq).transpose();
      s /= std::sqrt(static_cast<double>(dq));
      s = (s.array() - s.maxCoeff()).exp();
      s /= s.sum();
      z.row(i).segment(t * dv, dv) = s.transpose() * v_i.middleCols(t * dv, dv);
    }
  }
  const Matrix& r = dims.residual == ResidualSource::input ? x : h_prev;
  Matrix h = z * p.w_o + r * p.w_res;
  if (dims.layer_norm)
    for (Index i = 0; i < n; ++i) {
      const double mean = h.row(i).mean();
      const Eigen::RowVectorXd c = h.row(i).array() - mean;
      const double var = c.squaredNorm() / static_cast<double>(c.size());
      h.row(i) = c / std::sqrt(var + kLayerNormEps);
    }
  return h;
}

inline std::vector<std::vector<Index>> mask_lists(const KHopMask& m) {
  std::vector<std::vector<Index>> out(m.n_nodes());
  for (Index i = 0; i < m.n_nodes(); ++i) out[i].assign(m.neighbors(i).begin(), m.neighbors(i).end());
  return out;
}

inline double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb + 1e-12);
}

/// Direct double sum over all pairs.
inline double loss_pos_bruteforce(const Matrix& h, const Dense& w) {
  const Index n = h.rows();
  double total = 0.0;
  int used = 0;
  for (Index i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    bool any = false;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double e = std::exp(cosine(h.row(i), h.row(j)));
      den += e;
      if (w(i, j) != 0.0) {
        any = true;
        num += w(i, j) * e;
      }
    }
    if (!any) continue;
    total += -std::log(num / den);
    ++used;
  }
  return total / used;
}

/// Every rank-oriented pair (no cap), ranks from a full sort.
inline double loss_neg_bruteforce(const Matrix& h, const std::vector<std::vector<Index>>& lists,
                                  double gamma) {
  const Index n = h.rows();
  double total = 0.0;
  int used = 0;
  for (Index i = 0; i < n; ++i) {
    std::vector<Index> nb;
    for (Index j : lists[i])
      if (j != i) nb.push_back(j);
    if (nb.size() < 2) continue;
    std::sort(nb.begin(), nb.end(), [&](Index a, Index b) {
      const double sa = cosine(h.row(i), h.row(a)), sb = cosine(h.row(i), h.row(b));
      return sa != sb ? sa > sb : a < b;
    });
    double li = 0.0;
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (std::size_t b = a + 1; b < nb.size(); ++b) {
        const double eta = gamma * static_cast<double>(b - a);
        li += std::max(0.0, std::exp(cosine(h.row(i), h.row(nb[b]))) -
                                std::exp(cosine(h.row(i), h.row(nb[a]))) + eta);
      }
    total += li;
    ++used;
  }
  return used == 0 ? 0.0 : total / used;
}

/// Central finite differences of `f` with respect to every parameter entry.
inline ModelParams finite_difference(const ModelParams& params,
                                     const std::function<double(const ModelParams&)>& f,
                                     double step = 1e-5) {
  ModelParams grads = params.zeros_like();
  ModelParams probe = params;
  std::vector<Matrix*> in, out;
  ModelParams::for_each_tensor(probe, [&](const std::string&, Matrix& m) { in.push_back(&m); });
  ModelParams::for_each_tensor(grads, [&](const std::string&, Matrix& m) { out.push_back(&m); });
  for (std::size_t t = 0; t < in.size(); ++t)
    for (Index e = 0; e < in[t]->size(); ++e) {
      const double orig = in[t]->data()[e];
      in[t]->data()[e] = orig + step;
      const double up = f(probe);
      in[t]->data()[e] = orig - step;
      const double down = f(probe);
      in[t]->data()[e] = orig;
      out[t]->data()[e] = (up - down) / (2.0 * step);
    }
  return grads;
}

struct GradientMismatch {
  std::string tensor;
  Index entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// |a - f| <= rtol * max(|a|, |f|) + atol, entry by entry.
inline std::vector<GradientMismatch> compare_gradients(const ModelParams& analytic,
                                                       const ModelParams& numeric, double rtol,
                                                       double atol) {
  std::vector<std::pair<std::string, const Matrix*>> a, f;
  ModelParams::for_each_tensor(analytic, [&](const std::string& n, const Matrix& m) { a.emplace_back(n, &m); });
  ModelParams::for_each_tensor(numeric, [&](const std::string& n, const Matrix& m) { f.emplace_back(n, &m); });
  std::vector<GradientMismatch> bad;
  for (std::size_t t = 0; t < a.size(); ++t)
    for (Index e = 0; e < a[t].second->size(); ++e) {
      const double x = a[t].second->data()[e], y = f[t].second->data()[e];
      if (std::abs(x - y) > rtol * std::max(std::abs(x), std::abs(y)) + atol)
        bad.push_back({a[t].first, e, x, y});
    }
  return bad;
}

/// Max matched fraction over all label permutations.
inline double accuracy_bruteforce(const std::vector<int>& pred, const std::vector<int>& truth, int c) {
  std::vector<int> perm(c);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (perm[pred[i]] == truth[i]) ++hit;
    best = std::max(best, static_cast<double>(hit) / static_cast<double>(pred.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Minimum within-cluster sum of squares over every assignment of points to
/// at most c clusters (c^n enumeration).
inline double optimal_inertia(const Matrix& x, int c) {
  const Index n = x.rows();
  std::vector<int> assign(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    double inertia = 0.0;
    for (int m = 0; m < c; ++m) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
      int count = 0;
      for (Index i = 0; i < n; ++i)
        if (assign[i] == m) mean += x.row(i), ++count;
      if (count == 0) continue;
      mean /= count;
      for (Index i = 0; i < n; ++i)
        if (assign[i] == m) inertia += (x.row(i) - mean).squaredNorm();
    }
    best = std::min(best, inertia);
    Index pos = 0;
    while (pos < n && ++assign[pos] == c) assign[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

/// R-ratio by explicit dense reachability rows and a double loop.
inline std::pair<double, double> r_ratio_bruteforce(const Graph& g, const std::vector<Index>& set, int k) {
  const Index n = g.n_nodes();
  const Dense a1 = dense_adjacency(g) + Dense::Identity(n, n);
  Dense p = Dense::Identity(n, n);
  for (int s = 0; s < k; ++s) p = p * a1;
  const Dense b = (p.array() > 0.0).cast<double>();
  double all = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) all += (b.row(i) - b.row(j)).norm();
  double within = 0.0;
  for (Index i : set)
    for (Index u : set) within += (b.row(i) - b.row(u)).norm();
  const double c = static_cast<double>(set.size()), nn = static_cast<double>(n);
  return {(within / (c * c)) / (all / (nn * nn)), (within / c) / (all / nn)};
}

}  // namespace agcn::oracle
