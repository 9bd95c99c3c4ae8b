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

#pragma once

#include "agcn/common.hpp"
#include "agcn/graph.hpp"
#include "agcn/model.hpp"

#include <cmath>
#include <random>
#include <unordered_set>

namespace agcn {

struct TrainingConfig {
  int k = 2;
  double lambda = 1e-2;
  double gamma = 1e-4;
  int epochs = 200;
  Index layers = 2;
  Index heads = 4;
  Index d_q = 64;
  Index d_v = 64;
  Index d_model = 0;  // 0: same as d_v
  Index d_out = 100;
  double learning_rate = 1e-3;
  Index pair_cap = 256;
  std::uint64_t seed = 0;
  ResidualSource residual = ResidualSource::input;
  bool layer_norm = false;
  AttentionMode mode = AttentionMode::structure;
  bool use_lneg = true;
  Index max_neighbors = 0;  // 0: unlimited

  void validate() const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (pair_cap < 1) throw ConfigError("pair_cap must be >= 1");
    if (max_neighbors < 0) throw ConfigError("max_neighbors must be >= 0");
  }

  ModelDims dims(Index d_in) const {
    ModelDims d;
    d.d_in = d_in;
    d.d_model = d_model > 0 ? d_model : d_v;
    d.d_q = d_q;
    d.d_v = d_v;
    d.heads = heads;
    d.layers = layers;
    d.d_out = d_out;
    d.residual = residual;
    d.layer_norm = layer_norm;
    d.validate();
    return d;
  }
};

inline constexpr double kCosineEps = 1e-12;

/// u.v / (|u||v| + eps); 0 when either norm is 0.
inline double cosine_sim(std::span<const double> u, std::span<const double> v) {
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv) + kCosineEps);
}

/// All-pairs cosine similarities of the rows of H, with the pieces needed to
/// differentiate them.
struct Similarity {
  Matrix gram;   // H H^T
  Vector norms;  // row norms
  Matrix sim;    // cosine similarity, 0 where a norm is 0

  explicit Similarity(const Matrix& h) : gram(h * h.transpose()), norms(h.rowwise().norm()) {
    const Index n = h.rows();
    sim.resize(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        sim(i, j) = (norms[i] == 0.0 || norms[j] == 0.0)
                        ? 0.0
                        : gram(i, j) / (norms[i] * norms[j] + kCosineEps);
  }

  /// Chain rule from dLoss/dsim (ordered pairs, i != j) to dLoss/dH.
  Matrix backprop(const Matrix& h, const Matrix& d_sim) const {
    const Index n = h.rows();
    const Matrix both = d_sim + d_sim.transpose();
    Matrix direct = Matrix::Zero(n, n);
    Vector self = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      if (norms[i] == 0.0) continue;
      double acc = 0.0;
      for (Index j = 0; j < n; ++j) {
        if (j == i || norms[j] == 0.0 || both(i, j) == 0.0) continue;
        const double denom = norms[i] * norms[j] + kCosineEps;
        direct(i, j) = both(i, j) / denom;
        acc += both(i, j) * gram(i, j) * norms[j] / (denom * denom * norms[i]);
      }
      self[i] = acc;
    }
    Matrix d_h = direct * h;
    d_h -= self.asDiagonal() * h;
    return d_h;
  }
};

namespace detail {

struct PosTerm {
  double value = 0.0;
  Index contributing = 0;
};

/// Positive contrastive term; accumulates dL/dsim scaled by `weight` when
/// `d_sim` is non-null.
inline PosTerm positive_loss(const Similarity& s, const SparseMatrix& w, double weight,
                             Matrix* d_sim) {
  const Index n = s.sim.rows();
  if (n < 2) throw ConfigError("positive loss needs N >= 2");
  if (w.rows() != n || w.cols() != n) throw DimensionError("weight matrix must be N x N");
  std::vector<double> per_node(static_cast<std::size_t>(n), 0.0);
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  std::vector<double> pos_mass(static_cast<std::size_t>(n), 0.0);
  std::vector<double> all_mass(static_cast<std::size_t>(n), 0.0);
  parallel_for(n, [&](Index i) {
    double pos = 0.0;
    bool any = false;
    for (SparseMatrix::InnerIterator it(w, i); it; ++it) {
      if (it.col() == i || it.value() == 0.0) continue;
      any = true;
      pos += it.value() * std::exp(s.sim(i, it.col()));
    }
    if (!any) return;
    double all = 0.0;
    for (Index j = 0; j < n; ++j)
      if (j != i) all += std::exp(s.sim(i, j));
    per_node[static_cast<std::size_t>(i)] = std::log(all) - std::log(pos);
    pos_mass[static_cast<std::size_t>(i)] = pos;
    all_mass[static_cast<std::size_t>(i)] = all;
    used[static_cast<std::size_t>(i)] = 1;
  }, 16);

  PosTerm out;
  std::vector<double> terms;
  for (Index i = 0; i < n; ++i)
    if (used[static_cast<std::size_t>(i)]) terms.push_back(per_node[static_cast<std::size_t>(i)]);
  out.contributing = static_cast<Index>(terms.size());
  if (terms.empty()) throw DegenerateLossError("every node has an empty positive set");
  out.value = pairwise_sum(terms) / static_cast<double>(out.contributing);

  if (d_sim != nullptr && weight != 0.0) {
    const double scale = weight / static_cast<double>(out.contributing);
    parallel_for(n, [&](Index i) {
      if (!used[static_cast<std::size_t>(i)]) return;
      const double all = all_mass[static_cast<std::size_t>(i)];
      const double pos = pos_mass[static_cast<std::size_t>(i)];
      for (Index j = 0; j < n; ++j)
        if (j != i) (*d_sim)(i, j) += scale * std::exp(s.sim(i, j)) / all;
      for (SparseMatrix::InnerIterator it(w, i); it; ++it) {
        if (it.col() == i || it.value() == 0.0) continue;
        (*d_sim)(i, it.col()) -= scale * it.value() * std::exp(s.sim(i, it.col())) / pos;
      }
    }, 16);
  }
  return out;
}

}  // namespace detail

/// Weighted-positive contrastive loss over rows of H. `w` holds positive-pair
/// weights (khop_weights); nodes whose row is all zero are skipped.
inline double loss_pos(const Matrix& h, const SparseMatrix& w) {
  return detail::positive_loss(Similarity(h), w, 0.0, nullptr).value;
}

/// Neighbors of node i (self excluded) in descending similarity order.
struct RankedNeighborhood {
  Index node = 0;
  std::vector<Index> order;  // order[r-1] has rank r
  std::vector<double> sims;  // sims[r-1] = sim(H_i, H_order[r-1])

  Index size() const { return static_cast<Index>(order.size()); }
  /// 1-based rank of `j`, or 0 when j is not in the neighborhood.
  Index rank_of(Index j) const {
    for (std::size_t r = 0; r < order.size(); ++r)
      if (order[r] == j) return static_cast<Index>(r) + 1;
    return 0;
  }
};

inline RankedNeighborhood rank_from_row(const Matrix& sim, Index i, const KHopMask& mask) {
  RankedNeighborhood rn;
  rn.node = i;
  for (Index j : mask.neighbors(i))
    if (j != i) rn.order.push_back(j);
  // Mask lists are ascending, so a stable sort keeps lower indices first on ties.
  std::stable_sort(rn.order.begin(), rn.order.end(),
                   [&](Index a, Index b) { return sim(i, a) > sim(i, b); });
  rn.sims.reserve(rn.order.size());
  for (Index j : rn.order) rn.sims.push_back(sim(i, j));
  return rn;
}

/// Ranks node i's mask neighbors by cosine similarity to H_i (rank 1 = most
/// similar, ties broken by ascending index).
inline RankedNeighborhood rank_neighbors(const Matrix& h, Index i, const KHopMask& mask) {
  RankedNeighborhood rn;
  rn.node = i;
  std::vector<std::pair<double, Index>> keyed;
  const auto row = [&](Index r) {
    return std::span<const double>(h.row(r).data(), static_cast<std::size_t>(h.cols()));
  };
  for (Index j : mask.neighbors(i))
    if (j != i) keyed.emplace_back(cosine_sim(row(i), row(j)), j);
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [s, j] : keyed) {
    rn.order.push_back(j);
    rn.sims.push_back(s);
  }
  return rn;
}

/// Oriented (higher-ranked, lower-ranked) pair as node indices.
struct RankPair {
  Index plus = 0;
  Index minus = 0;
  Index plus_rank = 0;
  Index minus_rank = 0;

  bool operator==(const RankPair&) const = default;
};

/// All C(n,2) rank-oriented pairs when that fits under `cap`, else `cap`
/// distinct pairs drawn uniformly without replacement. Pairs come back ordered
/// by (plus_rank, minus_rank).
inline std::vector<RankPair> sample_pairs(const RankedNeighborhood& rn, Index cap,
                                          std::uint64_t seed) {
  if (cap < 1) throw ConfigError("pair cap must be >= 1");
  const Index n = rn.size();
  std::vector<RankPair> out;
  if (n < 2) return out;
  const Index total = n * (n - 1) / 2;
  auto make = [&](Index a, Index b) {
    return RankPair{rn.order[static_cast<std::size_t>(a)], rn.order[static_cast<std::size_t>(b)],
                    a + 1, b + 1};
  };
  if (total <= cap) {
    out.reserve(static_cast<std::size_t>(total));
    for (Index a = 0; a < n; ++a)
      for (Index b = a + 1; b < n; ++b) out.push_back(make(a, b));
    return out;
  }
  // Floyd's algorithm over pair indices in [0, total).
  std::mt19937_64 rng(seed);
  std::unordered_set<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(cap) * 2);
  for (Index j = total - cap; j < total; ++j) {
    std::uniform_int_distribution<Index> pick(0, j);
    const Index t = pick(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<Index> idx(chosen.begin(), chosen.end());
  std::sort(idx.begin(), idx.end());
  out.reserve(idx.size());
  // Pair index p enumerates (a, b), a < b, row-major over a.
  Index a = 0, row_start = 0;
  for (Index p : idx) {
    while (p >= row_start + (n - 1 - a)) {
      row_start += n - 1 - a;
      ++a;
    }
    out.push_back(make(a, a + 1 + (p - row_start)));
  }
  return out;
}

inline std::uint64_t pair_seed(std::uint64_t root, std::uint64_t epoch, Index node) {
  return derive_seed(root, {0x9A1C, epoch, static_cast<std::uint64_t>(node)});
}

namespace detail {

struct NegTerm {
  double value = 0.0;
  Index contributing = 0;
};

inline NegTerm negative_loss(const Similarity& s, const KHopMask& mask, double gamma, Index cap,
                             std::uint64_t root_seed, std::uint64_t epoch, double weight,
                             Matrix* d_sim) {
  if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
  const Index n = s.sim.rows();
  if (mask.n_nodes() != n) throw DimensionError("mask node count != N");
  std::vector<double> per_node(static_cast<std::size_t>(n), 0.0);
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<RankPair>> active(d_sim ? static_cast<std::size_t>(n) : 0);
  parallel_for(n, [&](Index i) {
    const RankedNeighborhood rn = rank_from_row(s.sim, i, mask);
    if (rn.size() < 2) return;
    used[static_cast<std::size_t>(i)] = 1;
    const auto pairs = sample_pairs(rn, cap, pair_seed(root_seed, epoch, i));
    std::vector<double> terms;
    terms.reserve(pairs.size());
    for (const auto& p : pairs) {
      const double eta = gamma * static_cast<double>(p.minus_rank - p.plus_rank);
      const double hinge = std::exp(s.sim(i, p.minus)) - std::exp(s.sim(i, p.plus)) + eta;
      if (hinge > 0.0) {
        terms.push_back(hinge);
        if (d_sim) active[static_cast<std::size_t>(i)].push_back(p);
      }
    }
    per_node[static_cast<std::size_t>(i)] = pairwise_sum(terms);
  }, 16);

  NegTerm out;
  std::vector<double> terms;
  for (Index i = 0; i < n; ++i)
    if (used[static_cast<std::size_t>(i)]) terms.push_back(per_node[static_cast<std::size_t>(i)]);
  out.contributing = static_cast<Index>(terms.size());
  if (terms.empty()) return out;
  out.value = pairwise_sum(terms) / static_cast<double>(out.contributing);

  if (d_sim != nullptr && weight != 0.0) {
    const double scale = weight / static_cast<double>(out.contributing);
    parallel_for(n, [&](Index i) {
      for (const auto& p : active[static_cast<std::size_t>(i)]) {
        (*d_sim)(i, p.minus) += scale * std::exp(s.sim(i, p.minus));
        (*d_sim)(i, p.plus) -= scale * std::exp(s.sim(i, p.plus));
      }
    }, 16);
  }
  return out;
}

}  // namespace detail

/// Rank-margin hinge loss over mask neighborhoods; mean of per-node sums over
/// nodes with at least two neighbors. `epoch` selects the pair sample.
inline double loss_neg(const Matrix& h, const KHopMask& mask, const TrainingConfig& cfg,
                       std::uint64_t epoch = 0) {
  return detail::negative_loss(Similarity(h), mask, cfg.gamma, cfg.pair_cap, cfg.seed, epoch, 0.0,
                               nullptr)
      .value;
}

struct LossBreakdown {
  double pos = 0.0;
  double neg = 0.0;
  double total = 0.0;
  Matrix d_h;  // dTotal/dH, empty unless requested
};

/// L_neg + lambda * L_pos (L_neg dropped when cfg.use_lneg is false).
inline LossBreakdown total_loss(const Matrix& h, const SparseMatrix& w, const KHopMask& mask,
                                const TrainingConfig& cfg, std::uint64_t epoch = 0,
                                bool with_grad = false) {
  const Similarity s(h);
  Matrix d_sim;
  if (with_grad) d_sim = Matrix::Zero(h.rows(), h.rows());
  Matrix* ds = with_grad ? &d_sim : nullptr;
  LossBreakdown out;
  out.pos = detail::positive_loss(s, w, cfg.lambda, ds).value;
  if (cfg.use_lneg)
    out.neg = detail::negative_loss(s, mask, cfg.gamma, cfg.pair_cap, cfg.seed, epoch, 1.0, ds).value;
  out.total = out.neg + cfg.lambda * out.pos;
  if (with_grad) out.d_h = s.backprop(h, d_sim);
  return out;
}

// ---------------------------------------------------------------------------
// Training

/// Graph-derived inputs that stay fixed across epochs.
struct TrainingContext {
  KHopMask loss_mask;
  KHopMask attn_mask;
  SparseMatrix weights;

  TrainingContext(const Graph& g, const TrainingConfig& cfg)
      : loss_mask(khop_mask(g, cfg.k)), weights(khop_weights(g, cfg.k)) {
    if (cfg.mode == AttentionMode::vanilla)
      attn_mask = KHopMask::complete(g.n_nodes());
    else
      attn_mask = cap_neighbors(loss_mask, cfg.max_neighbors, derive_seed(cfg.seed, {0xCA9}));
  }
};

/// Loss and parameter gradients at `params`.
struct Evaluation {
  LossBreakdown loss;
  ModelParams grads;
  Matrix embeddings;
};

inline Evaluation evaluate_loss(const Graph& g, const TrainingContext& ctx,
                                const ModelParams& params, const TrainingConfig& cfg,
                                std::uint64_t epoch, bool with_grad) {
  ForwardTrace tr = forward_trace(g.features(), ctx.attn_mask, params, cfg.mode);
  Evaluation ev;
  ev.loss = total_loss(tr.output, ctx.weights, ctx.loss_mask, cfg, epoch, with_grad);
  if (with_grad) ev.grads = backward_model(params, tr, ctx.attn_mask, ev.loss.d_h);
  ev.embeddings = std::move(tr.output);
  return ev;
}

/// Exact gradients of total_loss through the model (ranking and pair sampling
/// held constant).
inline ModelParams backward(const Graph& g, const TrainingContext& ctx, const ModelParams& params,
                            const TrainingConfig& cfg, std::uint64_t epoch = 0) {
  return evaluate_loss(g, ctx, params, cfg, epoch, true).grads;
}

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// One bias-corrected Adam update, in place.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
  std::vector<Matrix*> p;
  std::vector<const Matrix*> g;
  ModelParams::for_each_tensor(params, [&](const std::string&, Matrix& m) { p.push_back(&m); });
  ModelParams::for_each_tensor(grads, [&](const std::string&, const Matrix& m) { g.push_back(&m); });
  if (state.m.empty()) {
    for (auto* t : p) {
      state.m.push_back(Matrix::Zero(t->rows(), t->cols()));
      state.v.push_back(Matrix::Zero(t->rows(), t->cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto& m = state.m[t];
    auto& v = state.v[t];
    m = state.beta1 * m + (1.0 - state.beta1) * *g[t];
    v = state.beta2 * v + (1.0 - state.beta2) * g[t]->cwiseAbs2();
    p[t]->array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

struct EpochLoss {
  int epoch = 0;
  double pos = 0.0;
  double neg = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLoss> history;
  Matrix embeddings;  // forward pass with the final parameters
};

/// Full-batch training: forward, losses, reverse pass, Adam, for cfg.epochs.
inline TrainResult train(const Graph& g, const TrainingConfig& cfg) {
  cfg.validate();
  const TrainingContext ctx(g, cfg);
  TrainResult res;
  res.params = init_params(cfg.dims(g.feature_dim()), derive_seed(cfg.seed, {0x1417}));
  AdamState adam;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Evaluation ev;
    try {
      ev = evaluate_loss(g, ctx, res.params, cfg, static_cast<std::uint64_t>(epoch), true);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(ev.loss.total))
      throw NumericError("epoch " + std::to_string(epoch) + ": non-finite loss");
    res.history.push_back({epoch, ev.loss.pos, ev.loss.neg, ev.loss.total});
    adam_step(res.params, ev.grads, adam, cfg.learning_rate);
  }
  res.embeddings = forward_trace(g.features(), ctx.attn_mask, res.params, cfg.mode).output;
  return res;
}

}  // namespace agcn
