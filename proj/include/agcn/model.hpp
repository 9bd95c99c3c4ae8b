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

// Structure-aware Transformer: multi-head attention restricted to k-hop
// neighborhoods, with per-layer K/V computed once for all nodes and gathered
// per node, a residual from the input features and a final linear projection.
//
// Layer l (H^0 = X):
//   Q = H W_Q, K = H W_K, V = H W_V                (full N-row projections)
//   Z_i[head] = softmax_j∈N_i(Q_i K_j^T / sqrt(d_Q/h)) V_j
//   H^{l+1} = concat_heads(Z) W_O + R W_res        (R = X, or H^l in hidden mode)
// Output H = H^L W_final.

#pragma once

#include "agcn/common.hpp"
#include "agcn/graph.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>

namespace agcn {

enum class ResidualSource { input, hidden };
enum class AttentionMode { structure, vanilla };

inline constexpr double kLayerNormEps = 1e-5;

struct ModelDims {
  Index d_in = 0;     // input feature dimension d
  Index d_model = 0;  // hidden width between layers
  Index d_q = 0;      // total query/key width over all heads
  Index d_v = 0;      // total value width over all heads
  Index heads = 1;
  Index layers = 1;
  Index d_out = 0;
  ResidualSource residual = ResidualSource::input;
  bool layer_norm = false;

  void validate() const {
    if (d_in < 1 || d_model < 1 || d_q < 1 || d_v < 1 || heads < 1 || layers < 1 || d_out < 1)
      throw ConfigError("model dims must all be positive");
    if (d_q % heads != 0)
      throw ConfigError("d_Q (" + std::to_string(d_q) + ") not divisible by heads (" +
                        std::to_string(heads) + ")");
    if (d_v % heads != 0)
      throw ConfigError("d_V (" + std::to_string(d_v) + ") not divisible by heads (" +
                        std::to_string(heads) + ")");
  }
  Index layer_input_dim(Index layer) const { return layer == 0 ? d_in : d_model; }
  Index residual_dim(Index layer) const {
    return residual == ResidualSource::input ? d_in : layer_input_dim(layer);
  }
  Index head_q() const { return d_q / heads; }
  Index head_v() const { return d_v / heads; }

  bool operator==(const ModelDims&) const = default;
};

struct LayerParams {
  Matrix w_q;    // d_in x d_Q, head t owns columns [t*d_Q/h, (t+1)*d_Q/h)
  Matrix w_k;    // d_in x d_Q
  Matrix w_v;    // d_in x d_V
  Matrix w_o;    // d_V x d_model
  Matrix w_res;  // residual_dim x d_model
};

struct ModelParams {
  ModelDims dims;
  std::vector<LayerParams> layers;
  Matrix final_proj;  // d_model x d_out

  /// Zero tensors with the same shapes.
  ModelParams zeros_like() const {
    ModelParams z = *this;
    for_each_tensor(z, [](const std::string&, Matrix& m) { m.setZero(); });
    return z;
  }

  /// Visits every tensor in a fixed order with a stable name.
  template <class Self, class Fn>
  static void for_each_tensor(Self& p, Fn&& fn) {
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + ".";
      fn(prefix + "w_q", p.layers[l].w_q);
      fn(prefix + "w_k", p.layers[l].w_k);
      fn(prefix + "w_v", p.layers[l].w_v);
      fn(prefix + "w_o", p.layers[l].w_o);
      fn(prefix + "w_res", p.layers[l].w_res);
    }
    fn(std::string("final_proj"), p.final_proj);
  }
};

/// Glorot-uniform weights, deterministic under `seed`.
inline ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  auto draw = [&](Index rows, Index cols, std::uint64_t stream) {
    std::mt19937_64 rng(derive_seed(seed, {stream}));
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-s, s);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = u(rng);
    return m;
  };
  for (Index l = 0; l < dims.layers; ++l) {
    const Index din = dims.layer_input_dim(l);
    const auto base = static_cast<std::uint64_t>(l) * 8;
    LayerParams lp;
    lp.w_q = draw(din, dims.d_q, base + 0);
    lp.w_k = draw(din, dims.d_q, base + 1);
    lp.w_v = draw(din, dims.d_v, base + 2);
    lp.w_o = draw(dims.d_v, dims.d_model, base + 3);
    lp.w_res = draw(dims.residual_dim(l), dims.d_model, base + 4);
    p.layers.push_back(std::move(lp));
  }
  p.final_proj = draw(dims.d_model, dims.d_out, 0xF1A1);
  return p;
}

/// Per-layer state kept from the forward pass for the reverse pass.
struct LayerCache {
  Matrix q;  // N x d_Q
  Matrix k;  // N x d_Q, filled once per forward
  Matrix v;  // N x d_V, filled once per forward
  Matrix z;  // N x d_V, concatenated head outputs
  /// Attention weights, [head * total_nnz + entry], entry order = mask order.
  std::vector<double> attention;
  Vector inv_std;  // layer-norm only
  /// Number of query-key score evaluations over all heads.
  std::int64_t score_evaluations = 0;
};

struct LayerOutput {
  Matrix h;
  LayerCache cache;
};

namespace detail {

inline void check_finite_rows(const Matrix& m, Index layer, const char* what) {
  for (Index i = 0; i < m.rows(); ++i)
    if (!m.row(i).allFinite())
      throw NumericError("non-finite " + std::string(what) + " at layer " + std::to_string(layer) +
                         ", node " + std::to_string(i));
}

/// Residual projection, head merge and optional layer norm.
inline Matrix finish_layer(const Matrix& z, const Matrix& residual_in, const LayerParams& p,
                           const ModelDims& dims, Index layer, LayerCache& cache) {
  Matrix h = z * p.w_o;
  h.noalias() += residual_in * p.w_res;
  if (dims.layer_norm) {
    cache.inv_std.resize(h.rows());
    for (Index i = 0; i < h.rows(); ++i) {
      const double mean = h.row(i).mean();
      h.row(i).array() -= mean;
      const double var = h.row(i).squaredNorm() / static_cast<double>(h.cols());
      cache.inv_std[i] = 1.0 / std::sqrt(var + kLayerNormEps);
      h.row(i) *= cache.inv_std[i];
    }
  }
  check_finite_rows(h, layer, "layer output");
  return h;
}

inline void check_layer_shapes(const Matrix& h_prev, const Matrix& x, const LayerParams& p,
                               const ModelDims& dims, Index layer) {
  const Index din = dims.layer_input_dim(layer);
  if (h_prev.cols() != din || p.w_q.rows() != din || p.w_k.rows() != din || p.w_v.rows() != din)
    throw DimensionError("layer " + std::to_string(layer) + ": input width mismatch");
  if (x.rows() != h_prev.rows()) throw DimensionError("feature/hidden row count mismatch");
  if (p.w_res.rows() != dims.residual_dim(layer))
    throw DimensionError("layer " + std::to_string(layer) + ": residual width mismatch");
}

}  // namespace detail

/// One structure-aware layer. K and V are projected once for all N rows; each
/// node then gathers the rows listed in its mask.
inline LayerOutput layer_forward(const Matrix& h_prev, const Matrix& x, const KHopMask& mask,
                                 const LayerParams& p, const ModelDims& dims, Index layer = 0) {
  detail::check_layer_shapes(h_prev, x, p, dims, layer);
  const Index n = h_prev.rows();
  if (mask.n_nodes() != n) throw DimensionError("mask node count != N");

  LayerOutput out;
  LayerCache& c = out.cache;
  // Cache fill: single writer, completes before the gather phase.
  c.q = h_prev * p.w_q;
  c.k = h_prev * p.w_k;
  c.v = h_prev * p.w_v;
  c.z = Matrix::Zero(n, dims.d_v);
  const Index nnz = mask.total_nnz();
  c.attention.assign(static_cast<std::size_t>(nnz * dims.heads), 0.0);

  const Index dq = dims.head_q();
  const Index dv = dims.head_v();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dq));
  std::vector<std::int64_t> evaluations(static_cast<std::size_t>(n), 0);

  parallel_for(n, [&](Index i) {
    const auto nb = mask.neighbors(i);
    const Index base = mask.offset(i);
    std::vector<double> scores(nb.size());
    for (Index t = 0; t < dims.heads; ++t) {
      const auto qi = c.q.row(i).segment(t * dq, dq);
      double max_score = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < nb.size(); ++e) {
        scores[e] = qi.dot(c.k.row(nb[e]).segment(t * dq, dq)) * scale;
        max_score = std::max(max_score, scores[e]);
      }
      evaluations[static_cast<std::size_t>(i)] += static_cast<std::int64_t>(nb.size());
      double denom = 0.0;
      for (double& s : scores) {
        s = std::exp(s - max_score);
        denom += s;
      }
      auto zi = c.z.row(i).segment(t * dv, dv);
      double* a = c.attention.data() + t * nnz + base;
      for (std::size_t e = 0; e < nb.size(); ++e) {
        a[e] = scores[e] / denom;
        zi.noalias() += a[e] * c.v.row(nb[e]).segment(t * dv, dv);
      }
    }
    if (!c.z.row(i).allFinite())
      throw NumericError("non-finite attention output at layer " + std::to_string(layer) +
                         ", node " + std::to_string(i));
  }, 32);
  for (auto e : evaluations) c.score_evaluations += e;

  const Matrix& residual_in = dims.residual == ResidualSource::input ? x : h_prev;
  out.h = detail::finish_layer(c.z, residual_in, p, dims, layer, c);
  return out;
}

/// Unmasked Transformer layer over all node pairs (dense score matrix). The
/// cache stores attention in the layout of KHopMask::complete(N).
inline LayerOutput vanilla_layer_forward(const Matrix& h_prev, const Matrix& x,
                                         const LayerParams& p, const ModelDims& dims,
                                         Index layer = 0) {
  detail::check_layer_shapes(h_prev, x, p, dims, layer);
  const Index n = h_prev.rows();
  LayerOutput out;
  LayerCache& c = out.cache;
  c.q = h_prev * p.w_q;
  c.k = h_prev * p.w_k;
  c.v = h_prev * p.w_v;
  c.z = Matrix(n, dims.d_v);
  c.attention.assign(static_cast<std::size_t>(n * n * dims.heads), 0.0);
  const Index dq = dims.head_q();
  const Index dv = dims.head_v();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dq));
  for (Index t = 0; t < dims.heads; ++t) {
    Matrix scores = (c.q.middleCols(t * dq, dq) * c.k.middleCols(t * dq, dq).transpose()) * scale;
    for (Index i = 0; i < n; ++i) {
      scores.row(i).array() -= scores.row(i).maxCoeff();
      scores.row(i) = scores.row(i).array().exp().matrix();
      scores.row(i) /= scores.row(i).sum();
    }
    c.z.middleCols(t * dv, dv) = scores * c.v.middleCols(t * dv, dv);
    std::copy(scores.data(), scores.data() + n * n, c.attention.begin() + t * n * n);
  }
  c.score_evaluations = n * n * dims.heads;
  detail::check_finite_rows(c.z, layer, "attention output");
  const Matrix& residual_in = dims.residual == ResidualSource::input ? x : h_prev;
  out.h = detail::finish_layer(c.z, residual_in, p, dims, layer, c);
  return out;
}

/// Everything the reverse pass needs from one forward evaluation.
struct ForwardTrace {
  std::vector<Matrix> hidden;  // H^0 = X, ..., H^L
  std::vector<LayerCache> caches;
  Matrix output;  // H = H^L W_final
  AttentionMode mode = AttentionMode::structure;
};

inline ForwardTrace forward_trace(const Matrix& x, const KHopMask& mask, const ModelParams& params,
                                  AttentionMode mode = AttentionMode::structure) {
  if (x.cols() != params.dims.d_in)
    throw DimensionError("feature dim " + std::to_string(x.cols()) + " != model d_in " +
                         std::to_string(params.dims.d_in));
  ForwardTrace tr;
  tr.mode = mode;
  tr.hidden.push_back(x);
  for (Index l = 0; l < params.dims.layers; ++l) {
    const auto& lp = params.layers[static_cast<std::size_t>(l)];
    LayerOutput lo = mode == AttentionMode::structure
                         ? layer_forward(tr.hidden.back(), x, mask, lp, params.dims, l)
                         : vanilla_layer_forward(tr.hidden.back(), x, lp, params.dims, l);
    tr.hidden.push_back(std::move(lo.h));
    tr.caches.push_back(std::move(lo.cache));
  }
  tr.output = tr.hidden.back() * params.final_proj;
  return tr;
}

/// Embeddings H (N x d_out).
inline Matrix forward(const Graph& g, const KHopMask& mask, const ModelParams& params,
                      AttentionMode mode = AttentionMode::structure) {
  return forward_trace(g.features(), mask, params, mode).output;
}

// ---------------------------------------------------------------------------
// Reverse pass

namespace detail {

/// Column-major view of a mask: for node j, the (row i, entry) pairs whose
/// neighbor list contains j, ordered by i.
struct MaskTranspose {
  std::vector<Index> offsets;
  std::vector<Index> rows;
  std::vector<Index> entries;

  explicit MaskTranspose(const KHopMask& m) {
    const Index n = m.n_nodes();
    offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (Index i = 0; i < n; ++i)
      for (Index j : m.neighbors(i)) ++offsets[static_cast<std::size_t>(j) + 1];
    for (Index j = 0; j < n; ++j) offsets[j + 1] += offsets[j];
    rows.resize(static_cast<std::size_t>(m.total_nnz()));
    entries.resize(rows.size());
    std::vector<Index> fill(offsets.begin(), offsets.end() - 1);
    for (Index i = 0; i < n; ++i) {
      const auto nb = m.neighbors(i);
      for (std::size_t e = 0; e < nb.size(); ++e) {
        const Index slot = fill[static_cast<std::size_t>(nb[e])]++;
        rows[static_cast<std::size_t>(slot)] = i;
        entries[static_cast<std::size_t>(slot)] = m.offset(i) + static_cast<Index>(e);
      }
    }
  }
};

}  // namespace detail

/// Reverse-mode gradients of a scalar loss with respect to every parameter,
/// given dLoss/dH for the final embeddings. `attn_mask` must be the mask the
/// forward pass attended over (KHopMask::complete(N) in vanilla mode).
inline ModelParams backward_model(const ModelParams& params, const ForwardTrace& trace,
                                  const KHopMask& attn_mask, const Matrix& d_output) {
  const ModelDims& dims = params.dims;
  const Matrix& x = trace.hidden.front();
  const Index n = x.rows();
  ModelParams grads = params.zeros_like();

  grads.final_proj = trace.hidden.back().transpose() * d_output;
  Matrix d_h = d_output * params.final_proj.transpose();

  const detail::MaskTranspose mt(attn_mask);
  const Index nnz = attn_mask.total_nnz();
  const Index dq = dims.head_q();
  const Index dv = dims.head_v();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dq));

  for (Index l = dims.layers - 1; l >= 0; --l) {
    const auto& lp = params.layers[static_cast<std::size_t>(l)];
    auto& lg = grads.layers[static_cast<std::size_t>(l)];
    const LayerCache& c = trace.caches[static_cast<std::size_t>(l)];
    const Matrix& h_prev = trace.hidden[static_cast<std::size_t>(l)];
    const Matrix& residual_in = dims.residual == ResidualSource::input ? x : h_prev;

    Matrix d_pre = d_h;
    if (dims.layer_norm) {
      const Matrix& y = trace.hidden[static_cast<std::size_t>(l) + 1];
      const double inv_cols = 1.0 / static_cast<double>(y.cols());
      for (Index i = 0; i < n; ++i) {
        const double mean_dy = d_h.row(i).sum() * inv_cols;
        const double mean_dyy = d_h.row(i).dot(y.row(i)) * inv_cols;
        d_pre.row(i) = c.inv_std[i] * (d_h.row(i).array() - mean_dy - y.row(i).array() * mean_dyy).matrix();
      }
    }

    lg.w_o = c.z.transpose() * d_pre;
    lg.w_res = residual_in.transpose() * d_pre;
    const Matrix d_z = d_pre * lp.w_o.transpose();

    // d(score) per (head, entry), computed row-wise.
    std::vector<double> d_score(static_cast<std::size_t>(nnz * dims.heads), 0.0);
    Matrix d_q = Matrix::Zero(n, dims.d_q);
    parallel_for(n, [&](Index i) {
      const auto nb = attn_mask.neighbors(i);
      const Index base = attn_mask.offset(i);
      for (Index t = 0; t < dims.heads; ++t) {
        const double* a = c.attention.data() + t * nnz + base;
        double* ds = d_score.data() + t * nnz + base;
        const auto dzi = d_z.row(i).segment(t * dv, dv);
        double weighted = 0.0;
        for (std::size_t e = 0; e < nb.size(); ++e) {
          ds[e] = dzi.dot(c.v.row(nb[e]).segment(t * dv, dv));
          weighted += a[e] * ds[e];
        }
        auto dqi = d_q.row(i).segment(t * dq, dq);
        for (std::size_t e = 0; e < nb.size(); ++e) {
          ds[e] = a[e] * (ds[e] - weighted) * scale;
          dqi.noalias() += ds[e] * c.k.row(nb[e]).segment(t * dq, dq);
        }
      }
    }, 32);

    // Keys and values gather their gradient from every row that attended to them.
    Matrix d_k = Matrix::Zero(n, dims.d_q);
    Matrix d_v = Matrix::Zero(n, dims.d_v);
    parallel_for(n, [&](Index j) {
      for (Index s = mt.offsets[static_cast<std::size_t>(j)]; s < mt.offsets[static_cast<std::size_t>(j) + 1]; ++s) {
        const Index i = mt.rows[static_cast<std::size_t>(s)];
        const Index e = mt.entries[static_cast<std::size_t>(s)];
        for (Index t = 0; t < dims.heads; ++t) {
          d_k.row(j).segment(t * dq, dq).noalias() +=
              d_score[static_cast<std::size_t>(t * nnz + e)] * c.q.row(i).segment(t * dq, dq);
          d_v.row(j).segment(t * dv, dv).noalias() +=
              c.attention[static_cast<std::size_t>(t * nnz + e)] * d_z.row(i).segment(t * dv, dv);
        }
      }
    }, 32);

    lg.w_q = h_prev.transpose() * d_q;
    lg.w_k = h_prev.transpose() * d_k;
    lg.w_v = h_prev.transpose() * d_v;

    if (l > 0) {
      Matrix d_prev = d_q * lp.w_q.transpose();
      d_prev.noalias() += d_k * lp.w_k.transpose();
      d_prev.noalias() += d_v * lp.w_v.transpose();
      if (dims.residual == ResidualSource::hidden) d_prev.noalias() += d_pre * lp.w_res.transpose();
      d_h = std::move(d_prev);
    }
  }

  ModelParams::for_each_tensor(grads, [](const std::string& name, const Matrix& m) {
    if (!m.allFinite()) throw NumericError("non-finite gradient for " + name);
  });
  return grads;
}

}  // namespace agcn
