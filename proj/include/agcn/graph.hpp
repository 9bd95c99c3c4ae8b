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

#include <cmath>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <utility>

namespace agcn {

using Edge = std::pair<Index, Index>;

/// Undirected, unweighted graph with dense node features and optional labels.
///
/// Adjacency is kept as a symmetric CSR structure without self-loops; every
/// undirected edge appears once in each endpoint's row. Instances are
/// immutable; derived graphs are produced by `with_features`.
class Graph {
 public:
  Graph() = default;

  /// Builds a graph from an arbitrary edge list. Edges are symmetrized and
  /// deduplicated; self-loops are dropped. Throws DimensionError on
  /// out-of-range endpoints or label-count mismatch.
  static Graph from_edges(Index n_nodes, std::span<const Edge> edges, Matrix features,
                          std::optional<std::vector<int>> labels = std::nullopt) {
    if (features.rows() != n_nodes)
      throw DimensionError("feature rows (" + std::to_string(features.rows()) +
                           ") != node count (" + std::to_string(n_nodes) + ")");
    std::vector<Edge> directed;
    directed.reserve(edges.size() * 2);
    for (const auto& [u, v] : edges) {
      if (u < 0 || u >= n_nodes || v < 0 || v >= n_nodes)
        throw DimensionError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                             ") out of range for " + std::to_string(n_nodes) + " nodes");
      if (u == v) continue;
      directed.emplace_back(u, v);
      directed.emplace_back(v, u);
    }
    std::sort(directed.begin(), directed.end());
    directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

    Graph g;
    g.n_nodes_ = n_nodes;
    g.offsets_.assign(static_cast<std::size_t>(n_nodes) + 1, 0);
    for (const auto& e : directed) ++g.offsets_[static_cast<std::size_t>(e.first) + 1];
    for (Index i = 0; i < n_nodes; ++i) g.offsets_[i + 1] += g.offsets_[i];
    g.targets_.reserve(directed.size());
    for (const auto& e : directed) g.targets_.push_back(e.second);
    g.features_ = std::move(features);
    if (labels) g.set_labels(std::move(*labels));
    return g;
  }

  Index n_nodes() const noexcept { return n_nodes_; }
  Index n_edges() const noexcept { return static_cast<Index>(targets_.size()) / 2; }
  Index feature_dim() const noexcept { return features_.cols(); }
  const Matrix& features() const noexcept { return features_; }

  std::span<const Index> neighbors(Index i) const {
    return {targets_.data() + offsets_[i], static_cast<std::size_t>(offsets_[i + 1] - offsets_[i])};
  }
  Index degree(Index i) const { return offsets_[i + 1] - offsets_[i]; }

  bool has_labels() const noexcept { return labels_.has_value(); }
  const std::vector<int>& labels() const {
    if (!labels_) throw ConfigError("graph has no labels");
    return *labels_;
  }
  int n_clusters() const {
    if (!n_clusters_) throw ConfigError("graph has no labels");
    return *n_clusters_;
  }

  /// Binary symmetric adjacency A as a sparse matrix.
  SparseMatrix adjacency() const {
    SparseMatrix a(n_nodes_, n_nodes_);
    std::vector<Eigen::Triplet<double, Index>> trips;
    trips.reserve(targets_.size());
    for (Index i = 0; i < n_nodes_; ++i)
      for (Index j : neighbors(i)) trips.emplace_back(i, j, 1.0);
    a.setFromTriplets(trips.begin(), trips.end());
    return a;
  }

  /// Same structure and labels, replaced features.
  Graph with_features(Matrix features) const {
    if (features.rows() != n_nodes_) throw DimensionError("feature rows != node count");
    Graph g = *this;
    g.features_ = std::move(features);
    return g;
  }

  /// Edge list with u < v, ascending.
  std::vector<Edge> edge_list() const {
    std::vector<Edge> out;
    out.reserve(static_cast<std::size_t>(n_edges()));
    for (Index i = 0; i < n_nodes_; ++i)
      for (Index j : neighbors(i))
        if (i < j) out.emplace_back(i, j);
    return out;
  }

 private:
  void set_labels(std::vector<int> labels) {
    if (static_cast<Index>(labels.size()) != n_nodes_)
      throw DimensionError("label count (" + std::to_string(labels.size()) + ") != node count (" +
                           std::to_string(n_nodes_) + ")");
    int max_label = -1;
    for (int l : labels) {
      if (l < 0) throw DimensionError("negative label " + std::to_string(l));
      max_label = std::max(max_label, l);
    }
    labels_ = std::move(labels);
    n_clusters_ = max_label + 1;
  }

  Index n_nodes_ = 0;
  std::vector<Index> offsets_{0};
  std::vector<Index> targets_;
  Matrix features_;
  std::optional<std::vector<int>> labels_;
  std::optional<int> n_clusters_;
};

// ---------------------------------------------------------------------------
// Normalization

struct NormalizedAdjacency {
  SparseMatrix matrix;
  bool with_self_loops = false;
};

/// D^{-1/2} A D^{-1/2} (flag off) or (D+I)^{-1/2} (A+I) (D+I)^{-1/2} (flag on).
/// Isolated nodes get an all-zero row when the flag is off.
inline NormalizedAdjacency normalized_adjacency(const Graph& g, bool with_self_loops) {
  const Index n = g.n_nodes();
  if (n == 0) throw ConfigError("normalized_adjacency: empty graph");
  const double loop = with_self_loops ? 1.0 : 0.0;
  Vector inv_sqrt(n);
  for (Index i = 0; i < n; ++i) {
    const double d = static_cast<double>(g.degree(i)) + loop;
    inv_sqrt[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  std::vector<Eigen::Triplet<double, Index>> trips;
  for (Index i = 0; i < n; ++i) {
    if (with_self_loops) trips.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
    for (Index j : g.neighbors(i)) trips.emplace_back(i, j, inv_sqrt[i] * inv_sqrt[j]);
  }
  NormalizedAdjacency out;
  out.with_self_loops = with_self_loops;
  out.matrix.resize(n, n);
  out.matrix.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// ---------------------------------------------------------------------------
// k-hop reachability

/// Per-node sorted lists of nodes within distance <= k (self included).
class KHopMask {
 public:
  KHopMask() = default;

  /// Takes ownership of per-node lists; each list is sorted and deduplicated.
  static KHopMask from_lists(int k, std::vector<std::vector<Index>> lists) {
    KHopMask m;
    m.k_ = k;
    m.offsets_.assign(lists.size() + 1, 0);
    for (std::size_t i = 0; i < lists.size(); ++i) {
      auto& l = lists[i];
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
      m.offsets_[i + 1] = m.offsets_[i] + static_cast<Index>(l.size());
    }
    m.indices_.reserve(static_cast<std::size_t>(m.offsets_.back()));
    for (const auto& l : lists) m.indices_.insert(m.indices_.end(), l.begin(), l.end());
    return m;
  }

  /// Every node reaches every node.
  static KHopMask complete(Index n) {
    std::vector<std::vector<Index>> lists(static_cast<std::size_t>(n));
    for (auto& l : lists) {
      l.resize(static_cast<std::size_t>(n));
      for (Index j = 0; j < n; ++j) l[static_cast<std::size_t>(j)] = j;
    }
    return from_lists(0, std::move(lists));
  }

  int k() const noexcept { return k_; }
  Index n_nodes() const noexcept { return static_cast<Index>(offsets_.size()) - 1; }
  Index total_nnz() const noexcept { return offsets_.back(); }
  Index offset(Index i) const { return offsets_[i]; }
  Index size(Index i) const { return offsets_[i + 1] - offsets_[i]; }
  std::span<const Index> neighbors(Index i) const {
    return {indices_.data() + offsets_[i], static_cast<std::size_t>(size(i))};
  }
  Index d_max() const {
    Index best = 0;
    for (Index i = 0; i < n_nodes(); ++i) best = std::max(best, size(i));
    return best;
  }
  bool contains(Index i, Index j) const {
    auto nb = neighbors(i);
    return std::binary_search(nb.begin(), nb.end(), j);
  }
  bool is_symmetric() const {
    for (Index i = 0; i < n_nodes(); ++i)
      for (Index j : neighbors(i))
        if (!contains(j, i)) return false;
    return true;
  }

  bool operator==(const KHopMask& o) const {
    return offsets_ == o.offsets_ && indices_ == o.indices_;
  }

 private:
  int k_ = 0;
  std::vector<Index> offsets_{0};
  std::vector<Index> indices_;
};

/// Depth-capped BFS from `source`; distances beyond `max_depth` stay -1.
/// `max_depth < 0` means unbounded.
inline std::vector<Index> bfs_distances(const Graph& g, Index source, Index max_depth = -1) {
  std::vector<Index> dist(static_cast<std::size_t>(g.n_nodes()), -1);
  std::vector<Index> frontier{source};
  dist[static_cast<std::size_t>(source)] = 0;
  for (Index depth = 0; !frontier.empty() && (max_depth < 0 || depth < max_depth); ++depth) {
    std::vector<Index> next;
    for (Index u : frontier)
      for (Index v : g.neighbors(u))
        if (dist[static_cast<std::size_t>(v)] < 0) {
          dist[static_cast<std::size_t>(v)] = depth + 1;
          next.push_back(v);
        }
    frontier = std::move(next);
  }
  return dist;
}

inline KHopMask khop_mask(const Graph& g, int k) {
  if (k < 1) throw ConfigError("khop_mask: k must be >= 1");
  const Index n = g.n_nodes();
  std::vector<std::vector<Index>> lists(static_cast<std::size_t>(n));
  parallel_for(n, [&](Index s) {
    std::vector<Index>& out = lists[static_cast<std::size_t>(s)];
    std::vector<Index> frontier{s};
    out.push_back(s);
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    seen[static_cast<std::size_t>(s)] = 1;
    auto mark = [&](Index v) {
      if (seen[static_cast<std::size_t>(v)]) return false;
      seen[static_cast<std::size_t>(v)] = 1;
      return true;
    };
    for (int depth = 0; depth < k && !frontier.empty(); ++depth) {
      std::vector<Index> next;
      for (Index u : frontier)
        for (Index v : g.neighbors(u))
          if (mark(v)) {
            next.push_back(v);
            out.push_back(v);
          }
      frontier = std::move(next);
    }
  }, 16);
  return KHopMask::from_lists(k, std::move(lists));
}

/// Restricts each list to at most `max_neighbors` entries: the node itself plus
/// a seeded uniform subsample of the rest. 0 means unlimited.
inline KHopMask cap_neighbors(const KHopMask& mask, Index max_neighbors, std::uint64_t seed) {
  if (max_neighbors <= 0) return mask;
  std::vector<std::vector<Index>> lists(static_cast<std::size_t>(mask.n_nodes()));
  for (Index i = 0; i < mask.n_nodes(); ++i) {
    auto nb = mask.neighbors(i);
    auto& out = lists[static_cast<std::size_t>(i)];
    if (static_cast<Index>(nb.size()) <= max_neighbors) {
      out.assign(nb.begin(), nb.end());
      continue;
    }
    std::vector<Index> others;
    for (Index j : nb)
      if (j != i) others.push_back(j);
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    out.push_back(i);
    std::sample(others.begin(), others.end(), std::back_inserter(out), max_neighbors - 1, rng);
  }
  return KHopMask::from_lists(mask.k(), std::move(lists));
}

/// Positive-pair weights: Ã^k (no self-loops) with the diagonal zeroed.
inline SparseMatrix khop_weights(const Graph& g, int k) {
  if (k < 1) throw ConfigError("khop_weights: k must be >= 1");
  const SparseMatrix base = normalized_adjacency(g, false).matrix;
  SparseMatrix power = base;
  for (int step = 1; step < k; ++step) {
    SparseMatrix next = (power * base).pruned();
    power = std::move(next);
  }
  for (Index i = 0; i < power.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(power, i); it; ++it)
      if (it.col() == i) it.valueRef() = 0.0;
  power.prune(0.0, 0.0);
  return power;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Node-level homophily: mean over non-isolated nodes of the fraction of
/// neighbors sharing the node's label.
inline double homophily_ratio(const Graph& g) {
  const auto& labels = g.labels();
  std::vector<double> per_node;
  for (Index i = 0; i < g.n_nodes(); ++i) {
    if (g.degree(i) == 0) continue;
    Index same = 0;
    for (Index j : g.neighbors(i))
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) ++same;
    per_node.push_back(static_cast<double>(same) / static_cast<double>(g.degree(i)));
  }
  if (per_node.empty()) return 0.0;
  return pairwise_sum(per_node) / static_cast<double>(per_node.size());
}

/// Same-label pair counts keyed by shortest-path distance.
struct PathHistogram {
  std::map<Index, std::int64_t> by_distance;
  std::int64_t unreachable = 0;

  bool operator==(const PathHistogram&) const = default;
};

inline PathHistogram shortest_path_histogram(const Graph& g) {
  const auto& labels = g.labels();
  const Index n = g.n_nodes();
  std::vector<PathHistogram> partial(static_cast<std::size_t>(n));
  parallel_for(n, [&](Index s) {
    const auto dist = bfs_distances(g, s);
    auto& h = partial[static_cast<std::size_t>(s)];
    for (Index t = s + 1; t < n; ++t) {
      if (labels[static_cast<std::size_t>(t)] != labels[static_cast<std::size_t>(s)]) continue;
      const Index d = dist[static_cast<std::size_t>(t)];
      if (d < 0)
        ++h.unreachable;
      else
        ++h.by_distance[d];
    }
  }, 8);
  PathHistogram out;
  for (const auto& h : partial) {
    out.unreachable += h.unreachable;
    for (const auto& [d, c] : h.by_distance) out.by_distance[d] += c;
  }
  return out;
}

}  // namespace agcn
