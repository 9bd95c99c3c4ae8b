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

#include "agcn/clustering.hpp"
#include "agcn/common.hpp"
#include "agcn/graph.hpp"

#include <Eigen/Eigenvalues>

#include <bit>
#include <cmath>
#include <optional>
#include <random>

namespace agcn {

/// First two principal-component coordinates of the rows of x. Component signs
/// are fixed so the largest-magnitude loading is positive.
inline Matrix pca_2d(const Matrix& x) {
  const Index n = x.rows();
  Matrix coords = Matrix::Zero(n, 2);
  if (n == 0 || x.cols() == 0) return coords;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / std::max<double>(1.0, n - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Index d = cov.rows();
  for (Index c = 0; c < std::min<Index>(2, d); ++c) {
    Eigen::VectorXd axis = eig.eigenvectors().col(d - 1 - c);
    Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0) axis = -axis;
    coords.col(c) = centered * axis;
  }
  return coords;
}

struct GroupingReport {
  int k = 0;
  Matrix filtered;               // Â^k X
  std::vector<int> predicted;    // k-means labels on the filtered features
  std::vector<char> misclustered;  // 1 where the matched label is wrong
  Matrix coords;                 // N x 2 PCA coordinates
  double acc = 0.0;
  double nmi = 0.0;
  Index n_errors = 0;
};

/// Â^k X by k sparse products.
inline Matrix propagate_features(const Graph& g, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  const SparseMatrix a_hat = normalized_adjacency(g, true).matrix;
  Matrix out = g.features();
  for (int step = 0; step < k; ++step) {
    Matrix next = a_hat * out;
    out = std::move(next);
  }
  return out;
}

/// Clusters low-pass filtered features and flags the nodes that land in the
/// wrong cluster under the best label matching.
inline GroupingReport grouping_probe(const Graph& g, int k, int c, std::uint64_t seed,
                                     KMeansOptions opt = {}) {
  const auto& truth = g.labels();
  GroupingReport r;
  r.k = k;
  r.filtered = propagate_features(g, k);
  r.predicted = kmeans(r.filtered, c, seed, opt).labels;
  const auto mapping = match_labels(r.predicted, truth);
  r.misclustered.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool wrong = mapping[static_cast<std::size_t>(r.predicted[i])] != truth[i];
    r.misclustered[i] = wrong ? 1 : 0;
    r.n_errors += wrong ? 1 : 0;
  }
  r.acc = accuracy(r.predicted, truth);
  r.nmi = nmi(r.predicted, truth);
  r.coords = pca_2d(r.filtered);
  return r;
}

/// Rows of the binarized reachability matrix as bitsets.
class ReachabilityBits {
 public:
  explicit ReachabilityBits(const KHopMask& mask)
      : n_(mask.n_nodes()), words_((n_ + 63) / 64),
        bits_(static_cast<std::size_t>(n_ * words_), 0) {
    for (Index i = 0; i < n_; ++i)
      for (Index j : mask.neighbors(i))
        bits_[static_cast<std::size_t>(i * words_ + j / 64)] |= std::uint64_t{1} << (j % 64);
  }

  /// Euclidean distance between binary rows i and j.
  double distance(Index i, Index j) const {
    std::int64_t diff = 0;
    const std::uint64_t* a = bits_.data() + i * words_;
    const std::uint64_t* b = bits_.data() + j * words_;
    for (Index w = 0; w < words_; ++w) diff += std::popcount(a[w] ^ b[w]);
    return std::sqrt(static_cast<double>(diff));
  }

 private:
  Index n_;
  Index words_;
  std::vector<std::uint64_t> bits_;
};

struct RRatioEntry {
  int cluster = 0;
  int k = 0;
  Index misclustered = 0;
  std::optional<double> pair_mean;  // empty when undefined
  std::optional<double> literal;
  std::string notice;
};

struct RRatioReport {
  int k_min = 0;
  int k_max = 0;
  std::vector<std::vector<Index>> misclustered_sets;  // per true cluster
  std::vector<RRatioEntry> entries;                   // cluster-major, then k
};

/// Nodes wrong under the best label matching, grouped by true cluster.
inline std::vector<std::vector<Index>> misclustered_by_cluster(std::span<const int> pred,
                                                               std::span<const int> truth) {
  const auto mapping = match_labels(pred, truth);
  int nt = 0;
  for (int t : truth) nt = std::max(nt, t + 1);
  std::vector<std::vector<Index>> sets(static_cast<std::size_t>(nt));
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (mapping[static_cast<std::size_t>(pred[i])] != truth[i])
      sets[static_cast<std::size_t>(truth[i])].push_back(static_cast<Index>(i));
  return sets;
}

/// Ratio of the mean binarized-reachability distance among each cluster's
/// misclustered nodes to the mean over all node pairs, for k in
/// [k_min, k_max]. Sums run over ordered pairs (self pairs contribute 0).
/// Pair-mean mode divides by |c|^2 and N^2; literal mode by |c| and N.
inline RRatioReport r_ratio(const Graph& g, std::span<const int> pred, std::span<const int> truth,
                            int k_min, int k_max) {
  if (k_min < 1 || k_max < k_min) throw ConfigError("r_ratio: need 1 <= k_min <= k_max");
  if (static_cast<Index>(pred.size()) != g.n_nodes() || pred.size() != truth.size())
    throw DimensionError("r_ratio: label vectors must have N entries");
  RRatioReport rep;
  rep.k_min = k_min;
  rep.k_max = k_max;
  rep.misclustered_sets = misclustered_by_cluster(pred, truth);
  const Index n = g.n_nodes();
  const int clusters = static_cast<int>(rep.misclustered_sets.size());
  std::vector<std::vector<RRatioEntry>> by_k(static_cast<std::size_t>(k_max - k_min + 1));

  parallel_for(k_max - k_min + 1, [&](Index slot) {
    const int k = k_min + static_cast<int>(slot);
    const ReachabilityBits bits(khop_mask(g, k));
    std::vector<double> row_sums(static_cast<std::size_t>(n), 0.0);
    for (Index i = 0; i < n; ++i) {
      double s = 0.0;
      for (Index j = 0; j < n; ++j) s += bits.distance(i, j);
      row_sums[static_cast<std::size_t>(i)] = s;
    }
    const double all_sum = pairwise_sum(row_sums);
    const double nn = static_cast<double>(n);
    for (int t = 0; t < clusters; ++t) {
      const auto& set = rep.misclustered_sets[static_cast<std::size_t>(t)];
      RRatioEntry e;
      e.cluster = t;
      e.k = k;
      e.misclustered = static_cast<Index>(set.size());
      if (set.empty()) {
        e.notice = "no misclustered nodes";
      } else if (all_sum == 0.0) {
        e.notice = "all reachability rows identical (0/0)";
      } else {
        double s = 0.0;
        for (Index i : set)
          for (Index u : set) s += bits.distance(i, u);
        const double c = static_cast<double>(set.size());
        e.literal = (s / c) / (all_sum / nn);
        e.pair_mean = (s / (c * c)) / (all_sum / (nn * nn));
      }
      by_k[static_cast<std::size_t>(slot)].push_back(std::move(e));
    }
  }, 1);

  for (int t = 0; t < clusters; ++t)
    for (auto& row : by_k) rep.entries.push_back(row[static_cast<std::size_t>(t)]);
  return rep;
}

/// Zeroes the feature rows of round(fraction * N) nodes chosen uniformly.
inline Graph mask_features(const Graph& g, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("mask fraction must be in [0, 1)");
  const Index n = g.n_nodes();
  const auto count = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  std::vector<Index> nodes(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) nodes[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(derive_seed(seed, {0x3A5C}));
  std::shuffle(nodes.begin(), nodes.end(), rng);
  Matrix x = g.features();
  for (Index s = 0; s < count; ++s) x.row(nodes[static_cast<std::size_t>(s)]).setZero();
  return g.with_features(std::move(x));
}

/// Indices whose feature row is entirely zero.
inline std::vector<Index> zero_feature_rows(const Graph& g) {
  std::vector<Index> out;
  for (Index i = 0; i < g.n_nodes(); ++i)
    if (g.features().row(i).isZero(0.0)) out.push_back(i);
  return out;
}

}  // namespace agcn
