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

#include <numeric>
#include <random>

namespace agcn {

/// Stochastic block model with Gaussian node features. Block b draws a mean
/// vector from N(0, mean_scale^2 I); node features are mean + N(0, noise^2 I).
struct SBMSpec {
  std::vector<Index> block_sizes{20, 20};
  double p_in = 0.3;
  double p_out = 0.02;
  Index feature_dim = 8;
  double mean_scale = 1.0;
  double noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (block_sizes.empty()) throw ConfigError("SBM needs at least one block");
    for (Index s : block_sizes)
      if (s < 1) throw ConfigError("SBM block sizes must be positive");
    if (!(p_in >= 0.0 && p_in <= 1.0) || !(p_out >= 0.0 && p_out <= 1.0))
      throw ConfigError("SBM probabilities must lie in [0, 1]");
    if (feature_dim < 1) throw ConfigError("SBM feature_dim must be >= 1");
    if (!(noise >= 0.0) || !(mean_scale >= 0.0)) throw ConfigError("SBM scales must be >= 0");
  }
};

inline Graph gen_sbm(const SBMSpec& spec) {
  spec.validate();
  const Index n = std::accumulate(spec.block_sizes.begin(), spec.block_sizes.end(), Index{0});
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(n));
  for (std::size_t b = 0; b < spec.block_sizes.size(); ++b)
    labels.insert(labels.end(), static_cast<std::size_t>(spec.block_sizes[b]), static_cast<int>(b));

  std::mt19937_64 edge_rng(derive_seed(spec.seed, {0xED6E}));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double p = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]
                           ? spec.p_in
                           : spec.p_out;
      if (coin(edge_rng) < p) edges.emplace_back(i, j);
    }

  std::mt19937_64 feat_rng(derive_seed(spec.seed, {0xFEA7}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto blocks = static_cast<Index>(spec.block_sizes.size());
  Matrix means(blocks, spec.feature_dim);
  for (Index b = 0; b < blocks; ++b)
    for (Index d = 0; d < spec.feature_dim; ++d) means(b, d) = spec.mean_scale * gauss(feat_rng);
  Matrix x(n, spec.feature_dim);
  for (Index i = 0; i < n; ++i)
    for (Index d = 0; d < spec.feature_dim; ++d)
      x(i, d) = means(labels[static_cast<std::size_t>(i)], d) + spec.noise * gauss(feat_rng);
  return Graph::from_edges(n, edges, std::move(x), std::move(labels));
}

/// Complete binary tree for the tree neighbors-match task.
///
/// Nodes are heap ordered (root 0, children of i are 2i+1 and 2i+2); the
/// 2^r leaves are the last 2^r indices. Each leaf gets a distinct key from a
/// seeded permutation of 1..2^r and class = its position among the leaves.
/// The root carries one leaf's key and takes that leaf's class as its label.
///
/// Feature columns: [is_root, key / 2^r, one-hot class (2^r columns)]. Root
/// and internal nodes have an all-zero class block; internal nodes have key 0.
/// Labels: leaves and root use their class, internal nodes use 2^r.
struct TreeMatchSpec {
  int depth = 2;
  std::uint64_t seed = 0;
};

struct TreeMatchLayout {
  Index n_nodes = 0;
  Index first_leaf = 0;
  Index n_leaves = 0;
};

inline TreeMatchLayout tree_match_layout(int depth) {
  if (depth < 1) throw ConfigError("tree depth must be >= 1");
  if (depth > 24) throw ConfigError("tree depth too large");
  TreeMatchLayout t;
  t.n_leaves = Index{1} << depth;
  t.n_nodes = 2 * t.n_leaves - 1;
  t.first_leaf = t.n_leaves - 1;
  return t;
}

inline Graph gen_tree_match(const TreeMatchSpec& spec) {
  const TreeMatchLayout t = tree_match_layout(spec.depth);
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(t.n_nodes - 1));
  for (Index c = 1; c < t.n_nodes; ++c) edges.emplace_back((c - 1) / 2, c);

  std::mt19937_64 rng(derive_seed(spec.seed, {0x7EE}));
  std::vector<Index> keys(static_cast<std::size_t>(t.n_leaves));
  std::iota(keys.begin(), keys.end(), Index{1});
  std::shuffle(keys.begin(), keys.end(), rng);
  const Index target = std::uniform_int_distribution<Index>(0, t.n_leaves - 1)(rng);

  const Index cols = 2 + t.n_leaves;
  Matrix x = Matrix::Zero(t.n_nodes, cols);
  std::vector<int> labels(static_cast<std::size_t>(t.n_nodes), static_cast<int>(t.n_leaves));
  const double scale = 1.0 / static_cast<double>(t.n_leaves);
  for (Index leaf = 0; leaf < t.n_leaves; ++leaf) {
    const Index node = t.first_leaf + leaf;
    x(node, 1) = static_cast<double>(keys[static_cast<std::size_t>(leaf)]) * scale;
    x(node, 2 + leaf) = 1.0;
    labels[static_cast<std::size_t>(node)] = static_cast<int>(leaf);
  }
  x(0, 0) = 1.0;
  x(0, 1) = static_cast<double>(keys[static_cast<std::size_t>(target)]) * scale;
  labels[0] = static_cast<int>(target);
  return Graph::from_edges(t.n_nodes, edges, std::move(x), std::move(labels));
}

}  // namespace agcn
