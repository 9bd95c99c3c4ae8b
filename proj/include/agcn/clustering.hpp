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
#include <limits>
#include <random>

namespace agcn {

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
  double tolerance = 1e-6;  // relative inertia decrease
};

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // after each assignment step, best run
  int restart = 0;
};

namespace detail {

inline double squared_distance(const Matrix& a, Index i, const Matrix& b, Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

inline Matrix kmeans_plus_plus(const Matrix& x, int c, std::mt19937_64& rng) {
  const Index n = x.rows();
  Matrix centers(c, x.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centers.row(0) = x.row(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = squared_distance(x, i, centers, 0);
  for (int m = 1; m < c; ++m) {
    const double total = pairwise_sum(d2);
    Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        target -= d2[static_cast<std::size_t>(i)];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    }
    centers.row(m) = x.row(pick);
    for (Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], squared_distance(x, i, centers, m));
  }
  return centers;
}

inline KMeansResult lloyd(const Matrix& x, int c, std::uint64_t seed, const KMeansOptions& opt) {
  const Index n = x.rows();
  std::mt19937_64 rng(seed);
  KMeansResult r;
  r.centers = kmeans_plus_plus(x, c, rng);
  r.labels.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> dist(static_cast<std::size_t>(n));
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iterations; ++it) {
    for (Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int m = 0; m < c; ++m) {
        const double d = squared_distance(x, i, r.centers, m);
        if (d < best) best = d, arg = m;
      }
      r.labels[static_cast<std::size_t>(i)] = arg;
      dist[static_cast<std::size_t>(i)] = best;
    }
    const double inertia = pairwise_sum(dist);
    r.inertia_trace.push_back(inertia);
    r.inertia = inertia;

    Matrix sums = Matrix::Zero(c, x.cols());
    std::vector<Index> counts(static_cast<std::size_t>(c), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(r.labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(r.labels[static_cast<std::size_t>(i)])];
    }
    // An empty cluster takes the point farthest from its current center.
    for (int m = 0; m < c; ++m) {
      if (counts[static_cast<std::size_t>(m)] != 0) continue;
      Index far = 0;
      for (Index i = 1; i < n; ++i)
        if (dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      const int old = r.labels[static_cast<std::size_t>(far)];
      if (counts[static_cast<std::size_t>(old)] <= 1) continue;
      sums.row(old) -= x.row(far);
      --counts[static_cast<std::size_t>(old)];
      sums.row(m) = x.row(far);
      counts[static_cast<std::size_t>(m)] = 1;
      r.labels[static_cast<std::size_t>(far)] = m;
      dist[static_cast<std::size_t>(far)] = 0.0;
    }
    for (int m = 0; m < c; ++m)
      if (counts[static_cast<std::size_t>(m)] > 0)
        r.centers.row(m) = sums.row(m) / static_cast<double>(counts[static_cast<std::size_t>(m)]);

    if (previous - inertia <= opt.tolerance * std::max(inertia, 1e-300)) break;
    previous = inertia;
  }
  // Final assignment against the last centers so labels and inertia agree.
  for (Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int m = 0; m < c; ++m) {
      const double d = squared_distance(x, i, r.centers, m);
      if (d < best) best = d, arg = m;
    }
    r.labels[static_cast<std::size_t>(i)] = arg;
    dist[static_cast<std::size_t>(i)] = best;
  }
  r.inertia = pairwise_sum(dist);
  return r;
}

}  // namespace detail

/// k-means++ seeded Lloyd iterations; best inertia over `opt.restarts` runs.
inline KMeansResult kmeans(const Matrix& x, int c, std::uint64_t seed, KMeansOptions opt = {}) {
  if (c < 1) throw ConfigError("kmeans: C must be >= 1");
  if (c > x.rows())
    throw ConfigError("kmeans: C (" + std::to_string(c) + ") > N (" + std::to_string(x.rows()) + ")");
  if (opt.restarts < 1) throw ConfigError("kmeans: restarts must be >= 1");
  std::vector<KMeansResult> runs(static_cast<std::size_t>(opt.restarts));
  parallel_for(opt.restarts, [&](Index r) {
    runs[static_cast<std::size_t>(r)] =
        detail::lloyd(x, c, derive_seed(seed, {0x4B4D, static_cast<std::uint64_t>(r)}), opt);
    runs[static_cast<std::size_t>(r)].restart = static_cast<int>(r);
  }, 1);
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  return std::move(runs[best]);
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method,
/// O(n^3)). Returns assignment[row] = column.
inline std::vector<int> hungarian_min_cost(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw DimensionError("hungarian: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), way_min(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(way_min.begin(), way_min.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < way_min[j]) way_min[j] = cur, way[j] = j0;
        if (way_min[j] < delta) delta = way_min[j], j1 = j;
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          way_min[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j)
    if (match[j] != 0) assignment[match[j] - 1] = j - 1;
  return assignment;
}

/// Best one-to-one mapping from predicted to true labels: mapping[pred] = truth.
/// Predicted labels with no counterpart map to -1.
inline std::vector<int> match_labels(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size())
    throw DimensionError("label vectors differ in length (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()) + ")");
  int np = 0, nt = 0;
  for (int p : pred) np = std::max(np, p + 1);
  for (int t : truth) nt = std::max(nt, t + 1);
  const int m = std::max(np, nt);
  Matrix count = Matrix::Zero(m, m);
  for (std::size_t i = 0; i < pred.size(); ++i) count(pred[i], truth[i]) += 1.0;
  const std::vector<int> a = hungarian_min_cost(-count);
  std::vector<int> mapping(static_cast<std::size_t>(np), -1);
  for (int p = 0; p < np; ++p) mapping[static_cast<std::size_t>(p)] = a[static_cast<std::size_t>(p)];
  return mapping;
}

/// Fraction of nodes matched under the best label bijection.
inline double accuracy(std::span<const int> pred, std::span<const int> truth) {
  const auto mapping = match_labels(pred, truth);
  if (pred.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mapping[static_cast<std::size_t>(pred[i])] == truth[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

/// Normalized mutual information, MI / mean(H(pred), H(truth)), natural log.
inline double nmi(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size())
    throw DimensionError("label vectors differ in length (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()) + ")");
  const std::size_t n = pred.size();
  if (n == 0) return 0.0;
  int np = 0, nt = 0;
  for (int p : pred) np = std::max(np, p + 1);
  for (int t : truth) nt = std::max(nt, t + 1);
  Matrix table = Matrix::Zero(np, nt);
  for (std::size_t i = 0; i < n; ++i) table(pred[i], truth[i]) += 1.0;
  const Vector rows = table.rowwise().sum();
  const Vector cols = table.colwise().sum().transpose();

  // Same partition up to relabeling: each nonempty row and column holds one cell.
  bool bijective = true;
  for (Index r = 0; r < np && bijective; ++r)
    if (rows[r] > 0 && (table.row(r).array() > 0).count() != 1) bijective = false;
  for (Index c = 0; c < nt && bijective; ++c)
    if (cols[c] > 0 && (table.col(c).array() > 0).count() != 1) bijective = false;
  if (bijective) return 1.0;

  const double total = static_cast<double>(n);
  auto entropy = [&](const Vector& marg) {
    double h = 0.0;
    for (Index i = 0; i < marg.size(); ++i)
      if (marg[i] > 0) h -= (marg[i] / total) * std::log(marg[i] / total);
    return h;
  };
  const double hp = entropy(rows), ht = entropy(cols);
  double mi = 0.0;
  for (Index r = 0; r < np; ++r)
    for (Index c = 0; c < nt; ++c) {
      const double nij = table(r, c);
      if (nij > 0) mi += (nij / total) * std::log(nij * total / (rows[r] * cols[c]));
    }
  const double denom = 0.5 * (hp + ht);
  if (denom <= 0.0) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

struct SeedRecord {
  std::uint64_t seed = 0;
  double inertia = 0.0;
  double acc = 0.0;
  double nmi = 0.0;
};

struct ClusterResult {
  std::vector<int> labels;
  double acc = 0.0;
  double nmi = 0.0;
  std::vector<SeedRecord> seed_records;
  std::uint64_t chosen_seed = 0;
};

/// Clusters H once per seed; the reported labels and metrics come from the
/// lowest-inertia seed (selection never looks at the ground truth).
inline ClusterResult evaluate(const Matrix& h, int c, std::span<const int> truth,
                              std::span<const std::uint64_t> seeds, KMeansOptions opt = {}) {
  if (seeds.empty()) throw ConfigError("evaluate: need at least one seed");
  if (static_cast<Index>(truth.size()) != h.rows()) throw DimensionError("truth length != N");
  ClusterResult out;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (auto seed : seeds) {
    KMeansResult km = kmeans(h, c, seed, opt);
    SeedRecord rec{seed, km.inertia, accuracy(km.labels, truth), nmi(km.labels, truth)};
    out.seed_records.push_back(rec);
    if (km.inertia < best_inertia) {
      best_inertia = km.inertia;
      out.labels = std::move(km.labels);
      out.acc = rec.acc;
      out.nmi = rec.nmi;
      out.chosen_seed = seed;
    }
  }
  return out;
}

}  // namespace agcn
