#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "common.hpp"

namespace mmphate {

using Series = std::vector<Real>;

namespace detail {

inline bool in_band(Index i, Index j, std::optional<Index> band) {
  return !band || std::abs(i - j) <= *band;
}

/// Accumulated-cost table with steps right, down and diagonal, cost |x_i - y_j|.
inline Matrix dtw_table(std::span<const Real> x, std::span<const Real> y, std::optional<Index> band) {
  const auto n = static_cast<Index>(x.size());
  const auto m = static_cast<Index>(y.size());
  if (n == 0 || m == 0) fail(ErrorKind::validation, "DTW needs nonempty sequences");
  if (band) require(*band >= std::abs(n - m), "DTW band must be at least the length difference");
  constexpr Real inf = std::numeric_limits<Real>::infinity();
  Matrix acc = Matrix::Constant(n, m, inf);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      if (!in_band(i, j, band)) continue;
      const Real c = std::abs(x[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(j)]);
      if (i == 0 && j == 0) {
        acc(i, j) = c;
        continue;
      }
      Real prev = inf;
      if (i > 0) prev = std::min(prev, acc(i - 1, j));
      if (j > 0) prev = std::min(prev, acc(i, j - 1));
      if (i > 0 && j > 0) prev = std::min(prev, acc(i - 1, j - 1));
      acc(i, j) = c + prev;
    }
  return acc;
}

}  // namespace detail

/// Unconstrained dynamic time warping cost (optional Sakoe-Chiba band |i - j| <= band).
inline Real dtw(std::span<const Real> x, std::span<const Real> y, std::optional<Index> band = std::nullopt) {
  const Matrix acc = detail::dtw_table(x, y, band);
  return acc(acc.rows() - 1, acc.cols() - 1);
}

/// Optimal warping path as (i, j) pairs from (0, 0) to the end. Backtracking prefers the
/// diagonal, then the step that advances x, on ties.
inline std::vector<std::pair<Index, Index>> dtw_path(std::span<const Real> x, std::span<const Real> y,
                                                     std::optional<Index> band = std::nullopt) {
  const Matrix acc = detail::dtw_table(x, y, band);
  Index i = acc.rows() - 1, j = acc.cols() - 1;
  std::vector<std::pair<Index, Index>> path{{i, j}};
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const Real diag = acc(i - 1, j - 1), up = acc(i - 1, j), left = acc(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    path.emplace_back(i, j);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

/// DTW barycenter averaging: each sweep aligns every member to the current center and
/// replaces each center point by the mean of the member values warped onto it.
inline Series dba_update(const Series& center, const std::vector<const Series*>& members, Index sweeps,
                         std::optional<Index> band = std::nullopt) {
  Series c = center;
  if (members.empty()) return c;
  for (Index s = 0; s < sweeps; ++s) {
    std::vector<Real> sum(c.size(), 0.0);
    std::vector<Index> count(c.size(), 0);
    for (const Series* x : members)
      for (auto [i, j] : dtw_path(c, *x, band)) {
        sum[static_cast<std::size_t>(i)] += (*x)[static_cast<std::size_t>(j)];
        ++count[static_cast<std::size_t>(i)];
      }
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = sum[i] / static_cast<Real>(count[i]);
  }
  return c;
}

struct DtwKMeansConfig {
  Index k = 2;
  std::uint64_t seed = 0;
  Index max_iter = 50;
  Index dba_iter = 10;
  std::optional<Index> band;
};

struct ClusterResult {
  std::vector<Index> assignments;
  std::vector<Series> barycenters;
  /// Sum of squared DTW costs to the assigned barycenters.
  Real inertia = 0.0;
  std::uint64_t seed = 0;
  Index iterations = 0;
  std::vector<Real> inertia_trace;
};

namespace detail {

struct Assignment {
  std::vector<Index> labels;
  std::vector<Real> cost;
  Real inertia = 0.0;
};

inline Assignment assign_to(const std::vector<Series>& curves, const std::vector<Series>& centers,
                            std::optional<Index> band) {
  const auto n = static_cast<Index>(curves.size());
  const auto k = static_cast<Index>(centers.size());
  Assignment a;
  a.labels.assign(static_cast<std::size_t>(n), 0);
  a.cost.assign(static_cast<std::size_t>(n), 0.0);
  parallel::for_each_index(0, n, [&](Index i) {
    Real best = std::numeric_limits<Real>::infinity();
    Index arg = 0;
    for (Index c = 0; c < k; ++c) {
      const Real d = dtw(curves[static_cast<std::size_t>(i)], centers[static_cast<std::size_t>(c)], band);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    a.labels[static_cast<std::size_t>(i)] = arg;
    a.cost[static_cast<std::size_t>(i)] = best;
  });
  return a;
}

/// Fills empty clusters from the point farthest from its center among clusters that can
/// spare a member, then recomputes the inertia.
inline void fill_empty(const std::vector<Series>& curves, std::vector<Series>& centers, Assignment& a) {
  const auto k = static_cast<Index>(centers.size());
  for (Index c = 0; c < k; ++c) {
    std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
    for (Index l : a.labels) ++sizes[static_cast<std::size_t>(l)];
    if (sizes[static_cast<std::size_t>(c)] > 0) continue;
    Index far = -1;
    for (std::size_t i = 0; i < curves.size(); ++i) {
      if (sizes[static_cast<std::size_t>(a.labels[i])] < 2) continue;
      if (far < 0 || a.cost[i] > a.cost[static_cast<std::size_t>(far)]) far = static_cast<Index>(i);
    }
    if (far < 0) fail(ErrorKind::numerical, "cannot re-seed an empty cluster");
    centers[static_cast<std::size_t>(c)] = curves[static_cast<std::size_t>(far)];
    a.labels[static_cast<std::size_t>(far)] = c;
    a.cost[static_cast<std::size_t>(far)] = 0.0;
  }
  a.inertia = 0.0;
  for (Real v : a.cost) a.inertia += v * v;
}

}  // namespace detail

/// k-means under DTW with a seeded k-means++ start and DBA center updates. An iteration
/// whose inertia would rise is rejected and ends the run.
inline ClusterResult dtw_kmeans(const std::vector<Series>& curves, const DtwKMeansConfig& cfg) {
  const auto n = static_cast<Index>(curves.size());
  require(n >= 1, "clustering needs at least one curve");
  require(cfg.k >= 1 && cfg.k <= n, "cluster count must lie in [1, number of curves]");
  require(cfg.max_iter >= 1 && cfg.dba_iter >= 1, "max_iter and dba_iter must be >= 1");
  for (const auto& c : curves) {
    require(!c.empty(), "curves must be nonempty");
    require(c.size() == curves.front().size(), "curves must have equal length");
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<Real> unif(0.0, 1.0);
  std::vector<Series> centers;
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  std::vector<Real> nearest(static_cast<std::size_t>(n), std::numeric_limits<Real>::infinity());
  Index pick = static_cast<Index>(unif(rng) * static_cast<Real>(n)) % n;
  while (true) {
    centers.push_back(curves[static_cast<std::size_t>(pick)]);
    chosen[static_cast<std::size_t>(pick)] = true;
    if (static_cast<Index>(centers.size()) == cfg.k) break;
    Real total = 0.0;
    for (Index i = 0; i < n; ++i) {
      const Real d = dtw(curves[static_cast<std::size_t>(i)], centers.back(), cfg.band);
      auto& slot = nearest[static_cast<std::size_t>(i)];
      slot = std::min(slot, d * d);
      total += slot;
    }
    const Real target = unif(rng) * total;
    pick = -1;
    Real run = 0.0;
    for (Index i = 0; i < n && total > 0.0; ++i) {
      run += nearest[static_cast<std::size_t>(i)];
      if (nearest[static_cast<std::size_t>(i)] > 0.0 && run >= target) {
        pick = i;
        break;
      }
    }
    if (pick < 0)
      for (Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
  }

  detail::Assignment current = detail::assign_to(curves, centers, cfg.band);
  detail::fill_empty(curves, centers, current);

  ClusterResult res;
  res.seed = cfg.seed;
  res.inertia_trace.push_back(current.inertia);
  for (Index it = 0; it < cfg.max_iter; ++it) {
    std::vector<Series> next = centers;
    for (Index c = 0; c < cfg.k; ++c) {
      std::vector<const Series*> members;
      for (Index i = 0; i < n; ++i)
        if (current.labels[static_cast<std::size_t>(i)] == c) members.push_back(&curves[static_cast<std::size_t>(i)]);
      next[static_cast<std::size_t>(c)] = dba_update(centers[static_cast<std::size_t>(c)], members, cfg.dba_iter, cfg.band);
    }
    detail::Assignment cand = detail::assign_to(curves, next, cfg.band);
    detail::fill_empty(curves, next, cand);
    if (cand.inertia > current.inertia) break;
    const bool stable = cand.labels == current.labels;
    centers = std::move(next);
    current = std::move(cand);
    res.inertia_trace.push_back(current.inertia);
    res.iterations = it + 1;
    if (stable) break;
  }
  res.assignments = current.labels;
  res.barycenters = centers;
  res.inertia = current.inertia;
  return res;
}

}  // namespace mmphate
