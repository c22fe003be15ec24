#pragma once

#include <limits>
#include <map>
#include <random>
#include <vector>

#include "common.hpp"
#include "kernel.hpp"
#include "spectral.hpp"

namespace mmphate {

struct KMeansResult {
  std::vector<Index> assignment;
  RowMatrix centers;
  Index iterations = 0;
};

namespace detail {

/// Squared distances from every row of `x` to every row of `c` via the Gram expansion.
inline Matrix squared_distances(const RowMatrix& x, const Vector& x_norm, const RowMatrix& c) {
  Matrix d = -2.0 * (x * c.transpose());
  const Vector c_norm = c.rowwise().squaredNorm();
  d.colwise() += x_norm;
  d.rowwise() += c_norm.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace detail

/// Lloyd iterations from a seeded k-means++ start. An emptied cluster is re-seeded with the
/// point farthest from its current center (lowest index on ties).
inline KMeansResult kmeans(const RowMatrix& x, Index k, std::uint64_t seed, Index max_iter = 100) {
  const Index N = x.rows();
  require(k >= 1 && k <= N, "cluster count must lie in [1, N]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> unif(0.0, 1.0);
  const Vector x_norm = x.rowwise().squaredNorm();

  RowMatrix centers(k, x.cols());
  std::vector<Real> nearest(static_cast<std::size_t>(N), std::numeric_limits<Real>::infinity());
  Index pick = static_cast<Index>(unif(rng) * static_cast<Real>(N)) % N;
  for (Index c = 0; c < k; ++c) {
    centers.row(c) = x.row(pick);
    const Vector d = (x.rowwise() - centers.row(c)).rowwise().squaredNorm();
    Real total = 0.0;
    for (Index i = 0; i < N; ++i) {
      auto& slot = nearest[static_cast<std::size_t>(i)];
      slot = std::min(slot, d(i));
      total += slot;
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      // every point already coincides with a center; take the next unused index
      pick = (pick + 1) % N;
      continue;
    }
    const Real target = unif(rng) * total;
    Real run = 0.0;
    pick = N - 1;
    for (Index i = 0; i < N; ++i) {
      run += nearest[static_cast<std::size_t>(i)];
      if (run >= target && nearest[static_cast<std::size_t>(i)] > 0.0) {
        pick = i;
        break;
      }
    }
  }

  KMeansResult res;
  res.assignment.assign(static_cast<std::size_t>(N), -1);
  for (Index it = 0; it < max_iter; ++it) {
    const Matrix d = detail::squared_distances(x, x_norm, centers);
    bool changed = false;
    std::vector<Real> own(static_cast<std::size_t>(N));
    for (Index i = 0; i < N; ++i) {
      Index best = 0;
      d.row(i).minCoeff(&best);
      own[static_cast<std::size_t>(i)] = d(i, best);
      if (res.assignment[static_cast<std::size_t>(i)] != best) {
        res.assignment[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed && it > 0) break;

    RowMatrix sums = RowMatrix::Zero(k, x.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < N; ++i) {
      const Index c = res.assignment[static_cast<std::size_t>(i)];
      sums.row(c) += x.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<Real>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      const auto far = std::max_element(own.begin(), own.end()) - own.begin();
      centers.row(c) = x.row(far);
      own[static_cast<std::size_t>(far)] = -1.0;
      const Index old = res.assignment[static_cast<std::size_t>(far)];
      --counts[static_cast<std::size_t>(old)];
      res.assignment[static_cast<std::size_t>(far)] = c;
      ++counts[static_cast<std::size_t>(c)];
    }
  }
  res.centers = std::move(centers);
  return res;
}

/// Coarse-grained diffusion over landmark clusters plus the point-to-landmark transition.
struct LandmarkOperator {
  DiffusionOperator landmark;
  /// N x L row-stochastic map from points to landmarks.
  SparseMatrix transitions;
  /// Landmark id of each point.
  std::vector<Index> assignment;
  Index count() const noexcept { return landmark.size(); }
};

namespace detail {

inline SparseMatrix identity_sparse(Index n) {
  SparseMatrix id(n, n);
  id.setIdentity();
  return id;
}

}  // namespace detail

/// Landmarks are k-means clusters of the leading spectral coordinates of the symmetric
/// conjugate. L == N returns the operator unchanged with an identity point map.
inline LandmarkOperator landmark_compress(const DiffusionOperator& op, Index n_landmarks, std::uint64_t seed) {
  const Index N = op.size();
  require(n_landmarks >= 1 && n_landmarks <= N, "landmark count must lie in [1, N]");
  LandmarkOperator out;
  if (n_landmarks == N) {
    out.landmark = op;
    out.transitions = detail::identity_sparse(N);
    out.assignment.resize(static_cast<std::size_t>(N));
    std::iota(out.assignment.begin(), out.assignment.end(), Index{0});
    return out;
  }

  const Index q = std::min<Index>(100, N);
  const EigenPairs eig = leading_eigenpairs(symmetric_conjugate(op), q, seed);
  const RowMatrix features = eig.vectors * eig.values.asDiagonal();
  out.assignment = kmeans(features, n_landmarks, seed).assignment;

  const Index L = n_landmarks;
  const auto* outer = op.affinity.outerIndexPtr();
  const auto* inner = op.affinity.innerIndexPtr();
  const Real* val = op.affinity.valuePtr();

  Matrix aggregate = Matrix::Zero(L, L);
  std::vector<Eigen::Triplet<Real, std::int64_t>> trips;
  std::map<Index, Real> row_mass;
  for (Index i = 0; i < N; ++i) {
    row_mass.clear();
    const Index ci = out.assignment[static_cast<std::size_t>(i)];
    for (auto e = outer[i]; e < outer[i + 1]; ++e) {
      const Index cj = out.assignment[static_cast<std::size_t>(inner[e])];
      aggregate(ci, cj) += val[e];
      row_mass[cj] += val[e];
    }
    Real total = 0.0;
    for (const auto& [c, v] : row_mass) total += v;
    for (const auto& [c, v] : row_mass) trips.emplace_back(i, c, v / total);
  }
  out.transitions.resize(N, L);
  out.transitions.setFromTriplets(trips.begin(), trips.end());
  out.transitions.makeCompressed();
  out.landmark = to_diffusion(SparseMatrix(aggregate.sparseView(0.0, 0.0)));
  return out;
}

}  // namespace mmphate
