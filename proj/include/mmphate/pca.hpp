#pragma once

#include <map>
#include <vector>

#include <Eigen/Eigenvalues>

#include "common.hpp"
#include "tensor.hpp"

namespace mmphate {

struct VarianceProfile {
  /// Smallest number of components whose cumulative explained ratio reaches the threshold.
  Index components = 0;
  /// Explained-variance ratios, non-increasing, summing to 1.
  std::vector<Real> ratios;
};

namespace detail {

struct PrincipalAxes {
  Vector variances;  // descending
  Matrix axes;       // columns, matching order
};

inline PrincipalAxes principal_axes(const Matrix& centered) {
  const Matrix cov = (centered.transpose() * centered) / static_cast<Real>(centered.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "covariance eigensolve failed");
  const Index d = cov.rows();
  PrincipalAxes out;
  out.variances.resize(d);
  out.axes.resize(d, d);
  for (Index c = 0; c < d; ++c) {
    out.variances(c) = std::max<Real>(0.0, es.eigenvalues()(d - 1 - c));
    Vector axis = es.eigenvectors().col(d - 1 - c);
    Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    out.axes.col(c) = axis;
  }
  return out;
}

}  // namespace detail

/// Explained-variance spectrum of a samples x features matrix.
inline VarianceProfile pca_variance_profile(const Matrix& data, Real threshold = 0.95) {
  require(data.rows() >= 2, "PCA needs at least two samples");
  require(threshold > 0.0 && threshold <= 1.0, "variance threshold must lie in (0, 1]");
  const Matrix centered = data.rowwise() - data.colwise().mean();
  const auto pa = detail::principal_axes(centered);
  const Real total = pa.variances.sum();
  if (!(total > 0.0)) fail(ErrorKind::numerical, "data has rank 0 (no variance)");
  VarianceProfile out;
  Real cumulative = 0.0;
  for (Index c = 0; c < pa.variances.size(); ++c) {
    const Real r = pa.variances(c) / total;
    out.ratios.push_back(r);
    cumulative += r;
    // small slack so an exactly-reached threshold is not missed to rounding
    if (out.components == 0 && cumulative >= threshold - 1e-12) out.components = c + 1;
  }
  if (out.components == 0) out.components = pa.variances.size();
  return out;
}

/// Baseline embedding: every node row over the probe samples, mean-centered and projected
/// on the leading principal axes (each axis oriented so its largest loading is positive).
inline Matrix pca_project(const ActivationTensor& t, Index out_dims) {
  require(out_dims >= 1 && out_dims <= t.n_samples(), "out_dims must lie in [1, p]");
  const Index N = t.n_nodes();
  const Index p = t.n_samples();
  Matrix flat(N, p);
  for (Index f = 0; f < N; ++f) {
    auto r = t.row(f);
    for (Index k = 0; k < p; ++k) flat(f, k) = r[static_cast<std::size_t>(k)];
  }
  const Matrix centered = flat.rowwise() - flat.colwise().mean();
  const auto pa = detail::principal_axes(centered);
  const Real tol = 1e-12 * std::max<Real>(1.0, pa.variances(0));
  Index rank = 0;
  for (Index c = 0; c < pa.variances.size(); ++c)
    if (pa.variances(c) > tol) ++rank;
  if (out_dims > rank)
    fail(ErrorKind::validation, "out_dims " + std::to_string(out_dims) + " exceeds the data rank; at most " +
                                    std::to_string(rank) + " components are achievable");
  return centered * pa.axes.leftCols(out_dims);
}

/// Fraction of points whose strict-majority label among their k nearest neighbors equals
/// their own label. A tie for the top count counts as a miss.
inline Real knn_label_purity(const Matrix& coords, const std::vector<int>& labels, Index k) {
  const Index N = coords.rows();
  require(static_cast<Index>(labels.size()) == N, "one label per point is required");
  require(k >= 1 && N >= k + 1, "purity needs at least k + 1 points");
  std::vector<char> hit(static_cast<std::size_t>(N), 0);
  parallel::for_each_index(0, N, [&](Index i) {
    std::vector<std::pair<Real, Index>> d;
    d.reserve(static_cast<std::size_t>(N - 1));
    for (Index j = 0; j < N; ++j)
      if (j != i) d.emplace_back((coords.row(i) - coords.row(j)).squaredNorm(), j);
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    std::map<int, Index> votes;
    for (Index r = 0; r < k; ++r) ++votes[labels[static_cast<std::size_t>(d[static_cast<std::size_t>(r)].second)]];
    const int own = labels[static_cast<std::size_t>(i)];
    const Index mine = votes.count(own) ? votes[own] : 0;
    bool strict = mine > 0;
    for (const auto& [label, count] : votes)
      if (label != own && count >= mine) strict = false;
    hit[static_cast<std::size_t>(i)] = strict ? 1 : 0;
  });
  Index hits = 0;
  for (char h : hit) hits += h;
  return static_cast<Real>(hits) / static_cast<Real>(N);
}

}  // namespace mmphate
