#pragma once

#include <cmath>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "common.hpp"

namespace mmphate {

namespace detail {

inline constexpr Index kExactMdsLimit = 1000;

/// Leading (largest algebraic) eigenpairs of a dense symmetric matrix by block subspace
/// iteration with a Rayleigh-Ritz finish. Columns come back in descending order.
inline std::pair<Vector, Matrix> top_eigenpairs(const Matrix& b, Index q, Index iterations = 60) {
  const Index N = b.rows();
  const Index width = std::min<Index>(N, q + 12);
  std::mt19937_64 rng(0x6d6473);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  Matrix y(N, width);
  for (Index c = 0; c < width; ++c)
    for (Index r = 0; r < N; ++r) y(r, c) = gauss(rng);
  Eigen::HouseholderQR<Matrix> qr(y);
  Matrix basis = qr.householderQ() * Matrix::Identity(N, width);
  for (Index it = 0; it < iterations; ++it) {
    qr.compute(b * basis);
    basis = qr.householderQ() * Matrix::Identity(N, width);
  }
  const Matrix projected = basis.transpose() * (b * basis);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (projected + projected.transpose()));
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "classical MDS eigensolve failed");
  Vector vals(q);
  Matrix vecs(N, q);
  for (Index c = 0; c < q; ++c) {
    vals(c) = es.eigenvalues()(width - 1 - c);
    vecs.col(c) = basis * es.eigenvectors().col(width - 1 - c);
  }
  return {vals, vecs};
}

}  // namespace detail

/// Torgerson scaling: eigenvectors of the double-centered squared distances, scaled by
/// the square roots of their (non-negative) eigenvalues. Each axis is flipped so its first
/// non-negligible coordinate is positive. Above 1000 points the leading eigenpairs come
/// from subspace iteration instead of a full decomposition.
inline Matrix classical_mds(const Matrix& dist, Index out_dims) {
  const Index N = dist.rows();
  require(dist.cols() == N, "distance matrix must be square");
  require(out_dims >= 1, "out_dims must be >= 1");
  require(out_dims <= N, "out_dims cannot exceed the number of points");

  Matrix b = dist.cwiseProduct(dist);
  const Vector row_mean = b.rowwise().mean();
  const Vector col_mean = b.colwise().mean().transpose();
  const Real grand = b.mean();
  for (Index j = 0; j < N; ++j)
    for (Index i = 0; i < N; ++i) b(i, j) = -0.5 * (b(i, j) - row_mean(i) - col_mean(j) + grand);
  b = 0.5 * (b + b.transpose()).eval();

  Vector vals(out_dims);
  Matrix vecs(N, out_dims);
  if (N <= detail::kExactMdsLimit) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(b);
    if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "classical MDS eigensolve failed");
    for (Index c = 0; c < out_dims; ++c) {
      vals(c) = es.eigenvalues()(N - 1 - c);  // ascending order from the solver
      vecs.col(c) = es.eigenvectors().col(N - 1 - c);
    }
  } else {
    std::tie(vals, vecs) = detail::top_eigenpairs(b, out_dims);
  }

  Matrix coords(N, out_dims);
  const Real scale = std::max<Real>(1.0, vals.cwiseAbs().maxCoeff());
  for (Index c = 0; c < out_dims; ++c) {
    Vector axis = vecs.col(c) * std::sqrt(std::max<Real>(0.0, vals(c)));
    for (Index r = 0; r < N; ++r) {
      if (std::abs(axis(r)) > 1e-12 * std::sqrt(scale)) {
        if (axis(r) < 0) axis = -axis;
        break;
      }
    }
    coords.col(c) = axis;
  }
  return coords;
}

struct SmacofConfig {
  Index max_iter = 300;
  Real rel_tol = 1e-6;
};

struct SmacofResult {
  Matrix coords;
  /// Raw stress of the initial configuration followed by one entry per accepted iteration.
  std::vector<Real> stress_trace;
  Index iterations = 0;

  Real stress() const { return stress_trace.back(); }
};

namespace detail {

/// Row-major copy of a layout; the inner loops below index it directly.
struct Layout {
  std::vector<Real> xs;
  Index n = 0, d = 0;
  explicit Layout(const Matrix& x) : xs(static_cast<std::size_t>(x.size())), n(x.rows()), d(x.cols()) {
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < d; ++c) xs[static_cast<std::size_t>(i * d + c)] = x(i, c);
  }
  const Real* row(Index i) const { return xs.data() + i * d; }
};

inline Real pair_distance(const Real* a, const Real* b, Index d) {
  Real acc = 0.0;
  for (Index c = 0; c < d; ++c) {
    const Real t = a[c] - b[c];
    acc += t * t;
  }
  return std::sqrt(acc);
}

inline Real layout_stress(const Matrix& dist, const Layout& x) {
  std::vector<Real> per_row(static_cast<std::size_t>(x.n), 0.0);
  parallel::for_each_index(0, x.n, [&](Index i) {
    Real acc = 0.0;
    const Real* xi = x.row(i);
    for (Index j = i + 1; j < x.n; ++j) {
      const Real r = pair_distance(xi, x.row(j), x.d) - dist(j, i);
      acc += r * r;
    }
    per_row[static_cast<std::size_t>(i)] = acc;
  });
  Real total = 0.0;
  for (Real v : per_row) total += v;
  return total;
}

}  // namespace detail

/// Raw stress sum_{i<j} (||x_i - x_j|| - D_ij)^2.
inline Real raw_stress(const Matrix& dist, const Matrix& x) { return detail::layout_stress(dist, detail::Layout(x)); }

/// Metric MDS by stress majorization (Guttman transform updates).
inline SmacofResult smacof(const Matrix& dist, const Matrix& init, const SmacofConfig& cfg = {}) {
  const Index N = dist.rows();
  require(dist.cols() == N && init.rows() == N, "distance matrix and initial layout disagree in size");
  require(cfg.max_iter >= 0 && cfg.rel_tol >= 0.0, "invalid SMACOF configuration");

  const Index d = init.cols();
  detail::Layout x(init);
  detail::Layout next = x;
  SmacofResult res;
  res.stress_trace.push_back(detail::layout_stress(dist, x));
  for (Index it = 0; it < cfg.max_iter; ++it) {
    const Real prev = res.stress_trace.back();
    if (prev == 0.0) break;
    parallel::for_each_index(0, N, [&](Index i) {
      Real acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      std::vector<Real> wide;
      Real* sum = d <= 8 ? acc : (wide.assign(static_cast<std::size_t>(d), 0.0), wide.data());
      const Real* xi = x.row(i);
      const Real* col = &dist(0, i);
      for (Index j = 0; j < N; ++j) {
        if (j == i) continue;
        const Real* xj = x.row(j);
        const Real len = detail::pair_distance(xi, xj, d);
        // coincident points contribute nothing to the ratio terms
        if (!(len > 0.0)) continue;
        const Real w = col[j] / len;
        for (Index c = 0; c < d; ++c) sum[c] += w * (xi[c] - xj[c]);
      }
      Real* out = next.xs.data() + i * d;
      for (Index c = 0; c < d; ++c) out[c] = sum[c] / static_cast<Real>(N);
    });
    const Real cur = detail::layout_stress(dist, next);
    if (cur > prev) break;  // rounding-level uptick at convergence
    std::swap(x.xs, next.xs);
    res.stress_trace.push_back(cur);
    res.iterations = it + 1;
    if ((prev - cur) < cfg.rel_tol * prev) break;
  }
  res.coords.resize(N, d);
  for (Index i = 0; i < N; ++i)
    for (Index c = 0; c < d; ++c) res.coords(i, c) = x.row(i)[c];
  return res;
}

struct ProcrustesResult {
  Matrix aligned;
  Real rmse = 0.0;
};

/// Aligns `moving` onto `target` with the optimal translation and orthogonal map
/// (reflections allowed); rmse is over points.
inline ProcrustesResult procrustes(const Matrix& target, const Matrix& moving) {
  require(target.rows() == moving.rows() && target.cols() == moving.cols(),
          "Procrustes inputs must have equal shape");
  const Eigen::RowVectorXd mt = target.colwise().mean();
  const Eigen::RowVectorXd mm = moving.colwise().mean();
  const Matrix a = target.rowwise() - mt;
  const Matrix b = moving.rowwise() - mm;
  Eigen::JacobiSVD<Matrix> svd(b.transpose() * a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix rot = svd.matrixU() * svd.matrixV().transpose();
  ProcrustesResult out;
  out.aligned = (b * rot).rowwise() + mt;
  out.rmse = std::sqrt((out.aligned - target).rowwise().squaredNorm().mean());
  return out;
}

}  // namespace mmphate
