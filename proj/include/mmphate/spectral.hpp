#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "common.hpp"
#include "kernel.hpp"

namespace mmphate {

/// A = D^1/2 P D^-1/2 = D^-1/2 K' D^-1/2, which shares the spectrum of P.
inline SparseMatrix symmetric_conjugate(const DiffusionOperator& op) {
  SparseMatrix a = op.affinity;
  const Vector inv_sqrt = op.degree.array().rsqrt();
  const auto* outer = a.outerIndexPtr();
  const auto* inner = a.innerIndexPtr();
  Real* v = a.valuePtr();
  for (Index r = 0; r < a.rows(); ++r)
    for (auto e = outer[r]; e < outer[r + 1]; ++e) v[e] *= inv_sqrt(r) * inv_sqrt(inner[e]);
  return a;
}

/// Spectral entropy H(t) for t = 1..t_max of the diffusion operator. Entry t-1 holds H(t).
inline std::vector<Real> vn_entropy_curve(const DiffusionOperator& op, Index t_max) {
  require(t_max >= 1, "t_max must be >= 1");
  const Matrix a = Matrix(symmetric_conjugate(op));
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "eigensolve failed for the diffusion spectrum");
  Vector lambda = es.eigenvalues().cwiseMax(0.0).cwiseMin(1.0);

  std::vector<Real> curve;
  curve.reserve(static_cast<std::size_t>(t_max));
  Vector powered = lambda;
  for (Index t = 1; t <= t_max; ++t) {
    if (t > 1) powered = powered.cwiseProduct(lambda);
    const Real total = powered.sum();
    Real h = 0.0;
    if (total > 0.0)
      for (Index k = 0; k < powered.size(); ++k) {
        const Real eta = powered(k) / total;
        if (eta > 0.0) h -= eta * std::log(eta);
      }
    curve.push_back(h);
  }
  return curve;
}

struct TSelection {
  Index t = 1;
  /// Set when the curve had no knee and t fell back to 1.
  bool fallback = false;
};

/// Knee of the entropy curve: the t whose point lies farthest from the chord joining the
/// first and last points. Ties go to the smaller t.
inline TSelection select_t(const std::vector<Real>& curve) {
  require(curve.size() >= 3, "t selection needs a curve of length >= 3");
  const auto T = static_cast<Real>(curve.size());
  const Real x0 = 1.0, y0 = curve.front();
  const Real dx = T - x0, dy = curve.back() - y0;
  const Real chord = std::hypot(dx, dy);
  Real best = 0.0;
  Index best_t = 1;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    const Real x = static_cast<Real>(k + 1), y = curve[k];
    const Real dist = std::abs(dy * (x - x0) - dx * (y - y0)) / chord;
    if (dist > best) {
      best = dist;
      best_t = static_cast<Index>(k + 1);
    }
  }
  if (!(best > 1e-9 * std::max<Real>(1.0, chord))) return {1, true};
  return {best_t, false};
}

/// Leading eigenpairs (largest |lambda|) of a symmetric sparse matrix. Small problems use a
/// dense solver; larger ones a seeded randomized subspace iteration followed by
/// Rayleigh-Ritz on the captured subspace.
struct EigenPairs {
  Vector values;
  Matrix vectors;
};

inline EigenPairs leading_eigenpairs(const SparseMatrix& a, Index q, std::uint64_t seed,
                                     Index power_iterations = 6, Index oversample = 16) {
  const Index N = a.rows();
  require(q >= 1 && q <= N, "requested eigenpair count out of range");
  auto take_largest = [&](const Vector& vals, const Matrix& vecs, const Matrix* basis) {
    std::vector<Index> order(static_cast<std::size_t>(vals.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index x, Index y) { return std::abs(vals(x)) > std::abs(vals(y)); });
    EigenPairs out;
    out.values.resize(q);
    out.vectors.resize(N, q);
    for (Index c = 0; c < q; ++c) {
      const Index src = order[static_cast<std::size_t>(c)];
      out.values(c) = vals(src);
      Vector v = basis ? Vector(*basis * vecs.col(src)) : Vector(vecs.col(src));
      // sign: largest-magnitude component positive
      Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v(arg) < 0) v = -v;
      out.vectors.col(c) = v;
    }
    return out;
  };

  if (N <= 800 || q + oversample >= N) {
    Eigen::SelfAdjointEigenSolver<Matrix> es{Matrix(a)};
    if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "dense eigensolve failed");
    return take_largest(es.eigenvalues(), es.eigenvectors(), nullptr);
  }

  const Index width = q + oversample;
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  RowMatrix y(N, width);
  for (Index r = 0; r < N; ++r)
    for (Index c = 0; c < width; ++c) y(r, c) = gauss(rng);

  // Cholesky QR applied twice; the second pass restores orthogonality lost in the first.
  auto orthonormalize = [&](RowMatrix m) {
    for (int pass = 0; pass < 2; ++pass) {
      const Matrix gram = m.transpose() * m;
      Eigen::LLT<Matrix> llt(gram);
      if (llt.info() != Eigen::Success) {
        Eigen::HouseholderQR<Matrix> qr{Matrix(m)};
        return RowMatrix(qr.householderQ() * Matrix::Identity(N, width));
      }
      m = llt.matrixU().solve<Eigen::OnTheRight>(m);
    }
    return m;
  };
  RowMatrix basis = orthonormalize(a * y);
  for (Index it = 0; it < power_iterations; ++it) basis = orthonormalize(a * basis);

  const Matrix projected = basis.transpose() * (a * basis);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (projected + projected.transpose()));
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "projected eigensolve failed");
  const Matrix basis_cm = basis;
  return take_largest(es.eigenvalues(), es.eigenvectors(), &basis_cm);
}

}  // namespace mmphate
