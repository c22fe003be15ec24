#pragma once

// Brute-force reference implementations used only by the tests. They work straight from
// the definitions on dense matrices and share no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <mmphate/mmphate.hpp>

namespace oracle {

using mmphate::ActivationTensor;
using mmphate::Index;
using mmphate::Matrix;
using mmphate::Real;

inline Real dist(const ActivationTensor& t, Index a, Index b) {
  Real acc = 0.0;
  for (Index k = 0; k < t.n_samples(); ++k) {
    const Real d = t.row(a)[static_cast<std::size_t>(k)] - t.row(b)[static_cast<std::size_t>(k)];
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// k-th smallest entry after a full sort.
inline Real kth(std::vector<Real> v, Index k) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(k - 1)];
}

inline Real sigma(const ActivationTensor& t, Index node, Index k) {
  const Index m = t.n_units();
  const Index slab = node / m;
  std::vector<Real> d;
  for (Index j = 0; j < m; ++j)
    if (slab * m + j != node) d.push_back(dist(t, node, slab * m + j));
  return kth(d, k);
}

inline Real epsilon(const ActivationTensor& t, Index k) {
  const Index m = t.n_units();
  const Index slabs = t.n_epochs() * t.n_steps();
  Real sum = 0.0;
  for (Index node = 0; node < t.n_nodes(); ++node) {
    std::vector<Real> d;
    for (Index q = 0; q < slabs; ++q)
      if (q != node / m) d.push_back(dist(t, node, q * m + node % m));
    sum += kth(d, k);
  }
  return sum / static_cast<Real>(t.n_nodes());
}

/// Dense multislice kernel evaluated entry by entry from the branch formulas.
inline Matrix kernel(const ActivationTensor& t, Index k, Real alpha) {
  const Index N = t.n_nodes();
  const Index m = t.n_units();
  const Index slabs = t.n_epochs() * t.n_steps();
  const Real eps = slabs > 1 ? epsilon(t, k) : 1.0;
  Matrix K = Matrix::Zero(N, N);
  for (Index a = 0; a < N; ++a)
    for (Index b = 0; b < N; ++b) {
      const bool same_slab = a / m == b / m;
      const bool same_unit = a % m == b % m;
      if (a == b)
        K(a, b) = 1.0;
      else if (same_slab)
        K(a, b) = std::exp(-std::pow(dist(t, a, b) / sigma(t, a, k), alpha));
      else if (same_unit)
        K(a, b) = std::exp(-std::pow(dist(t, a, b), 2) / (eps * eps));
    }
  return K;
}

inline Matrix transition(const Matrix& K) {
  const Matrix S = 0.5 * (K + K.transpose());
  Matrix P = S;
  for (Index r = 0; r < S.rows(); ++r) P.row(r) /= S.row(r).sum();
  return P;
}

inline Matrix potential(const Matrix& P, Index t, Real floor = 1e-12) {
  Matrix Pt = Matrix::Identity(P.rows(), P.cols());
  for (Index s = 0; s < t; ++s) Pt = Pt * P;
  const Matrix L = Pt.array().max(floor).log().matrix();
  Matrix D(P.rows(), P.rows());
  for (Index i = 0; i < P.rows(); ++i)
    for (Index j = 0; j < P.rows(); ++j) D(i, j) = (L.row(i) - L.row(j)).norm();
  return D;
}

/// Minimum over every monotone warping path, enumerated recursively.
inline Real dtw(const std::vector<Real>& x, const std::vector<Real>& y) {
  Real best = std::numeric_limits<Real>::infinity();
  const Index n = static_cast<Index>(x.size()), m = static_cast<Index>(y.size());
  std::function<void(Index, Index, Real)> walk = [&](Index i, Index j, Real acc) {
    acc += std::abs(x[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(j)]);
    if (i == n - 1 && j == m - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < n) walk(i + 1, j, acc);
    if (j + 1 < m) walk(i, j + 1, acc);
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

/// Perpendicular-distance knee by a plain scan (1-based t).
inline Index knee(const std::vector<Real>& h) {
  const Real x0 = 1, y0 = h.front(), x1 = static_cast<Real>(h.size()), y1 = h.back();
  Index best = 1;
  Real best_d = -1;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Real x = static_cast<Real>(i + 1);
    const Real d = std::abs((y1 - y0) * x - (x1 - x0) * h[i] + x1 * y0 - y1 * x0) /
                   std::hypot(y1 - y0, x1 - x0);
    if (d > best_d) {
      best_d = d;
      best = static_cast<Index>(i + 1);
    }
  }
  return best;
}

inline ActivationTensor random_tensor(Index n, Index s, Index m, Index p, std::uint64_t seed) {
  ActivationTensor t(n, s, m, p);
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> g(0.0, 1.0);
  for (auto& v : t.values()) v = g(rng);
  return t;
}

}  // namespace oracle
