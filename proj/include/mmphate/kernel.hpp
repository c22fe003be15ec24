#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "common.hpp"
#include "tensor.hpp"

namespace mmphate {

struct KernelParams {
  /// Neighbor rank for both the per-node intrastep bandwidth and the interstep average.
  Index k = 5;
  /// Alpha-decay exponent of the intrastep kernel.
  Real alpha = 40.0;
  /// Fixed interstep bandwidth; unset means the k-NN average over all trajectories.
  std::optional<Real> interstep_bandwidth;
  /// Optional limit on |slab(a) - slab(b)| for interstep edges, slabs counted in
  /// (epoch, step) order. Unset connects every pair of slabs.
  std::optional<Index> interstep_band;
  /// Substitute machine epsilon for zero bandwidths instead of failing.
  bool clamp_degenerate = false;

  void validate(Index n_units) const {
    require(k >= 1, "knn must be >= 1");
    require(n_units <= 1 || k < n_units, "knn must be smaller than the number of units");
    require(alpha >= 1.0 && std::isfinite(alpha), "alpha must be >= 1");
    if (interstep_bandwidth)
      require(*interstep_bandwidth > 0.0 && std::isfinite(*interstep_bandwidth),
              "interstep bandwidth must be a positive real");
    if (interstep_band) require(*interstep_band >= 1, "interstep band must be >= 1");
  }
};

/// Affinity over all (epoch, step, unit) nodes before symmetrization. Row-compressed with
/// sorted columns; zeros that arise from kernel underflow are kept as explicit entries so
/// the structure always matches the multislice pattern.
struct MultisliceKernel {
  SparseMatrix matrix;
  Index n_epochs = 0, n_steps = 0, n_units = 0;
  KernelParams params;
  /// Per-node intrastep bandwidths, node order.
  Vector sigma;
  /// Interstep bandwidth actually used (0 when there are no interstep edges).
  Real epsilon = 0.0;

  Index size() const noexcept { return n_epochs * n_steps * n_units; }
  Index flat(Index epoch, Index step, Index unit) const noexcept {
    return (epoch * n_steps + step) * n_units + unit;
  }
  NodeIndex node(Index f) const noexcept {
    return {f / (n_steps * n_units), (f / n_units) % n_steps, f % n_units};
  }
};

/// Row-stochastic random walk P = D^-1 K' with K' the symmetrized kernel.
struct DiffusionOperator {
  SparseMatrix transition;
  SparseMatrix affinity;
  /// Row sums of `affinity`.
  Vector degree;

  Index size() const noexcept { return transition.rows(); }
};

namespace detail {

inline Real row_distance(std::span<const Real> a, std::span<const Real> b) {
  Real acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Real d = a[k] - b[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// k-th smallest value of `v` (1-based rank).
inline Real kth_smallest(std::vector<Real>& v, Index k) {
  auto it = v.begin() + (k - 1);
  std::nth_element(v.begin(), it, v.end());
  return *it;
}

}  // namespace detail

/// Pairwise Euclidean distances between the unit rows of one (epoch, step) slab.
inline Matrix intrastep_distances(const ActivationTensor& t, Index epoch, Index step) {
  require(epoch >= 0 && epoch < t.n_epochs() && step >= 0 && step < t.n_steps(),
          "slab index out of range");
  const Index m = t.n_units();
  Matrix d = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = i + 1; j < m; ++j)
      d(i, j) = d(j, i) = detail::row_distance(t.row(epoch, step, i), t.row(epoch, step, j));
  return d;
}

/// Distance from each unit to its k-th nearest other unit.
inline Vector adaptive_bandwidths(const Matrix& dist, Index k, bool clamp_degenerate = false) {
  const Index m = dist.rows();
  require(k >= 1 && k < m, "bandwidth rank k must satisfy 1 <= k < m");
  Vector sigma(m);
  std::vector<Real> others(static_cast<std::size_t>(m - 1));
  for (Index i = 0; i < m; ++i) {
    std::size_t c = 0;
    for (Index j = 0; j < m; ++j)
      if (j != i) others[c++] = dist(i, j);
    Real s = detail::kth_smallest(others, k);
    if (!(s > 0.0)) {
      if (!clamp_degenerate)
        fail(ErrorKind::numerical, "unit " + std::to_string(i) + " has a zero k-NN bandwidth (its " +
                                       std::to_string(k) + "-th neighbor is coincident)");
      s = std::numeric_limits<Real>::epsilon();
    }
    sigma(i) = s;
  }
  return sigma;
}

/// exp(-(d_ij / sigma_i)^alpha); uses the row bandwidth only, so not symmetric.
inline Matrix intrastep_kernel(const Matrix& dist, const Vector& sigma, Real alpha) {
  const Index m = dist.rows();
  require(sigma.size() == m, "bandwidth vector length must match the distance matrix");
  Matrix k(m, m);
  for (Index i = 0; i < m; ++i) {
    require(sigma(i) > 0.0, "bandwidths must be positive");
    for (Index j = 0; j < m; ++j)
      k(i, j) = i == j ? 1.0 : std::exp(-std::pow(dist(i, j) / sigma(i), alpha));
  }
  return k;
}

namespace detail {

/// k-th nearest distance from node `f` to the same unit in every other slab.
inline Real trajectory_knn(const ActivationTensor& t, Index f, Index k, std::vector<Real>& scratch) {
  const Index m = t.n_units();
  const Index slabs = t.n_slabs();
  const Index unit = f % m;
  const Index own = f / m;
  scratch.resize(static_cast<std::size_t>(slabs - 1));
  std::size_t c = 0;
  for (Index q = 0; q < slabs; ++q)
    if (q != own) scratch[c++] = row_distance(t.row(f), t.row(q * m + unit));
  return kth_smallest(scratch, k);
}

}  // namespace detail

/// Mean over all nodes of the distance to the k-th nearest point on the node's own unit
/// trajectory across every (epoch, step) slab.
inline Real interstep_bandwidth(const ActivationTensor& t, Index k) {
  const Index slabs = t.n_slabs();
  require(k >= 1, "bandwidth rank k must be >= 1");
  require(slabs > k, "interstep bandwidth needs n*s > k (" + std::to_string(slabs) + " slabs, k = " +
                         std::to_string(k) + ")");
  const Index N = t.n_nodes();
  std::vector<Real> dk(static_cast<std::size_t>(N));
  // one scratch buffer per node block keeps workers independent
  const Index block = 64;
  parallel::for_each_index(0, (N + block - 1) / block, [&](Index b) {
    std::vector<Real> scratch;
    for (Index f = b * block; f < std::min(N, (b + 1) * block); ++f)
      dk[static_cast<std::size_t>(f)] = detail::trajectory_knn(t, f, k, scratch);
  });
  Real sum = 0.0;
  for (Real v : dk) sum += v;
  const Real eps = sum / static_cast<Real>(N);
  if (!(eps > 0.0)) fail(ErrorKind::numerical, "interstep bandwidth is zero (all unit trajectories are constant)");
  return eps;
}

/// Gaussian affinity exp(-d^2 / eps^2) between all (epoch, step) slabs of one unit.
inline Matrix interstep_kernel(const ActivationTensor& t, Index unit, Real eps) {
  require(unit >= 0 && unit < t.n_units(), "unit index out of range");
  require(eps > 0.0, "interstep bandwidth must be positive");
  const Index slabs = t.n_slabs();
  const Index m = t.n_units();
  Matrix k = Matrix::Ones(slabs, slabs);
  for (Index a = 0; a < slabs; ++a)
    for (Index b = a + 1; b < slabs; ++b) {
      const Real d = detail::row_distance(t.row(a * m + unit), t.row(b * m + unit));
      k(a, b) = k(b, a) = std::exp(-(d * d) / (eps * eps));
    }
  return k;
}

inline MultisliceKernel assemble_multislice(const ActivationTensor& t, const KernelParams& params) {
  params.validate(t.n_units());
  const Index m = t.n_units();
  const Index slabs = t.n_slabs();
  const Index N = t.n_nodes();
  const Index band = params.interstep_band ? std::min(*params.interstep_band, slabs) : slabs;

  MultisliceKernel K;
  K.n_epochs = t.n_epochs();
  K.n_steps = t.n_steps();
  K.n_units = m;
  K.params = params;
  K.sigma = Vector::Zero(N);

  if (slabs > 1)
    K.epsilon = params.interstep_bandwidth ? *params.interstep_bandwidth
                                           : annotate("interstep bandwidth", [&] { return interstep_bandwidth(t, params.k); });

  auto lo_of = [&](Index q) { return std::max<Index>(0, q - band); };
  auto hi_of = [&](Index q) { return std::min<Index>(slabs - 1, q + band); };

  std::vector<std::int64_t> outer(static_cast<std::size_t>(N + 1), 0);
  for (Index f = 0; f < N; ++f) {
    const Index q = f / m;
    outer[static_cast<std::size_t>(f + 1)] = outer[static_cast<std::size_t>(f)] + (hi_of(q) - lo_of(q)) + m;
  }
  const auto nnz = static_cast<std::size_t>(outer.back());
  std::vector<std::int64_t> inner(nnz);
  std::vector<Real> values(nnz);

  // intrastep blocks, one slab at a time
  parallel::for_each_index(0, slabs, [&](Index q) {
    const Index epoch = q / t.n_steps(), step = q % t.n_steps();
    Matrix block = Matrix::Ones(1, 1);
    if (m > 1) {
      const Matrix dist = intrastep_distances(t, epoch, step);
      Vector sigma;
      try {
        sigma = adaptive_bandwidths(dist, params.k, params.clamp_degenerate);
      } catch (const Error& e) {
        throw Error(e.kind(), "slab (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + "): " + e.what());
      }
      K.sigma.segment(q * m, m) = sigma;
      block = intrastep_kernel(dist, sigma, params.alpha);
    }
    const Index lo = lo_of(q);
    for (Index i = 0; i < m; ++i) {
      const auto base = static_cast<std::size_t>(outer[static_cast<std::size_t>(q * m + i)] + (q - lo));
      for (Index j = 0; j < m; ++j) {
        inner[base + static_cast<std::size_t>(j)] = q * m + j;
        values[base + static_cast<std::size_t>(j)] = block(i, j);
      }
    }
  });

  // interstep diagonals, one unit trajectory at a time
  if (slabs > 1) {
    const Real eps2 = K.epsilon * K.epsilon;
    // position of the entry pointing at slab `other` inside a row of slab `q`
    auto pos = [&](Index q, Index other) {
      const Index lo = lo_of(q);
      return static_cast<std::size_t>(other < q ? other - lo : (q - lo) + m + (other - q - 1));
    };
    parallel::for_each_index(0, m, [&](Index i) {
      for (Index a = 0; a < slabs; ++a)
        for (Index b = a + 1; b <= hi_of(a); ++b) {
          const Real d = detail::row_distance(t.row(a * m + i), t.row(b * m + i));
          const Real v = std::exp(-(d * d) / eps2);
          const std::size_t pa = static_cast<std::size_t>(outer[static_cast<std::size_t>(a * m + i)]) + pos(a, b);
          const std::size_t pb = static_cast<std::size_t>(outer[static_cast<std::size_t>(b * m + i)]) + pos(b, a);
          inner[pa] = b * m + i;
          values[pa] = v;
          inner[pb] = a * m + i;
          values[pb] = v;
        }
    });
  }

  K.matrix = Eigen::Map<const SparseMatrix>(N, N, static_cast<std::int64_t>(nnz), outer.data(), inner.data(),
                                            values.data());
  return K;
}

/// Symmetrize as (K + K^T) / 2, then divide each row by its sum.
inline DiffusionOperator to_diffusion(const SparseMatrix& kernel) {
  require(kernel.rows() == kernel.cols(), "kernel must be square");
  DiffusionOperator op;
  const SparseMatrix transposed = kernel.transpose();
  op.affinity = (kernel + transposed) * 0.5;
  op.affinity.makeCompressed();
  const Index N = op.affinity.rows();
  op.degree = Vector::Zero(N);
  op.transition = op.affinity;
  const auto* outer = op.affinity.outerIndexPtr();
  const Real* av = op.affinity.valuePtr();
  Real* pv = op.transition.valuePtr();
  for (Index r = 0; r < N; ++r) {
    Real sum = 0.0;
    for (auto e = outer[r]; e < outer[r + 1]; ++e) sum += av[e];
    if (!(sum > 0.0) || !std::isfinite(sum))
      fail(ErrorKind::numerical, "kernel row " + std::to_string(r) + " has non-positive sum");
    op.degree(r) = sum;
    for (auto e = outer[r]; e < outer[r + 1]; ++e) pv[e] = av[e] / sum;
  }
  return op;
}

inline DiffusionOperator to_diffusion(const MultisliceKernel& k) { return to_diffusion(k.matrix); }

/// "row col value" lines with 17 significant digits, row-major order.
inline void dump_triplets(const SparseMatrix& a, std::ostream& os) {
  char buf[64];
  for (Index r = 0; r < a.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(a, r); it; ++it) {
      std::snprintf(buf, sizeof buf, "%.17g", it.value());
      os << it.row() << ' ' << it.col() << ' ' << buf << '\n';
    }
}

}  // namespace mmphate
