#pragma once

#include <cmath>
#include <string>

#include "common.hpp"
#include "kernel.hpp"

namespace mmphate {

/// Largest operator size for which dense N x N intermediates are allowed.
inline constexpr Index kDefaultDenseThreshold = 4000;

namespace detail {

inline constexpr Index kPowerBlock = 128;

/// Rows [first, first + count) of P^t. The block layout is fixed, so results do not
/// depend on how blocks are spread across workers.
inline Matrix power_rows(const SparseMatrix& p, Index t, Index first, Index count) {
  const Index N = p.rows();
  Matrix v = Matrix::Zero(count, N);
  for (Index r = 0; r < count; ++r) v(r, first + r) = 1.0;
  Matrix w(count, N);
  for (Index step = 0; step < t; ++step) {
    w.noalias() = v * p;
    v.swap(w);
  }
  return v;
}

}  // namespace detail

/// Dense P^t. Sparse operators are powered one row block at a time by repeated products
/// with P; operators more than a quarter full are powered densely by repeated squaring.
inline RowMatrix diffusion_power(const SparseMatrix& p, Index t) {
  require(t >= 1, "diffusion time t must be >= 1");
  const Index N = p.rows();
  if (p.nonZeros() * 4 > N * N) {
    Matrix base = Matrix(p);
    Matrix acc;
    bool have = false;
    for (Index e = t; e > 0; e >>= 1) {
      if (e & 1) {
        acc = have ? Matrix(acc * base) : base;
        have = true;
      }
      if (e > 1) base = base * base;
    }
    return acc;
  }
  RowMatrix out(N, N);
  const Index blocks = (N + detail::kPowerBlock - 1) / detail::kPowerBlock;
  parallel::for_each_index(0, blocks, [&](Index b) {
    const Index first = b * detail::kPowerBlock;
    const Index count = std::min(detail::kPowerBlock, N - first);
    out.middleRows(first, count) = detail::power_rows(p, t, first, count);
  });
  return out;
}

/// Euclidean distances between the log-transformed rows of P^t, with entries of P^t
/// clamped to at least `log_floor` before the log.
inline Matrix potential_distances(const SparseMatrix& p, Index t, Real log_floor = 1e-12,
                                  Index dense_threshold = kDefaultDenseThreshold) {
  const Index N = p.rows();
  require(log_floor > 0.0, "log floor must be positive");
  if (N > dense_threshold)
    fail(ErrorKind::validation, "operator of size " + std::to_string(N) + " exceeds the dense limit of " +
                                    std::to_string(dense_threshold) + "; enable landmarks");
  RowMatrix logp = diffusion_power(p, t);
  logp = logp.array().max(log_floor).log().matrix();

  Matrix d = Matrix::Zero(N, N);
  parallel::for_each_index(0, N, [&](Index i) {
    for (Index j = i + 1; j < N; ++j) d(j, i) = (logp.row(i) - logp.row(j)).norm();
  });
  for (Index j = 0; j < N; ++j)
    for (Index i = j + 1; i < N; ++i) d(j, i) = d(i, j);
  return d;
}

inline Matrix potential_distances(const DiffusionOperator& op, Index t, Real log_floor = 1e-12,
                                  Index dense_threshold = kDefaultDenseThreshold) {
  return potential_distances(op.transition, t, log_floor, dense_threshold);
}

}  // namespace mmphate
