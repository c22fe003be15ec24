#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "common.hpp"
#include "embed.hpp"

namespace mmphate {

inline constexpr Real kRadiusFloor = 1e-12;

struct EntropyEstimate {
  Real value = 0.0;
  /// Some k-NN radius fell below the floor and was clamped.
  bool degenerate = false;
};

namespace detail {

/// Distance from each point to its k-th nearest other point. Points are swept in order
/// of their first coordinate, stopping once that gap alone exceeds the current k-th best.
inline std::vector<Real> knn_radii(const Matrix& pts, Index k) {
  const Index N = pts.rows();
  const Index d = pts.cols();
  std::vector<Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return pts(a, 0) < pts(b, 0); });
  RowMatrix sorted(N, d);
  for (Index r = 0; r < N; ++r) sorted.row(r) = pts.row(order[static_cast<std::size_t>(r)]);

  std::vector<Real> radius(static_cast<std::size_t>(N));
  parallel::for_each_index(0, N, [&](Index r) {
    std::priority_queue<Real> best;  // k smallest squared distances
    auto offer = [&](Index o) {
      const Real dist2 = (sorted.row(r) - sorted.row(o)).squaredNorm();
      if (static_cast<Index>(best.size()) < k) {
        best.push(dist2);
      } else if (dist2 < best.top()) {
        best.pop();
        best.push(dist2);
      }
    };
    auto gap_ok = [&](Index o) {
      if (static_cast<Index>(best.size()) < k) return true;
      const Real gap = sorted(o, 0) - sorted(r, 0);
      return gap * gap <= best.top();
    };
    Index lo = r - 1, hi = r + 1;
    while (lo >= 0 || hi < N) {
      bool moved = false;
      if (hi < N && gap_ok(hi)) {
        offer(hi++);
        moved = true;
      } else {
        hi = N;
      }
      if (lo >= 0 && gap_ok(lo)) {
        offer(lo--);
        moved = true;
      } else {
        lo = -1;
      }
      if (!moved) break;
    }
    radius[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = std::sqrt(best.top());
  });
  return radius;
}

}  // namespace detail

/// Kozachenko-Leonenko differential entropy estimate in nats:
/// psi(N) - psi(k) + log V_d + (d / N) sum_i log r_i, with r_i the distance to the k-th
/// nearest neighbor and V_d the unit-ball volume.
inline EntropyEstimate knn_entropy(const Matrix& pts, Index k) {
  const Index N = pts.rows();
  const Index d = pts.cols();
  require(k >= 1, "entropy estimator k must be >= 1");
  require(N > k, "entropy estimator needs more than k points (" + std::to_string(N) + " <= " +
                     std::to_string(k) + ")");
  require(d >= 1, "points need at least one coordinate");
  const auto radii = detail::knn_radii(pts, k);
  EntropyEstimate out;
  Real log_sum = 0.0;
  for (Real r : radii) {
    if (r < kRadiusFloor) {
      r = kRadiusFloor;
      out.degenerate = true;
    }
    log_sum += std::log(r);
  }
  const Real dd = static_cast<Real>(d);
  const Real log_vd = 0.5 * dd * std::log(std::numbers::pi) - std::lgamma(0.5 * dd + 1.0);
  out.value = boost::math::digamma(static_cast<Real>(N)) - boost::math::digamma(static_cast<Real>(k)) +
              log_vd + dd * log_sum / static_cast<Real>(N);
  return out;
}

enum class EntropyKind { intra_step, inter_step };

inline const char* to_string(EntropyKind k) { return k == EntropyKind::intra_step ? "intra_step" : "inter_step"; }

/// One entropy trajectory over epochs: per step id (intra-step) or per unit (inter-step).
struct EntropyCurve {
  EntropyKind kind = EntropyKind::intra_step;
  Index index = 0;
  std::vector<Index> epoch_ids;
  std::vector<Real> values;
  std::vector<bool> degenerate;
};

/// For every (epoch, step): entropy of the m unit coordinates. One curve per step id.
inline std::vector<EntropyCurve> intra_step_entropy(const Embedding& e, Index k_est = 3) {
  require(e.n_units >= k_est + 2, "intra-step entropy needs m >= k_est + 2 units");
  std::vector<EntropyCurve> curves(static_cast<std::size_t>(e.n_steps));
  for (Index w = 0; w < e.n_steps; ++w) {
    auto& c = curves[static_cast<std::size_t>(w)];
    c.kind = EntropyKind::intra_step;
    c.index = e.step_ids[static_cast<std::size_t>(w)];
    c.epoch_ids = e.epoch_ids;
    c.values.resize(static_cast<std::size_t>(e.n_epochs));
    c.degenerate.resize(static_cast<std::size_t>(e.n_epochs));
  }
  for (Index ep = 0; ep < e.n_epochs; ++ep)
    for (Index w = 0; w < e.n_steps; ++w) {
      const Matrix pts = e.coords.middleRows(e.flat(ep, w, 0), e.n_units);
      const auto est = annotate("intra-step entropy at (epoch " + std::to_string(e.epoch_ids[static_cast<std::size_t>(ep)]) +
                                    ", step " + std::to_string(e.step_ids[static_cast<std::size_t>(w)]) + ")",
                                [&] { return knn_entropy(pts, k_est); });
      curves[static_cast<std::size_t>(w)].values[static_cast<std::size_t>(ep)] = est.value;
      curves[static_cast<std::size_t>(w)].degenerate[static_cast<std::size_t>(ep)] = est.degenerate;
    }
  return curves;
}

/// For every (unit, epoch): entropy of that unit's s time-step coordinates. One curve per unit.
inline std::vector<EntropyCurve> inter_step_entropy(const Embedding& e, Index k_est = 3) {
  require(e.n_steps >= k_est + 2, "inter-step entropy needs s >= k_est + 2 steps");
  std::vector<EntropyCurve> curves(static_cast<std::size_t>(e.n_units));
  for (Index i = 0; i < e.n_units; ++i) {
    auto& c = curves[static_cast<std::size_t>(i)];
    c.kind = EntropyKind::inter_step;
    c.index = i;
    c.epoch_ids = e.epoch_ids;
    c.values.resize(static_cast<std::size_t>(e.n_epochs));
    c.degenerate.resize(static_cast<std::size_t>(e.n_epochs));
    for (Index ep = 0; ep < e.n_epochs; ++ep) {
      Matrix pts(e.n_steps, e.dims());
      for (Index w = 0; w < e.n_steps; ++w) pts.row(w) = e.coords.row(e.flat(ep, w, i));
      const auto est = annotate("inter-step entropy at (unit " + std::to_string(i) + ", epoch " +
                                    std::to_string(e.epoch_ids[static_cast<std::size_t>(ep)]) + ")",
                                [&] { return knn_entropy(pts, k_est); });
      c.values[static_cast<std::size_t>(ep)] = est.value;
      c.degenerate[static_cast<std::size_t>(ep)] = est.degenerate;
    }
  }
  return curves;
}

}  // namespace mmphate
