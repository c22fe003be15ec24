#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace mmphate {

/// Synthetic activation tensors with planted unit communities.
///
/// Every community has a latent response direction in a 2-D per-sample latent space.
/// The direction rotates smoothly with the time-step (scaled by the community's
/// step_variation) and with the epoch, and the response gain grows over epochs. Units
/// add a fixed per-(unit, sample) offset and per-entry jitter, both with scale noise_sd.
/// After overfit_onset, a growing share of each unit's variance is replaced by a fixed
/// unit-specific pattern over the samples.
struct SynthConfig {
  Index n = 20;
  Index s = 15;
  Index m = 24;
  Index p = 30;
  Index n_communities = 3;
  Real noise_sd = 0.1;
  std::optional<Index> overfit_onset;
  /// Optional explicit community sizes (must sum to m). Empty means balanced blocks.
  std::vector<Index> community_sizes;
  /// Optional per-community multiplier on the per-step rotation. Empty means all 1.
  std::vector<Real> step_variation;
};

namespace detail {

inline std::vector<int> community_blocks(const SynthConfig& cfg) {
  std::vector<Index> sizes = cfg.community_sizes;
  if (sizes.empty()) {
    for (Index c = 0; c < cfg.n_communities; ++c)
      sizes.push_back(cfg.m / cfg.n_communities + (c < cfg.m % cfg.n_communities ? 1 : 0));
  }
  std::vector<int> labels;
  for (std::size_t c = 0; c < sizes.size(); ++c)
    for (Index k = 0; k < sizes[c]; ++k) labels.push_back(static_cast<int>(c));
  return labels;
}

}  // namespace detail

inline std::pair<ActivationTensor, CommunityLabels> synth_generate(const SynthConfig& cfg,
                                                                   std::uint64_t seed) {
  require(cfg.n > 0 && cfg.s > 0 && cfg.m > 0 && cfg.p > 0, "synthetic dims must be positive");
  require(cfg.n_communities >= 1 && cfg.n_communities <= cfg.m,
          "n_communities must lie in [1, m]");
  require(cfg.noise_sd >= 0.0 && std::isfinite(cfg.noise_sd), "noise_sd must be >= 0");
  if (!cfg.community_sizes.empty()) {
    Index total = 0;
    for (Index c : cfg.community_sizes) {
      require(c > 0, "community sizes must be positive");
      total += c;
    }
    require(static_cast<Index>(cfg.community_sizes.size()) == cfg.n_communities,
            "community_sizes needs one entry per community");
    require(total == cfg.m, "community sizes must sum to m");
  }
  require(cfg.step_variation.empty() ||
              static_cast<Index>(cfg.step_variation.size()) == cfg.n_communities,
          "step_variation needs one entry per community");
  if (cfg.overfit_onset)
    require(*cfg.overfit_onset >= 0 && *cfg.overfit_onset < cfg.n, "overfit_onset must be an epoch index");

  constexpr Real pi = std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  std::uniform_real_distribution<Real> unif(0.0, 1.0);

  CommunityLabels labels{detail::community_blocks(cfg)};
  const Index C = cfg.n_communities;

  std::vector<Real> z1(static_cast<std::size_t>(cfg.p)), z2(static_cast<std::size_t>(cfg.p));
  for (Index k = 0; k < cfg.p; ++k) {
    z1[static_cast<std::size_t>(k)] = gauss(rng);
    z2[static_cast<std::size_t>(k)] = gauss(rng);
  }
  const Real angle_offset = 2.0 * pi * unif(rng);
  std::vector<Real> base(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c) base[static_cast<std::size_t>(c)] = angle_offset + 2.0 * pi * static_cast<Real>(c) / static_cast<Real>(C);

  // fixed per-(unit, sample) offsets and memorization patterns
  std::vector<Real> offset(static_cast<std::size_t>(cfg.m * cfg.p));
  std::vector<Real> memo(static_cast<std::size_t>(cfg.m * cfg.p));
  for (auto& v : offset) v = gauss(rng);
  for (auto& v : memo) v = gauss(rng);

  ActivationTensor t(cfg.n, cfg.s, cfg.m, cfg.p);
  const Real step_den = cfg.s > 1 ? static_cast<Real>(cfg.s - 1) : 1.0;
  const Real epoch_den = cfg.n > 1 ? static_cast<Real>(cfg.n - 1) : 1.0;
  const Real jitter_scale = cfg.noise_sd / std::sqrt(2.0);

  for (Index e = 0; e < cfg.n; ++e) {
    const Real progress = static_cast<Real>(e) / epoch_den;
    const Real gain = 0.5 + 1.5 * progress;
    Real memorized = 0.0;
    if (cfg.overfit_onset && e > *cfg.overfit_onset) {
      const Real span = static_cast<Real>(cfg.n - 1 - *cfg.overfit_onset);
      memorized = 0.9 * static_cast<Real>(e - *cfg.overfit_onset) / span;
    }
    for (Index w = 0; w < cfg.s; ++w) {
      for (Index i = 0; i < cfg.m; ++i) {
        const auto c = static_cast<std::size_t>(labels.labels[static_cast<std::size_t>(i)]);
        const Real vary = cfg.step_variation.empty() ? 1.0 : cfg.step_variation[c];
        const Real psi = base[c] + vary * 0.5 * pi * static_cast<Real>(w) / step_den + 0.25 * pi * progress;
        const Real cs = std::cos(psi), sn = std::sin(psi);
        auto row = t.row(e, w, i);
        for (Index k = 0; k < cfg.p; ++k) {
          const auto ks = static_cast<std::size_t>(k);
          const auto uk = static_cast<std::size_t>(i * cfg.p + k);
          // jitter is drawn unconditionally so the stream layout does not depend on noise_sd
          const Real jitter = gauss(rng);
          Real v = std::tanh(gain * (cs * z1[ks] + sn * z2[ks]));
          v += jitter_scale * (offset[uk] + jitter);
          if (memorized > 0.0) v = std::sqrt(1.0 - memorized) * v + std::sqrt(memorized) * 0.7 * memo[uk];
          row[ks] = v;
        }
      }
    }
  }
  t.metadata["generator"] = "synthetic";
  t.metadata["seed"] = std::to_string(seed);
  return {std::move(t), std::move(labels)};
}

}  // namespace mmphate
