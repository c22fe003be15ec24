#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "landmark.hpp"
#include "mds.hpp"
#include "potential.hpp"
#include "spectral.hpp"
#include "tensor.hpp"

namespace mmphate {

enum class LandmarkMode {
  off,
  /// Exact path up to the dense threshold, landmarks above it.
  automatic,
  fixed
};

inline constexpr Index kAutoLandmarkCount = 2000;

struct EmbeddingConfig {
  Index out_dims = 3;
  /// Unset selects t at the knee of the spectral entropy curve.
  std::optional<Index> t;
  Index t_max = 100;
  LandmarkMode landmark_mode = LandmarkMode::automatic;
  Index landmarks = kAutoLandmarkCount;
  Index mds_max_iter = 300;
  Real mds_rel_tol = 1e-6;
  Real log_floor = 1e-12;
  std::uint64_t seed = 0;
  Index dense_threshold = kDefaultDenseThreshold;
  /// z-score the input first; turn off only for tensors that are already normalized.
  bool zscore_input = true;
  ZscoreOptions zscore;

  void validate() const {
    require(out_dims == 2 || out_dims == 3, "out_dims must be 2 or 3");
    if (t) require(*t >= 1, "t must be a positive integer");
    require(t_max >= 3, "t_max must be >= 3");
    if (landmark_mode != LandmarkMode::off)
      require(landmarks >= out_dims + 1, "landmark count must be at least out_dims + 1");
    require(mds_max_iter >= 0, "mds_max_iter must be >= 0");
    require(mds_rel_tol >= 0.0, "mds_rel_tol must be >= 0");
    require(log_floor > 0.0, "log_floor must be positive");
  }
};

struct Embedding {
  /// One row per node in (epoch, step, unit) order.
  Matrix coords;
  Index n_epochs = 0, n_steps = 0, n_units = 0;
  std::vector<Index> epoch_ids;
  std::vector<Index> step_ids;
  Index t = 0;
  bool t_auto = false;
  bool t_fallback = false;
  Real stress = 0.0;
  std::vector<Real> stress_trace;
  std::vector<Real> vn_entropy;
  /// 0 when the exact path ran.
  Index landmarks_used = 0;
  Real epsilon = 0.0;

  Index size() const noexcept { return n_epochs * n_steps * n_units; }
  Index dims() const noexcept { return coords.cols(); }
  Index flat(Index epoch, Index step, Index unit) const noexcept {
    return (epoch * n_steps + step) * n_units + unit;
  }
  NodeIndex node(Index f) const noexcept {
    return {f / (n_steps * n_units), (f / n_units) % n_steps, f % n_units};
  }
};

/// Embeds an operator (exact or landmark) with t selection, potential distances and MDS.
struct OperatorEmbedding {
  Matrix coords;
  Index t = 0;
  bool t_fallback = false;
  std::vector<Real> vn_entropy;
  SmacofResult smacof;
};

inline OperatorEmbedding embed_operator(const DiffusionOperator& op, const EmbeddingConfig& cfg) {
  OperatorEmbedding out;
  out.vn_entropy = annotate("t selection", [&] { return vn_entropy_curve(op, cfg.t_max); });
  if (cfg.t) {
    out.t = *cfg.t;
  } else {
    const auto sel = select_t(out.vn_entropy);
    out.t = sel.t;
    out.t_fallback = sel.fallback;
  }
  const Matrix dist = annotate("potential distances", [&] {
    return potential_distances(op.transition, out.t, cfg.log_floor, cfg.dense_threshold);
  });
  const Index dims = std::min<Index>(cfg.out_dims, dist.rows());
  Matrix init = annotate("classical mds", [&] { return classical_mds(dist, dims); });
  if (dims < cfg.out_dims) {
    Matrix padded = Matrix::Zero(init.rows(), cfg.out_dims);
    padded.leftCols(dims) = init;
    init = padded;
  }
  out.smacof = annotate("smacof", [&] {
    return smacof(dist, init, SmacofConfig{cfg.mds_max_iter, cfg.mds_rel_tol});
  });
  out.coords = out.smacof.coords;
  return out;
}

inline Embedding embed(const ActivationTensor& raw, const KernelParams& params, const EmbeddingConfig& cfg) {
  cfg.validate();
  annotate("input", [&] { raw.validate(); });
  const ActivationTensor t = cfg.zscore_input ? annotate("zscore", [&] { return zscore(raw, cfg.zscore); }) : raw;

  const MultisliceKernel kernel = annotate("kernel", [&] { return assemble_multislice(t, params); });
  const DiffusionOperator op = annotate("diffusion", [&] { return to_diffusion(kernel); });
  const Index N = op.size();

  Index L = 0;
  if (cfg.landmark_mode == LandmarkMode::fixed)
    L = std::min(cfg.landmarks, N);
  else if (cfg.landmark_mode == LandmarkMode::automatic && N > cfg.dense_threshold)
    L = std::min(cfg.landmarks, N);
  if (L == 0 && N > cfg.dense_threshold)
    fail(ErrorKind::validation, "potential distances: " + std::to_string(N) +
                                    " nodes exceed the dense limit of " + std::to_string(cfg.dense_threshold) +
                                    "; enable landmarks");

  Embedding e;
  e.n_epochs = t.n_epochs();
  e.n_steps = t.n_steps();
  e.n_units = t.n_units();
  e.epoch_ids = t.epoch_ids();
  e.step_ids = t.step_ids();
  e.epsilon = kernel.epsilon;
  e.t_auto = !cfg.t.has_value();

  OperatorEmbedding oe;
  if (L > 0) {
    const LandmarkOperator lm = annotate("landmarks", [&] { return landmark_compress(op, L, cfg.seed); });
    oe = embed_operator(lm.landmark, cfg);
    e.coords = lm.transitions * oe.coords;
    e.landmarks_used = L;
  } else {
    oe = embed_operator(op, cfg);
    e.coords = oe.coords;
  }
  e.t = oe.t;
  e.t_fallback = oe.t_fallback;
  e.vn_entropy = std::move(oe.vn_entropy);
  e.stress_trace = std::move(oe.smacof.stress_trace);
  e.stress = e.stress_trace.back();
  if (!e.coords.allFinite()) fail(ErrorKind::numerical, "embedding produced non-finite coordinates");
  return e;
}

// ---------------------------------------------------------------------------
// coordinate CSV

namespace detail {

inline void append_real(std::string& out, Real v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace detail

/// `epoch,step,unit,x,y[,z]` with original epoch/step ids; an optional per-node value
/// column is appended when `values` is given.
inline std::string coords_csv(const Embedding& e, const std::vector<Real>* values = nullptr) {
  std::string out = e.dims() == 3 ? "epoch,step,unit,x,y,z" : "epoch,step,unit,x,y";
  if (values) out += ",value";
  out += '\n';
  for (Index f = 0; f < e.size(); ++f) {
    const NodeIndex at = e.node(f);
    out += std::to_string(e.epoch_ids[static_cast<std::size_t>(at.epoch)]) + ',' +
           std::to_string(e.step_ids[static_cast<std::size_t>(at.step)]) + ',' + std::to_string(at.unit);
    for (Index c = 0; c < e.dims(); ++c) {
      out += ',';
      detail::append_real(out, e.coords(f, c));
    }
    if (values) {
      out += ',';
      detail::append_real(out, (*values)[static_cast<std::size_t>(f)]);
    }
    out += '\n';
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::io, "cannot open " + path + " for writing");
  os << text;
  if (!os) fail(ErrorKind::io, "write failed for " + path);
}

/// Rebuilds the node grid from a coordinate CSV. Rows may come in any order but must
/// cover every (epoch, step, unit) combination exactly once.
inline Embedding read_coords_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::io, path + ": empty file");
  Index dims = 0;
  if (line.rfind("epoch,step,unit,x,y,z", 0) == 0)
    dims = 3;
  else if (line.rfind("epoch,step,unit,x,y", 0) == 0)
    dims = 2;
  else
    fail(ErrorKind::io, path + ": unexpected header '" + line + "'");

  struct Row {
    Index epoch, step, unit;
    Real x[3];
  };
  std::vector<Row> rows;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<Index>(cells.size()) < 3 + dims)
      fail(ErrorKind::io, path + ":" + std::to_string(lineno) + ": too few columns");
    Row r{};
    try {
      r.epoch = std::stoll(cells[0]);
      r.step = std::stoll(cells[1]);
      r.unit = std::stoll(cells[2]);
      for (Index c = 0; c < dims; ++c) r.x[c] = std::stod(cells[static_cast<std::size_t>(3 + c)]);
    } catch (const std::exception&) {
      fail(ErrorKind::io, path + ":" + std::to_string(lineno) + ": malformed number");
    }
    rows.push_back(r);
  }
  std::vector<Index> epochs, steps;
  Index units = 0;
  for (const auto& r : rows) {
    epochs.push_back(r.epoch);
    steps.push_back(r.step);
    units = std::max(units, r.unit + 1);
  }
  std::sort(epochs.begin(), epochs.end());
  epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());

  Embedding e;
  e.n_epochs = static_cast<Index>(epochs.size());
  e.n_steps = static_cast<Index>(steps.size());
  e.n_units = units;
  e.epoch_ids = epochs;
  e.step_ids = steps;
  if (static_cast<Index>(rows.size()) != e.size() || e.size() == 0)
    fail(ErrorKind::io, path + ": rows do not form a complete epoch x step x unit grid");
  e.coords = Matrix::Zero(e.size(), dims);
  std::vector<bool> seen(static_cast<std::size_t>(e.size()), false);
  for (const auto& r : rows) {
    const Index ei = std::lower_bound(epochs.begin(), epochs.end(), r.epoch) - epochs.begin();
    const Index si = std::lower_bound(steps.begin(), steps.end(), r.step) - steps.begin();
    if (r.unit < 0) fail(ErrorKind::io, path + ": negative unit id");
    const Index f = e.flat(ei, si, r.unit);
    if (seen[static_cast<std::size_t>(f)]) fail(ErrorKind::io, path + ": duplicate node row");
    seen[static_cast<std::size_t>(f)] = true;
    for (Index c = 0; c < dims; ++c) e.coords(f, c) = r.x[c];
  }
  return e;
}

}  // namespace mmphate
