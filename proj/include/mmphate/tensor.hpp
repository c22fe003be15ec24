#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace mmphate {

/// Position of one graph node: a hidden unit at a given epoch and time-step slot.
struct NodeIndex {
  Index epoch = 0;
  Index step = 0;
  Index unit = 0;
  bool operator==(const NodeIndex&) const = default;
};

inline std::string to_string(const NodeIndex& v) {
  return "(epoch " + std::to_string(v.epoch) + ", step " + std::to_string(v.step) + ", unit " +
         std::to_string(v.unit) + ")";
}

/// Activations over epochs x time-steps x units x probe samples, stored row-major with
/// the epoch axis slowest. Slot indices are 0-based positions; epoch_ids / step_ids keep
/// the original indices when the tensor is a subsample.
class ActivationTensor {
public:
  ActivationTensor() = default;

  ActivationTensor(Index n_epochs, Index n_steps, Index n_units, Index n_samples)
      : n_(n_epochs), s_(n_steps), m_(n_units), p_(n_samples) {
    require(n_ > 0 && s_ > 0 && m_ > 0 && p_ > 0, "tensor dimensions must all be positive");
    values_.assign(static_cast<std::size_t>(n_ * s_ * m_ * p_), 0.0);
    epoch_ids_.resize(static_cast<std::size_t>(n_));
    step_ids_.resize(static_cast<std::size_t>(s_));
    std::iota(epoch_ids_.begin(), epoch_ids_.end(), Index{0});
    std::iota(step_ids_.begin(), step_ids_.end(), Index{0});
  }

  Index n_epochs() const noexcept { return n_; }
  Index n_steps() const noexcept { return s_; }
  Index n_units() const noexcept { return m_; }
  Index n_samples() const noexcept { return p_; }
  Index n_nodes() const noexcept { return n_ * s_ * m_; }
  Index n_slabs() const noexcept { return n_ * s_; }

  Index flat_node(Index epoch, Index step, Index unit) const noexcept {
    return (epoch * s_ + step) * m_ + unit;
  }
  NodeIndex node(Index flat) const noexcept {
    return {flat / (s_ * m_), (flat / m_) % s_, flat % m_};
  }

  std::span<const Real> row(Index epoch, Index step, Index unit) const noexcept {
    return {values_.data() + flat_node(epoch, step, unit) * p_, static_cast<std::size_t>(p_)};
  }
  std::span<Real> row(Index epoch, Index step, Index unit) noexcept {
    return {values_.data() + flat_node(epoch, step, unit) * p_, static_cast<std::size_t>(p_)};
  }
  /// Row of node `flat` in node order.
  std::span<const Real> row(Index flat) const noexcept {
    return {values_.data() + flat * p_, static_cast<std::size_t>(p_)};
  }

  Real& at(Index epoch, Index step, Index unit, Index sample) noexcept {
    return values_[static_cast<std::size_t>(flat_node(epoch, step, unit) * p_ + sample)];
  }
  Real at(Index epoch, Index step, Index unit, Index sample) const noexcept {
    return values_[static_cast<std::size_t>(flat_node(epoch, step, unit) * p_ + sample)];
  }

  const std::vector<Real>& values() const noexcept { return values_; }
  std::vector<Real>& values() noexcept { return values_; }

  const std::vector<Index>& epoch_ids() const noexcept { return epoch_ids_; }
  const std::vector<Index>& step_ids() const noexcept { return step_ids_; }
  void set_epoch_ids(std::vector<Index> ids) {
    require(ids.size() == static_cast<std::size_t>(n_), "epoch_ids length must equal n");
    require(std::adjacent_find(ids.begin(), ids.end(), std::greater_equal<>()) == ids.end(),
            "epoch_ids must be strictly increasing");
    epoch_ids_ = std::move(ids);
  }
  void set_step_ids(std::vector<Index> ids) {
    require(ids.size() == static_cast<std::size_t>(s_), "step_ids length must equal s");
    require(std::adjacent_find(ids.begin(), ids.end(), std::greater_equal<>()) == ids.end(),
            "step_ids must be strictly increasing");
    step_ids_ = std::move(ids);
  }

  std::map<std::string, std::string> metadata;

  bool empty() const noexcept { return values_.empty(); }

  /// Throws on the first invariant violation.
  void validate() const {
    require(n_ > 0 && s_ > 0 && m_ > 0 && p_ > 0, "tensor has a zero-sized dimension");
    require(values_.size() == static_cast<std::size_t>(n_ * s_ * m_ * p_),
            "tensor value count does not match n*s*m*p");
    for (std::size_t k = 0; k < values_.size(); ++k)
      if (!std::isfinite(values_[k]))
        fail(ErrorKind::validation, "non-finite tensor value at flat index " + std::to_string(k));
  }

  bool operator==(const ActivationTensor& o) const {
    return n_ == o.n_ && s_ == o.s_ && m_ == o.m_ && p_ == o.p_ && epoch_ids_ == o.epoch_ids_ &&
           step_ids_ == o.step_ids_ && metadata == o.metadata &&
           std::equal(values_.begin(), values_.end(), o.values_.begin(), o.values_.end(),
                      [](Real a, Real b) {
                        return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
                      });
  }

private:
  Index n_ = 0, s_ = 0, m_ = 0, p_ = 0;
  std::vector<Real> values_;
  std::vector<Index> epoch_ids_;
  std::vector<Index> step_ids_;
};

/// Per-unit community ids, contiguous from 0.
struct CommunityLabels {
  std::vector<int> labels;

  int n_communities() const {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  }
  void validate() const {
    const int c = n_communities();
    std::vector<bool> seen(static_cast<std::size_t>(c), false);
    for (int l : labels) {
      require(l >= 0, "community labels must be non-negative");
      seen[static_cast<std::size_t>(l)] = true;
    }
    require(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }),
            "community labels must be contiguous from 0");
  }
};

// ---------------------------------------------------------------------------
// subsampling

struct AllIndices {};
struct ExplicitIndices {
  std::vector<Index> indices;
};
/// Every index below `head`, then every `stride`-th index from `head` on.
struct DenseHead {
  Index head = 29;
  Index stride = 5;
};
/// `count` evenly spaced indices from 0 to the last one, inclusive.
struct LinearSpacing {
  Index count = 100;
};

struct SubsampleSpec {
  std::variant<AllIndices, ExplicitIndices, DenseHead> epochs = AllIndices{};
  std::variant<AllIndices, ExplicitIndices, LinearSpacing> steps = AllIndices{};
};

namespace detail {

inline std::vector<Index> sorted_unique(std::vector<Index> v, Index extent, const char* axis) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  for (Index i : v)
    if (i < 0 || i >= extent)
      fail(ErrorKind::validation, std::string(axis) + " index " + std::to_string(i) +
                                      " out of range [0, " + std::to_string(extent) + ")");
  return v;
}

inline std::vector<Index> all_of(Index extent) {
  std::vector<Index> v(static_cast<std::size_t>(extent));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

}  // namespace detail

inline std::vector<Index> select_indices(const std::variant<AllIndices, ExplicitIndices, DenseHead>& sel,
                                         Index extent) {
  std::vector<Index> out;
  if (std::holds_alternative<AllIndices>(sel)) {
    out = detail::all_of(extent);
  } else if (auto* e = std::get_if<ExplicitIndices>(&sel)) {
    out = e->indices;
  } else {
    const auto& d = std::get<DenseHead>(sel);
    require(d.head >= 0 && d.stride >= 1, "dense-head selector needs head >= 0 and stride >= 1");
    for (Index i = 0; i < std::min(d.head, extent); ++i) out.push_back(i);
    for (Index i = d.head; i < extent; i += d.stride) out.push_back(i);
  }
  return detail::sorted_unique(std::move(out), extent, "epoch");
}

inline std::vector<Index> select_indices(
    const std::variant<AllIndices, ExplicitIndices, LinearSpacing>& sel, Index extent) {
  std::vector<Index> out;
  if (std::holds_alternative<AllIndices>(sel)) {
    out = detail::all_of(extent);
  } else if (auto* e = std::get_if<ExplicitIndices>(&sel)) {
    out = e->indices;
  } else {
    const Index c = std::get<LinearSpacing>(sel).count;
    require(c >= 1, "linear spacing needs at least one point");
    if (c == 1 || extent == 1) {
      out.push_back(0);
    } else {
      for (Index j = 0; j < c; ++j)
        out.push_back(static_cast<Index>(
            std::llround(static_cast<double>(j) * static_cast<double>(extent - 1) /
                         static_cast<double>(c - 1))));
    }
  }
  return detail::sorted_unique(std::move(out), extent, "step");
}

inline ActivationTensor subsample(const ActivationTensor& t, const SubsampleSpec& spec) {
  const auto ep = select_indices(spec.epochs, t.n_epochs());
  const auto st = select_indices(spec.steps, t.n_steps());
  if (ep.empty() || st.empty()) fail(ErrorKind::validation, "subsample selection is empty");

  ActivationTensor out(static_cast<Index>(ep.size()), static_cast<Index>(st.size()), t.n_units(),
                       t.n_samples());
  for (std::size_t a = 0; a < ep.size(); ++a)
    for (std::size_t b = 0; b < st.size(); ++b)
      for (Index i = 0; i < t.n_units(); ++i) {
        auto src = t.row(ep[a], st[b], i);
        std::copy(src.begin(), src.end(),
                  out.row(static_cast<Index>(a), static_cast<Index>(b), i).begin());
      }
  std::vector<Index> eids, sids;
  for (Index e : ep) eids.push_back(t.epoch_ids()[static_cast<std::size_t>(e)]);
  for (Index s : st) sids.push_back(t.step_ids()[static_cast<std::size_t>(s)]);
  out.set_epoch_ids(std::move(eids));
  out.set_step_ids(std::move(sids));
  out.metadata = t.metadata;
  return out;
}

// ---------------------------------------------------------------------------
// per-row z-scoring

struct ZscoreOptions {
  /// Map zero-variance rows to zeros instead of failing.
  bool zero_degenerate = false;
};

/// Each (epoch, step, unit) row over the probe samples is centered and divided by its
/// population standard deviation (divisor p).
inline ActivationTensor zscore(const ActivationTensor& t, const ZscoreOptions& opts = {},
                               std::vector<NodeIndex>* degenerate_rows = nullptr) {
  ActivationTensor out = t;
  const Index p = t.n_samples();
  for (Index f = 0; f < t.n_nodes(); ++f) {
    auto src = t.row(f);
    Real mean = 0.0;
    Real peak = 0.0;
    for (Real v : src) {
      mean += v;
      peak = std::max(peak, std::abs(v));
    }
    mean /= static_cast<Real>(p);
    Real var = 0.0;
    for (Real v : src) var += (v - mean) * (v - mean);
    var /= static_cast<Real>(p);
    const Real sd = std::sqrt(var);
    const NodeIndex at = t.node(f);
    auto dst = out.row(at.epoch, at.step, at.unit);
    if (!(sd > 1e-12 * peak)) {
      if (!opts.zero_degenerate)
        fail(ErrorKind::numerical, "zero-variance activation row at " + to_string(at));
      std::fill(dst.begin(), dst.end(), 0.0);
      if (degenerate_rows) degenerate_rows->push_back(at);
      continue;
    }
    for (Index k = 0; k < p; ++k) dst[static_cast<std::size_t>(k)] = (src[static_cast<std::size_t>(k)] - mean) / sd;
  }
  return out;
}

// ---------------------------------------------------------------------------
// MMT1 files

enum class StorageType : std::uint8_t { f32 = 1, f64 = 2 };

/// Header fields of an MMT1 file, as read without the payload.
struct Mmt1Header {
  std::uint32_t version = 1;
  StorageType dtype = StorageType::f64;
  std::uint64_t n = 0, s = 0, m = 0, p = 0;
  std::uint64_t metadata_len = 0;
};

namespace detail {

inline constexpr char kMagic[4] = {'M', 'M', 'T', '1'};
inline constexpr std::size_t kHeaderBytes = 4 + 4 + 1 + 3 + 4 * 8 + 8;

template <typename T>
void put_le(std::string& buf, T v) {
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  buf.append(reinterpret_cast<const char*>(bits.data()), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  std::array<unsigned char, sizeof(T)> bits;
  std::memcpy(bits.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

inline bool is_identity(const std::vector<Index>& ids) {
  for (std::size_t k = 0; k < ids.size(); ++k)
    if (ids[k] != static_cast<Index>(k)) return false;
  return true;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline Mmt1Header parse_header(const std::string& bytes, const std::string& path) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(ErrorKind::io, path + ": bad magic (expected MMT1)");
  if (bytes.size() < kHeaderBytes) fail(ErrorKind::io, path + ": truncated header");
  Mmt1Header h;
  const char* p = bytes.data() + 4;
  h.version = get_le<std::uint32_t>(p);
  if (h.version != 1)
    fail(ErrorKind::io, path + ": unsupported MMT1 version " + std::to_string(h.version));
  const auto dt = static_cast<std::uint8_t>(p[4]);
  if (dt != 1 && dt != 2) fail(ErrorKind::io, path + ": unsupported dtype code " + std::to_string(dt));
  h.dtype = static_cast<StorageType>(dt);
  p += 8;
  h.n = get_le<std::uint64_t>(p);
  h.s = get_le<std::uint64_t>(p + 8);
  h.m = get_le<std::uint64_t>(p + 16);
  h.p = get_le<std::uint64_t>(p + 24);
  h.metadata_len = get_le<std::uint64_t>(p + 32);
  return h;
}

}  // namespace detail

inline std::string metadata_json(const ActivationTensor& t) {
  if (t.metadata.empty() && detail::is_identity(t.epoch_ids()) && detail::is_identity(t.step_ids()))
    return {};
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : t.metadata) j[k] = v;
  if (!detail::is_identity(t.epoch_ids())) j["epoch_ids"] = t.epoch_ids();
  if (!detail::is_identity(t.step_ids())) j["step_ids"] = t.step_ids();
  return j.dump();
}

inline void save_tensor(const ActivationTensor& t, const std::string& path,
                        StorageType precision = StorageType::f64) {
  if (t.empty()) fail(ErrorKind::validation, "refusing to save a zero-sized tensor");
  t.validate();
  const std::string meta = metadata_json(t);
  std::string buf;
  const std::size_t width = precision == StorageType::f32 ? 4 : 8;
  buf.reserve(detail::kHeaderBytes + meta.size() + t.values().size() * width);
  buf.append(detail::kMagic, 4);
  detail::put_le<std::uint32_t>(buf, 1);
  buf.push_back(static_cast<char>(precision));
  buf.append(3, '\0');
  for (Index d : {t.n_epochs(), t.n_steps(), t.n_units(), t.n_samples()})
    detail::put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(d));
  detail::put_le<std::uint64_t>(buf, meta.size());
  buf += meta;
  if (precision == StorageType::f32) {
    for (Real v : t.values()) detail::put_le<float>(buf, static_cast<float>(v));
  } else {
    for (Real v : t.values()) detail::put_le<double>(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorKind::io, "write failed for " + path);
}

/// Header and metadata only; values are not read.
inline std::pair<Mmt1Header, std::string> read_tensor_header(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  auto h = detail::parse_header(bytes, path);
  if (bytes.size() < detail::kHeaderBytes + h.metadata_len)
    fail(ErrorKind::io, path + ": truncated metadata block");
  return {h, bytes.substr(detail::kHeaderBytes, h.metadata_len)};
}

inline ActivationTensor load_tensor(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  const auto h = detail::parse_header(bytes, path);
  if (h.n == 0 || h.s == 0 || h.m == 0 || h.p == 0)
    fail(ErrorKind::io, path + ": zero-sized dimension in header");
  const std::uint64_t count = h.n * h.s * h.m * h.p;
  const std::uint64_t width = h.dtype == StorageType::f32 ? 4 : 8;
  const std::uint64_t expect = detail::kHeaderBytes + h.metadata_len + count * width;
  if (bytes.size() != expect)
    fail(ErrorKind::io, path + ": truncated payload (declared " + std::to_string(expect) +
                            " bytes, found " + std::to_string(bytes.size()) + ")");

  ActivationTensor t(static_cast<Index>(h.n), static_cast<Index>(h.s), static_cast<Index>(h.m),
                     static_cast<Index>(h.p));
  if (h.metadata_len > 0) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin() + detail::kHeaderBytes,
                                bytes.begin() + static_cast<std::ptrdiff_t>(detail::kHeaderBytes + h.metadata_len));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::io, path + ": metadata is not valid JSON: " + e.what());
    }
    if (!j.is_object()) fail(ErrorKind::io, path + ": metadata must be a JSON object");
    try {
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "epoch_ids")
          t.set_epoch_ids(it.value().get<std::vector<Index>>());
        else if (it.key() == "step_ids")
          t.set_step_ids(it.value().get<std::vector<Index>>());
        else
          t.metadata[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::io, path + ": bad metadata: " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::io, path + ": bad metadata: " + e.what());
    }
  }
  const char* payload = bytes.data() + detail::kHeaderBytes + h.metadata_len;
  auto& vals = t.values();
  for (std::uint64_t k = 0; k < count; ++k) {
    const Real v = h.dtype == StorageType::f32
                       ? static_cast<Real>(detail::get_le<float>(payload + k * 4))
                       : detail::get_le<double>(payload + k * 8);
    if (!std::isfinite(v))
      fail(ErrorKind::io, path + ": non-finite value at flat index " + std::to_string(k));
    vals[k] = v;
  }
  return t;
}

}  // namespace mmphate
