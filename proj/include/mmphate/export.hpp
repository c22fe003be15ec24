#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtw.hpp"
#include "embed.hpp"
#include "entropy.hpp"

namespace mmphate {

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_json(const EntropyCurve& c) {
  ordered_json j;
  j["kind"] = to_string(c.kind);
  j["index"] = c.index;
  j["epoch_ids"] = c.epoch_ids;
  j["values"] = c.values;
  std::vector<Index> flagged;
  for (std::size_t k = 0; k < c.degenerate.size(); ++k)
    if (c.degenerate[k]) flagged.push_back(c.epoch_ids[k]);
  j["degenerate_epochs"] = flagged;
  return j;
}

inline ordered_json to_json(const std::vector<EntropyCurve>& curves) {
  ordered_json j = ordered_json::array();
  for (const auto& c : curves) j.push_back(to_json(c));
  return j;
}

inline ordered_json to_json(const ClusterResult& r) {
  ordered_json j;
  j["assignments"] = r.assignments;
  j["barycenters"] = r.barycenters;
  j["inertia"] = r.inertia;
  j["seed"] = r.seed;
  j["iterations"] = r.iterations;
  j["inertia_trace"] = r.inertia_trace;
  return j;
}

/// Per-node curve value laid out in node order, for the CSV `value` column.
inline std::vector<Real> node_values(const Embedding& e, const std::vector<EntropyCurve>& curves) {
  std::vector<Real> v(static_cast<std::size_t>(e.size()), 0.0);
  for (Index f = 0; f < e.size(); ++f) {
    const NodeIndex at = e.node(f);
    const auto& c = curves.front().kind == EntropyKind::intra_step ? curves[static_cast<std::size_t>(at.step)]
                                                                   : curves[static_cast<std::size_t>(at.unit)];
    v[static_cast<std::size_t>(f)] = c.values[static_cast<std::size_t>(at.epoch)];
  }
  return v;
}

}  // namespace mmphate
