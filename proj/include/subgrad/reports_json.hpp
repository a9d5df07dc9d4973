#pragma once

#include <json.hpp>

#include "subgrad/diagnostics.hpp"

namespace subgrad {

using nlohmann::json;

// JSON forms of the diagnostic reports, each carrying a schema_version so
// downstream consumers can detect layout changes.

inline json to_json(const CriticalityReport& r) {
  json j{{"schema_version", 1},
         {"kind", "criticality"},
         {"w", r.w.coords()},
         {"residual", r.residual},
         {"se_budget", r.se_budget}};
  if (r.clarke_residual) j["clarke_residual"] = *r.clarke_residual;
  return j;
}

inline json to_json(const OccupationReport& r) {
  json centers = json::array();
  for (const auto& c : r.centers) centers.push_back(c.coords());
  json masses = json::array();
  for (const auto& per_center : r.masses) {
    json per_radius = json::array();
    for (const auto& m : per_center)
      per_radius.push_back({{"half_k", m[0]}, {"three_quarter_k", m[1]}, {"final_k", m[2]}});
    masses.push_back(per_radius);
  }
  return json{{"schema_version", 1},
              {"kind", "occupation"},
              {"centers", centers},
              {"radii", r.radii},
              {"masses", masses},
              {"persistent_mass_threshold", OccupationReport::kPersistentMass}};
}

inline json to_json(const ChainRuleReport& r) {
  return json{{"schema_version", 1}, {"kind", "chain_rule"}, {"lhs", r.lhs},
              {"rhs", r.rhs},        {"gap", r.gap},         {"se", r.se},
              {"tol", r.tol},        {"pass", r.pass}};
}

inline json to_json(const InterchangeReport& r) {
  return json{{"schema_version", 1}, {"kind", "interchange"}, {"lhs", r.lhs},
              {"rhs", r.rhs},        {"se", r.se},            {"tol", r.tol},
              {"pass", r.pass}};
}

inline json to_json(const SemismoothnessReport& r) {
  return json{{"schema_version", 1},
              {"kind", "semismoothness"},
              {"residuals", r.residuals},
              {"max_tail", r.max_tail},
              {"violated", r.violated},
              {"witness", r.witness}};
}

}  // namespace subgrad
