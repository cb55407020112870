#pragma once

// Solve-report emission.
//
// The JSON report holds everything needed to audit a run — method, outcome,
// final weights, the four portfolio moments those weights actually deliver,
// feasibility against the true constraints, stationarity, and an echo of
// the effective configuration.  It deliberately contains no wall-clock
// numbers, so a repeated run writes a byte-identical file.  Timing lives in
// the per-iteration trace CSV, which is plot-ready and documented as
// machine-dependent.

#include <charconv>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hop/moments.hpp"
#include "hop/sca.hpp"
#include "hop/types.hpp"

namespace hop {

/// Shortest round-trip decimal form of v (the same digits to_chars picks).
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Assemble the report document for a finished solve.
inline nlohmann::json report_json(const SolveReport& rep, const MomentSet& m,
                                  const std::string& kind, const std::string& method,
                                  const std::map<std::string, std::string>& config_echo) {
  const PortfolioMoments pm = portfolio_moments(rep.w, m);
  nlohmann::json j;
  j["kind"] = kind;
  j["method"] = method;
  j["termination"] = to_string(rep.termination);
  j["iterations"] = rep.iterations;
  j["objective"] = rep.objective;
  j["delta"] = rep.delta;
  std::vector<double> w(rep.w.data(), rep.w.data() + rep.w.size());
  j["weights"] = w;
  j["moments"] = {{"mean", pm.phi1},
                  {"variance", pm.phi2},
                  {"skewness", pm.phi3},
                  {"kurtosis", pm.phi4}};
  j["feasibility"] = rep.feasibility;
  j["stationarity"] = rep.stationarity;
  j["subsolver_calls"] = rep.subsolver_calls;
  j["config"] = config_echo;
  return j;
}

inline void write_report_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write to '" + path + "' failed");
}

/// One row per iterate, k = 0 being the starting point.  wall_ms varies
/// between runs; every other column is deterministic.
inline void write_trace_csv(const std::vector<IterationRecord>& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "k,objective,gamma,eta,max_violation,stationarity,wall_ms\n";
  for (const IterationRecord& r : trace) {
    out << r.k << ',' << format_double(r.objective) << ',' << format_double(r.gamma) << ','
        << format_double(r.eta) << ',' << format_double(r.max_violation) << ','
        << format_double(r.stationarity) << ',' << format_double(r.wall_ms) << '\n';
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace hop
