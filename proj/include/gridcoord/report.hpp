#pragma once

// Trace tables and result files in their on-disk formats.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "gridcoord/canonical.hpp"
#include "gridcoord/errors.hpp"
#include "gridcoord/stage1.hpp"
#include "gridcoord/stage2.hpp"

namespace gridcoord {

/// 12 significant digits; inf, -inf and nan spelled out.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", round12(v));
  return buf;
}

inline void write_stage1_trace(std::ostream& os, const std::vector<Stage1TraceRow>& rows) {
  os << "nu,region,u_prop,u_tpc,LB,UB,gap\n";
  for (const auto& r : rows) {
    os << r.nu << ',' << r.region << ',' << r.u_prop << ',' << r.u_tpc << ',' << format_number(r.lb) << ','
       << format_number(r.ub) << ',' << format_number(r.gap) << '\n';
  }
}

inline void write_stage2_trace(std::ostream& os, const std::vector<Stage2TraceRow>& rows) {
  os << "sigma,max_residual,objective\n";
  for (const auto& r : rows) {
    os << r.sigma << ',' << format_number(r.max_residual) << ',' << format_number(r.objective) << '\n';
  }
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

/// Pretty-printed canonical JSON followed by a newline.
inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << canonical_dump(j, 2) << '\n';
}

}  // namespace gridcoord
