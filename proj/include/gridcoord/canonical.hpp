#pragma once

// Byte-stable JSON output: floats rounded to 12 significant digits,
// non-finite numbers written as null. Object keys are already sorted by
// nlohmann::json's default map.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#include <nlohmann/json.hpp>

namespace gridcoord {

inline double round12(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  const double r = std::strtod(buf, nullptr);
  return r == 0.0 ? 0.0 : r;  // drops the sign of -0
}

inline void canonicalize(nlohmann::json& j) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    j = std::isfinite(v) ? nlohmann::json(round12(v)) : nlohmann::json(nullptr);
  } else if (j.is_structured()) {
    for (auto& child : j) canonicalize(child);
  }
}

inline std::string canonical_dump(nlohmann::json j, int indent = -1) {
  canonicalize(j);
  return j.dump(indent);
}

}  // namespace gridcoord
