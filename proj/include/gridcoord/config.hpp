#pragma once

// Run configuration. A JSON object supplies values by key; the command line
// builds the same kind of object from its flags and is applied second, so
// flags win. Keys:
//
//   epsilon consensus_tol consensus_tol_rad rel_gap alpha0 nu0 beta
//   flow_mode angle_residual schedule skip_prob seed staleness
//   eps_app eta gamma delta_app
//   max_iter (both stages) max_iter_stage1 max_iter_stage2
//   u convention bribe out

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/errors.hpp"
#include "gridcoord/gametool.hpp"
#include "gridcoord/runtime.hpp"

namespace gridcoord {

struct RunConfig {
  std::string command;
  std::string case_path;
  std::string out_dir = ".";
  PipelineConfig algo;
  std::optional<std::vector<int>> u;  // build vector for stage2
  PayoffConvention convention;

  void validate() const {
    algo.stage1.validate();
    algo.stage2.validate();
  }
};

/// "1,0,1" -> {1,0,1}; an empty string is the empty vector.
inline std::vector<int> parse_build_vector(const std::string& text) {
  std::vector<int> u;
  if (text.empty()) return u;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item != "0" && item != "1") throw DomainError("build vector entries must be 0 or 1, got '" + item + "'");
    u.push_back(item == "1");
  }
  if (text.back() == ',') throw DomainError("build vector has a trailing comma");
  return u;
}

namespace detail {

template <class T>
T config_value(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DomainError("config: key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline void apply_config(RunConfig& rc, const nlohmann::json& j) {
  if (!j.is_object()) throw DomainError("config: expected a JSON object");
  auto& s1 = rc.algo.stage1;
  auto& s2 = rc.algo.stage2;
  std::optional<int> it1, it2;
  for (const auto& [key, v] : j.items()) {
    auto num = [&] { return detail::config_value<double>(v, key); };
    auto str = [&] { return detail::config_value<std::string>(v, key); };
    auto integer = [&] { return detail::config_value<long long>(v, key); };
    if (key == "epsilon") s1.epsilon = num();
    else if (key == "consensus_tol") s1.consensus_tol_mw = num();
    else if (key == "consensus_tol_rad") s1.consensus_tol_rad = num();
    else if (key == "rel_gap") s1.rel_gap = num();
    else if (key == "alpha0") s1.alpha0 = num();
    else if (key == "nu0") s1.nu0 = num();
    else if (key == "beta") s1.beta = num();
    else if (key == "flow_mode") s1.flow_mode = flow_mode_from_string(str());
    else if (key == "angle_residual") s1.angle_residual = angle_residual_from_string(str());
    else if (key == "schedule") s1.schedule.mode = schedule_mode_from_string(str());
    else if (key == "skip_prob") s1.schedule.skip_probability = num();
    else if (key == "seed") s1.schedule.seed = static_cast<std::uint64_t>(integer());
    else if (key == "staleness") s1.schedule.staleness = static_cast<int>(integer());
    else if (key == "eps_app") s2.epsilon = num();
    else if (key == "eta") s2.eta = num();
    else if (key == "gamma") s2.gamma = num();
    else if (key == "delta_app") s2.delta = num();
    else if (key == "max_iter") s1.max_iter = s2.max_iter = static_cast<int>(integer());
    else if (key == "max_iter_stage1") it1 = static_cast<int>(integer());
    else if (key == "max_iter_stage2") it2 = static_cast<int>(integer());
    else if (key == "u") rc.u = v.is_array() ? detail::config_value<std::vector<int>>(v, key) : parse_build_vector(str());
    else if (key == "convention") {
      const auto c = str();
      if (c == "plain") rc.convention.kind = PayoffConvention::Kind::plain;
      else if (c == "bribe") rc.convention.kind = PayoffConvention::Kind::bribe;
      else throw DomainError("config: unknown convention '" + c + "'");
    } else if (key == "bribe") {
      rc.convention.kind = PayoffConvention::Kind::bribe;
      rc.convention.bribe = num();
    } else if (key == "out") rc.out_dir = str();
    else throw DomainError("config: unknown key '" + key + "'");
  }
  // Stage-specific limits beat the shared one regardless of key order.
  if (it1) s1.max_iter = *it1;
  if (it2) s2.max_iter = *it2;
}

inline nlohmann::json read_json_file(const std::string& path, const std::string& what = "config") {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + what + " file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline nlohmann::json to_json(const RunConfig& rc) {
  const auto& s1 = rc.algo.stage1;
  const auto& s2 = rc.algo.stage2;
  nlohmann::json j{{"epsilon", s1.epsilon},
                   {"consensus_tol", s1.consensus_tol_mw},
                   {"consensus_tol_rad", s1.consensus_tol_rad},
                   {"rel_gap", s1.rel_gap},
                   {"alpha0", s1.alpha0},
                   {"nu0", s1.nu0},
                   {"flow_mode", to_string(s1.flow_mode)},
                   {"angle_residual", to_string(s1.angle_residual)},
                   {"schedule", to_string(s1.schedule.mode)},
                   {"skip_prob", s1.schedule.skip_probability},
                   {"seed", s1.schedule.seed},
                   {"staleness", s1.schedule.staleness},
                   {"eps_app", s2.epsilon},
                   {"eta", s2.eta},
                   {"gamma", s2.gamma},
                   {"delta_app", s2.delta},
                   {"max_iter_stage1", s1.max_iter},
                   {"max_iter_stage2", s2.max_iter}};
  j["beta"] = s1.beta ? nlohmann::json(*s1.beta) : nlohmann::json(nullptr);
  if (rc.u) j["u"] = *rc.u;
  return j;
}

}  // namespace gridcoord
