#pragma once

// Multi-region network data model, case-file I/O, validation and a few
// shared numeric helpers (annuity factor, incidence matrix, topology index).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/errors.hpp"

namespace gridcoord {

inline constexpr const char* kCaseFormat = "gridcoord-case/1";

struct Node {
  std::string id;
  std::string region;
};

/// One block of a convex piecewise-linear cost curve: output up to
/// `upper_mw` is priced at `marginal_cost` ($/MWh).
struct CostSegment {
  double upper_mw = 0.0;
  double marginal_cost = 0.0;
};

struct Generator {
  std::string id;
  std::string node;
  std::vector<CostSegment> cost_curve;
  double p_min = 0.0;
  double p_max = 0.0;
};

struct Load {
  std::string id;
  std::string node;
  double demand = 0.0;
};

struct ExistingLine {
  std::string id;
  std::string from;
  std::string to;
  double reactance = 0.0;
  double capacity = 0.0;
};

struct CandidateLine {
  std::string id;
  std::string from;
  std::string to;
  double reactance = 0.0;
  double capacity = 0.0;
  double build_cost = 0.0;  // total capital cost, $
  int lifetime = 1;         // years
};

struct GeneratorLimits {
  double p_min = 0.0;
  double p_max = 0.0;
};

/// Operating scenario. Loads and generator limits default to the values on
/// the element; entries here override them for this scenario only.
struct Scenario {
  std::string id;
  double weight = 1.0;  // hours
  std::map<std::string, double> demand;
  std::map<std::string, GeneratorLimits> generator_limits;
};

struct Network {
  std::string description;
  std::vector<std::string> regions;
  std::vector<Node> nodes;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<ExistingLine> existing_lines;
  std::vector<CandidateLine> candidate_lines;
  std::vector<Scenario> scenarios;
  double interest_rate = 0.05;
  double angle_bound = std::numbers::pi;

  double demand(std::size_t load, std::size_t scenario) const {
    const auto& overrides = scenarios.at(scenario).demand;
    auto it = overrides.find(loads.at(load).id);
    return it == overrides.end() ? loads[load].demand : it->second;
  }

  GeneratorLimits limits(std::size_t gen, std::size_t scenario) const {
    const auto& overrides = scenarios.at(scenario).generator_limits;
    auto it = overrides.find(generators.at(gen).id);
    if (it != overrides.end()) return it->second;
    return {generators[gen].p_min, generators[gen].p_max};
  }
};

// ---------------------------------------------------------------------------
// Numeric helpers

/// Capital recovery factor r(1+r)^T / ((1+r)^T - 1).
inline double annuity_factor(double r, int lifetime) {
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw DomainError("annuity_factor: interest rate must be > 0");
  }
  if (lifetime < 1) throw DomainError("annuity_factor: lifetime must be >= 1");
  // (1+r)^T via expm1/log1p keeps precision for small r and large T.
  const double growth_minus_one = std::expm1(lifetime * std::log1p(r));
  if (!std::isfinite(growth_minus_one)) return r;
  return r + r / growth_minus_one;  // = r(1+r)^T / ((1+r)^T - 1), monotone in T after rounding
}

/// Annualized investment charge of one candidate line.
inline double annualized_cost(const Network& net, const CandidateLine& k) {
  return k.build_cost * annuity_factor(net.interest_rate, k.lifetime);
}

// ---------------------------------------------------------------------------
// Topology index: integer views of the string-keyed network.

struct Branch {
  int from = -1;
  int to = -1;
  double reactance = 0.0;
  double capacity = 0.0;
  int from_region = -1;
  int to_region = -1;
  bool shared() const { return from_region != to_region; }
  /// Regions holding a stake in this branch (one or two, sorted).
  std::vector<int> stakeholders() const {
    if (!shared()) return {from_region};
    return {std::min(from_region, to_region), std::max(from_region, to_region)};
  }
  bool touches(int region) const { return from_region == region || to_region == region; }
};

/// Resolved, index-based view of a Network. Throws ReferenceError for ids
/// that do not resolve.
class NetworkIndex {
 public:
  explicit NetworkIndex(const Network& net) : net_(&net) {
    std::unordered_map<std::string, int> region_of;
    for (std::size_t r = 0; r < net.regions.size(); ++r) region_of[net.regions[r]] = static_cast<int>(r);
    for (std::size_t n = 0; n < net.nodes.size(); ++n) {
      auto it = region_of.find(net.nodes[n].region);
      if (it == region_of.end()) {
        throw ReferenceError("nodes[" + std::to_string(n) + "].region: unknown region '" +
                             net.nodes[n].region + "'");
      }
      node_index_[net.nodes[n].id] = static_cast<int>(n);
      node_region_.push_back(it->second);
    }
    region_nodes_.resize(net.regions.size());
    for (std::size_t n = 0; n < net.nodes.size(); ++n) region_nodes_[node_region_[n]].push_back(static_cast<int>(n));

    gens_at_.resize(net.nodes.size());
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
      int n = node("generators[" + std::to_string(g) + "].node", net.generators[g].node);
      gen_node_.push_back(n);
      gens_at_[n].push_back(static_cast<int>(g));
    }
    loads_at_.resize(net.nodes.size());
    for (std::size_t d = 0; d < net.loads.size(); ++d) {
      int n = node("loads[" + std::to_string(d) + "].node", net.loads[d].node);
      load_node_.push_back(n);
      loads_at_[n].push_back(static_cast<int>(d));
    }
    for (std::size_t h = 0; h < net.existing_lines.size(); ++h) {
      const auto& l = net.existing_lines[h];
      const std::string path = "existing_lines[" + std::to_string(h) + "]";
      existing_.push_back(make_branch(node(path + ".from", l.from), node(path + ".to", l.to),
                                      l.reactance, l.capacity));
    }
    for (std::size_t k = 0; k < net.candidate_lines.size(); ++k) {
      const auto& l = net.candidate_lines[k];
      const std::string path = "candidate_lines[" + std::to_string(k) + "]";
      candidates_.push_back(make_branch(node(path + ".from", l.from), node(path + ".to", l.to),
                                        l.reactance, l.capacity));
    }
  }

  const Network& net() const { return *net_; }
  int num_regions() const { return static_cast<int>(net_->regions.size()); }
  int num_nodes() const { return static_cast<int>(net_->nodes.size()); }
  int num_scenarios() const { return static_cast<int>(net_->scenarios.size()); }

  int node(const std::string& id) const {
    auto it = node_index_.find(id);
    if (it == node_index_.end()) throw ReferenceError("unknown node '" + id + "'");
    return it->second;
  }
  int region_of_node(int n) const { return node_region_[n]; }
  int region_of_generator(int g) const { return node_region_[gen_node_[g]]; }
  int generator_node(int g) const { return gen_node_[g]; }
  int load_node(int d) const { return load_node_[d]; }
  const std::vector<int>& region_nodes(int z) const { return region_nodes_[z]; }
  const std::vector<int>& generators_at(int n) const { return gens_at_[n]; }
  const std::vector<int>& loads_at(int n) const { return loads_at_[n]; }
  const std::vector<Branch>& existing() const { return existing_; }
  const std::vector<Branch>& candidates() const { return candidates_; }

  double node_demand(int n, int s) const {
    double total = 0.0;
    for (int d : loads_at_[n]) total += net_->demand(d, s);
    return total;
  }

 private:
  int node(const std::string& path, const std::string& id) const {
    auto it = node_index_.find(id);
    if (it == node_index_.end()) throw ReferenceError(path + ": unknown node '" + id + "'");
    return it->second;
  }

  Branch make_branch(int from, int to, double x, double cap) const {
    return Branch{from, to, x, cap, node_region_[from], node_region_[to]};
  }

  const Network* net_;
  std::unordered_map<std::string, int> node_index_;
  std::vector<int> node_region_;
  std::vector<std::vector<int>> region_nodes_;
  std::vector<int> gen_node_;
  std::vector<int> load_node_;
  std::vector<std::vector<int>> gens_at_;
  std::vector<std::vector<int>> loads_at_;
  std::vector<Branch> existing_;
  std::vector<Branch> candidates_;
};

/// Node-to-branch incidence matrix (rows = nodes, columns = existing lines
/// followed by candidate lines): +1 at the sending end, -1 at the receiving end.
inline std::vector<std::vector<int>> incidence(const Network& net) {
  NetworkIndex idx(net);
  const std::size_t cols = net.existing_lines.size() + net.candidate_lines.size();
  std::vector<std::vector<int>> a(net.nodes.size(), std::vector<int>(cols, 0));
  std::size_t c = 0;
  for (const auto* set : {&idx.existing(), &idx.candidates()}) {
    for (const auto& b : *set) {
      a[b.from][c] += 1;
      a[b.to][c] -= 1;
      ++c;
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  bool ok() const { return violations.empty(); }
};

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

template <class Range, class IdOf>
void check_unique(const Range& items, const std::string& category, IdOf id_of,
                  std::vector<std::string>& out) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string& id = id_of(items[i]);
    if (!seen.insert(id).second) {
      out.push_back(category + "[" + std::to_string(i) + "].id: duplicate id '" + id + "'");
    }
  }
}

}  // namespace detail

/// Lists every invariant violation plus topology/adequacy warnings. Never throws.
inline ValidationReport validate(const Network& net) {
  ValidationReport rep;
  auto& v = rep.violations;
  if (net.regions.empty()) v.push_back("regions: must be nonempty");
  if (!(net.interest_rate > 0.0)) v.push_back("interest_rate: must be > 0");
  if (!(net.angle_bound > 0.0)) v.push_back("angle_bound: must be > 0");
  if (net.scenarios.empty()) v.push_back("scenarios: must be nonempty");

  detail::check_unique(net.regions, "regions", [](const std::string& r) -> const std::string& { return r; }, v);
  detail::check_unique(net.nodes, "nodes", [](const Node& n) -> const std::string& { return n.id; }, v);
  detail::check_unique(net.generators, "generators", [](const Generator& g) -> const std::string& { return g.id; }, v);
  detail::check_unique(net.loads, "loads", [](const Load& d) -> const std::string& { return d.id; }, v);
  detail::check_unique(net.existing_lines, "existing_lines", [](const ExistingLine& l) -> const std::string& { return l.id; }, v);
  detail::check_unique(net.candidate_lines, "candidate_lines", [](const CandidateLine& l) -> const std::string& { return l.id; }, v);
  detail::check_unique(net.scenarios, "scenarios", [](const Scenario& s) -> const std::string& { return s.id; }, v);

  std::set<std::string> region_ids(net.regions.begin(), net.regions.end());
  std::set<std::string> node_ids;
  for (std::size_t n = 0; n < net.nodes.size(); ++n) {
    node_ids.insert(net.nodes[n].id);
    if (!region_ids.count(net.nodes[n].region)) {
      v.push_back("nodes[" + std::to_string(n) + "].region: unknown region '" + net.nodes[n].region + "'");
    }
  }
  auto check_node = [&](const std::string& path, const std::string& id) {
    if (!node_ids.count(id)) v.push_back(path + ": unknown node '" + id + "'");
  };

  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    const std::string path = "generators[" + std::to_string(g) + "]";
    check_node(path + ".node", gen.node);
    if (gen.cost_curve.empty()) v.push_back(path + ".cost_curve: must have at least one segment");
    for (std::size_t i = 0; i < gen.cost_curve.size(); ++i) {
      const auto& seg = gen.cost_curve[i];
      const std::string sp = path + ".cost_curve[" + std::to_string(i) + "]";
      if (!std::isfinite(seg.upper_mw) || !std::isfinite(seg.marginal_cost)) v.push_back(sp + ": not finite");
      if (i == 0 && !(seg.upper_mw > 0.0)) v.push_back(sp + ".upper_mw: must be > 0");
      if (i > 0 && !(seg.upper_mw > gen.cost_curve[i - 1].upper_mw)) {
        v.push_back(sp + ".upper_mw: segment bounds must be strictly increasing");
      }
      if (i > 0 && seg.marginal_cost < gen.cost_curve[i - 1].marginal_cost) {
        v.push_back(sp + ".marginal_cost: must be nondecreasing (convex cost)");
      }
    }
    if (!gen.cost_curve.empty() && gen.cost_curve.back().upper_mw < gen.p_max) {
      v.push_back(path + ".cost_curve: last segment bound below p_max");
    }
    if (gen.p_min > gen.p_max) v.push_back(path + ".p_min: exceeds p_max for generator '" + gen.id + "'");
    if (gen.p_min < 0.0) v.push_back(path + ".p_min: must be >= 0");
  }
  for (std::size_t d = 0; d < net.loads.size(); ++d) {
    const std::string path = "loads[" + std::to_string(d) + "]";
    check_node(path + ".node", net.loads[d].node);
    if (!(net.loads[d].demand >= 0.0)) v.push_back(path + ".demand: must be >= 0");
  }
  for (std::size_t h = 0; h < net.existing_lines.size(); ++h) {
    const auto& l = net.existing_lines[h];
    const std::string path = "existing_lines[" + std::to_string(h) + "]";
    check_node(path + ".from", l.from);
    check_node(path + ".to", l.to);
    if (l.from == l.to) v.push_back(path + ": endpoints must differ");
    if (!(l.reactance > 0.0)) v.push_back(path + ".reactance: must be > 0");
    if (!(l.capacity > 0.0)) v.push_back(path + ".capacity: must be > 0");
  }
  for (std::size_t k = 0; k < net.candidate_lines.size(); ++k) {
    const auto& l = net.candidate_lines[k];
    const std::string path = "candidate_lines[" + std::to_string(k) + "]";
    check_node(path + ".from", l.from);
    check_node(path + ".to", l.to);
    if (l.from == l.to) v.push_back(path + ": endpoints must differ");
    if (!(l.reactance > 0.0)) v.push_back(path + ".reactance: must be > 0");
    if (!(l.capacity > 0.0)) v.push_back(path + ".capacity: must be > 0");
    if (!(l.build_cost >= 0.0)) v.push_back(path + ".build_cost: must be >= 0");
    if (l.lifetime < 1) v.push_back(path + ".lifetime: must be >= 1");
  }
  std::set<std::string> gen_ids, load_ids;
  for (const auto& g : net.generators) gen_ids.insert(g.id);
  for (const auto& d : net.loads) load_ids.insert(d.id);
  for (std::size_t s = 0; s < net.scenarios.size(); ++s) {
    const auto& sc = net.scenarios[s];
    const std::string path = "scenarios[" + std::to_string(s) + "]";
    if (!(sc.weight > 0.0)) v.push_back(path + ".weight: must be > 0");
    for (const auto& [id, mw] : sc.demand) {
      if (!load_ids.count(id)) v.push_back(path + ".demand: unknown load '" + id + "'");
      if (!(mw >= 0.0)) v.push_back(path + ".demand." + id + ": must be >= 0");
    }
    for (const auto& [id, lim] : sc.generator_limits) {
      if (!gen_ids.count(id)) v.push_back(path + ".generators: unknown generator '" + id + "'");
      if (lim.p_min > lim.p_max) v.push_back(path + ".generators." + id + ": p_min exceeds p_max for generator '" + id + "'");
    }
  }
  if (!v.empty()) return rep;

  // Warnings need resolved references.
  NetworkIndex idx(net);
  detail::DisjointSets dsu(net.nodes.size());
  for (const auto& b : idx.existing()) dsu.unite(b.from, b.to);
  std::map<std::size_t, std::size_t> comp_size;
  for (std::size_t n = 0; n < net.nodes.size(); ++n) ++comp_size[dsu.find(n)];
  if (comp_size.size() > 1) {
    auto main = std::max_element(comp_size.begin(), comp_size.end(),
                                 [](auto& a, auto& b) { return a.second < b.second; })->first;
    for (std::size_t n = 0; n < net.nodes.size(); ++n) {
      if (dsu.find(n) == main) continue;
      double peak = 0.0;
      for (int s = 0; s < idx.num_scenarios(); ++s) peak = std::max(peak, idx.node_demand(static_cast<int>(n), s));
      std::string msg = "node '" + net.nodes[n].id + "' is disconnected from the main network over existing lines";
      if (peak > 0.0) msg += " (carries load)";
      rep.warnings.push_back(msg);
    }
  }
  for (int s = 0; s < idx.num_scenarios(); ++s) {
    for (int z = 0; z < idx.num_regions(); ++z) {
      double load = 0.0, supply = 0.0;
      for (int n : idx.region_nodes(z)) load += idx.node_demand(n, s);
      for (std::size_t g = 0; g < net.generators.size(); ++g) {
        if (idx.region_of_generator(static_cast<int>(g)) == z) supply += net.limits(g, s).p_max;
      }
      for (const auto* set : {&idx.existing(), &idx.candidates()}) {
        for (const auto& b : *set) {
          if (b.shared() && b.touches(z)) supply += b.capacity;
        }
      }
      if (load > supply) {
        rep.warnings.push_back("scenario '" + net.scenarios[s].id + "': load of region '" + net.regions[z] +
                               "' exceeds local generation plus import capacity");
      }
    }
  }
  return rep;
}

/// Throws DomainError listing every violation.
inline void require_valid(const Network& net) {
  auto rep = validate(net);
  if (rep.ok()) return;
  std::string msg = "invalid network:";
  for (const auto& v : rep.violations) msg += "\n  " + v;
  throw DomainError(msg);
}

// ---------------------------------------------------------------------------
// JSON case format

inline nlohmann::json to_json(const Network& net) {
  using nlohmann::json;
  json j;
  j["version"] = kCaseFormat;
  if (!net.description.empty()) j["description"] = net.description;
  j["regions"] = net.regions;
  j["nodes"] = json::array();
  for (const auto& n : net.nodes) j["nodes"].push_back({{"id", n.id}, {"region", n.region}});
  j["generators"] = json::array();
  for (const auto& g : net.generators) {
    json curve = json::array();
    for (const auto& seg : g.cost_curve) curve.push_back({seg.upper_mw, seg.marginal_cost});
    j["generators"].push_back(
        {{"id", g.id}, {"node", g.node}, {"cost_curve", curve}, {"p_min", g.p_min}, {"p_max", g.p_max}});
  }
  j["loads"] = json::array();
  for (const auto& d : net.loads) j["loads"].push_back({{"id", d.id}, {"node", d.node}, {"demand", d.demand}});
  j["existing_lines"] = json::array();
  for (const auto& l : net.existing_lines) {
    j["existing_lines"].push_back(
        {{"id", l.id}, {"from", l.from}, {"to", l.to}, {"reactance", l.reactance}, {"capacity", l.capacity}});
  }
  j["candidate_lines"] = json::array();
  for (const auto& l : net.candidate_lines) {
    j["candidate_lines"].push_back({{"id", l.id},
                                    {"from", l.from},
                                    {"to", l.to},
                                    {"reactance", l.reactance},
                                    {"capacity", l.capacity},
                                    {"build_cost", l.build_cost},
                                    {"lifetime", l.lifetime}});
  }
  j["scenarios"] = json::array();
  for (const auto& s : net.scenarios) {
    json sc{{"id", s.id}, {"weight", s.weight}};
    if (!s.demand.empty()) sc["demand"] = s.demand;
    if (!s.generator_limits.empty()) {
      json gl = json::object();
      for (const auto& [id, lim] : s.generator_limits) gl[id] = {{"p_min", lim.p_min}, {"p_max", lim.p_max}};
      sc["generators"] = gl;
    }
    j["scenarios"].push_back(sc);
  }
  j["interest_rate"] = net.interest_rate;
  j["angle_bound"] = net.angle_bound;
  return j;
}

namespace detail {

template <class T>
T field(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(path + "." + key + ": missing");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + "." + key + ": " + e.what());
  }
}

template <class T>
T field_or(const nlohmann::json& j, const char* key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  return field<T>(j, key, path);
}

}  // namespace detail

/// Parses the case format. Reference and invariant checks happen in
/// load_case / require_valid.
inline Network network_from_json(const nlohmann::json& j) {
  using detail::field;
  using detail::field_or;
  if (!j.is_object()) throw ParseError("case: top level must be an object");
  const auto version = field_or<std::string>(j, "version", "case", kCaseFormat);
  if (version != kCaseFormat) throw ParseError("case.version: unsupported '" + version + "'");
  Network net;
  net.description = field_or<std::string>(j, "description", "case", "");
  net.regions = field<std::vector<std::string>>(j, "regions", "case");
  auto array = [&](const char* key) -> const nlohmann::json& {
    static const nlohmann::json empty = nlohmann::json::array();
    if (!j.contains(key)) return empty;
    if (!j.at(key).is_array()) throw ParseError(std::string("case.") + key + ": must be an array");
    return j.at(key);
  };
  for (std::size_t i = 0; const auto& n : array("nodes")) {
    const std::string p = "nodes[" + std::to_string(i++) + "]";
    net.nodes.push_back({field<std::string>(n, "id", p), field<std::string>(n, "region", p)});
  }
  for (std::size_t i = 0; const auto& g : array("generators")) {
    const std::string p = "generators[" + std::to_string(i++) + "]";
    Generator gen{field<std::string>(g, "id", p), field<std::string>(g, "node", p), {}, 0.0, 0.0};
    auto curve = field<std::vector<std::array<double, 2>>>(g, "cost_curve", p);
    for (const auto& seg : curve) gen.cost_curve.push_back({seg[0], seg[1]});
    gen.p_min = field_or<double>(g, "p_min", p, 0.0);
    gen.p_max = field_or<double>(g, "p_max", p, gen.cost_curve.empty() ? 0.0 : gen.cost_curve.back().upper_mw);
    net.generators.push_back(std::move(gen));
  }
  for (std::size_t i = 0; const auto& d : array("loads")) {
    const std::string p = "loads[" + std::to_string(i++) + "]";
    net.loads.push_back({field<std::string>(d, "id", p), field<std::string>(d, "node", p), field<double>(d, "demand", p)});
  }
  for (std::size_t i = 0; const auto& l : array("existing_lines")) {
    const std::string p = "existing_lines[" + std::to_string(i++) + "]";
    net.existing_lines.push_back({field<std::string>(l, "id", p), field<std::string>(l, "from", p),
                                  field<std::string>(l, "to", p), field<double>(l, "reactance", p),
                                  field<double>(l, "capacity", p)});
  }
  for (std::size_t i = 0; const auto& l : array("candidate_lines")) {
    const std::string p = "candidate_lines[" + std::to_string(i++) + "]";
    net.candidate_lines.push_back({field<std::string>(l, "id", p), field<std::string>(l, "from", p),
                                   field<std::string>(l, "to", p), field<double>(l, "reactance", p),
                                   field<double>(l, "capacity", p), field<double>(l, "build_cost", p),
                                   field<int>(l, "lifetime", p)});
  }
  for (std::size_t i = 0; const auto& s : array("scenarios")) {
    const std::string p = "scenarios[" + std::to_string(i++) + "]";
    Scenario sc{field<std::string>(s, "id", p), field<double>(s, "weight", p), {}, {}};
    sc.demand = field_or<std::map<std::string, double>>(s, "demand", p, {});
    if (s.contains("generators")) {
      for (const auto& [id, lim] : s.at("generators").items()) {
        const std::string gp = p + ".generators." + id;
        sc.generator_limits[id] = {field<double>(lim, "p_min", gp), field<double>(lim, "p_max", gp)};
      }
    }
    net.scenarios.push_back(std::move(sc));
  }
  if (net.scenarios.empty() && !j.contains("scenarios")) net.scenarios.push_back({"base", 1.0, {}, {}});
  net.interest_rate = field<double>(j, "interest_rate", "case");
  net.angle_bound = field_or<double>(j, "angle_bound", "case", std::numbers::pi);
  return net;
}

/// Resolves every id reference; throws ReferenceError on the first dangling one.
inline void check_references(const Network& net) {
  NetworkIndex idx(net);
  std::set<std::string> gen_ids, load_ids;
  for (const auto& g : net.generators) gen_ids.insert(g.id);
  for (const auto& d : net.loads) load_ids.insert(d.id);
  for (std::size_t s = 0; s < net.scenarios.size(); ++s) {
    for (const auto& [id, mw] : net.scenarios[s].demand) {
      if (!load_ids.count(id)) throw ReferenceError("scenarios[" + std::to_string(s) + "].demand: unknown load '" + id + "'");
    }
    for (const auto& [id, lim] : net.scenarios[s].generator_limits) {
      if (!gen_ids.count(id)) {
        throw ReferenceError("scenarios[" + std::to_string(s) + "].generators: unknown generator '" + id + "'");
      }
    }
  }
}

inline Network parse_case(const std::string& text, const std::string& origin = "<string>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  Network net = network_from_json(j);
  check_references(net);
  require_valid(net);
  return net;
}

inline Network load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_case(buf.str(), path);
  } catch (const ParseError& e) {
    const std::string what = e.what();
    if (what.rfind(path, 0) == 0) throw;
    throw ParseError(path + ": " + what);
  }
}

inline void save_case(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write case file '" + path + "'");
  out << to_json(net).dump(2) << '\n';
}

}  // namespace gridcoord
