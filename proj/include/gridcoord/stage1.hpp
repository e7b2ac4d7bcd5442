#pragma once

// Stage I: region-decomposed Lagrangian scheme for the build decisions.
//
// Each region solves a MILP over its own dispatch plus private copies of the
// shared elements (lines whose endpoints lie in two regions): their flows,
// the far-end angles and, for shared candidates, the build binary. The
// coordinator solves a MILP over the global copies. Multipliers on the
// copy-equality constraints are moved by a diminishing subgradient step.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/boundary.hpp"
#include "gridcoord/centralized.hpp"
#include "gridcoord/netmodel.hpp"
#include "gridcoord/schedule.hpp"
#include "gridcoord/solver.hpp"

namespace gridcoord {

enum class FlowMode { signed_flow, magnitude };

inline const char* to_string(FlowMode m) { return m == FlowMode::signed_flow ? "signed" : "magnitude"; }

inline FlowMode flow_mode_from_string(const std::string& s) {
  if (s == "signed") return FlowMode::signed_flow;
  if (s == "magnitude") return FlowMode::magnitude;
  throw DomainError("unknown flow mode '" + s + "'");
}

/// How angle mismatches feed the angle multipliers. Angles carry no global
/// reference inside a region, so `centered` removes each region's mean
/// offset (per scenario) before the step; `raw` uses the difference as is.
enum class AngleResidual { raw, centered };

inline const char* to_string(AngleResidual a) { return a == AngleResidual::raw ? "raw" : "centered"; }

inline AngleResidual angle_residual_from_string(const std::string& s) {
  if (s == "raw") return AngleResidual::raw;
  if (s == "centered") return AngleResidual::centered;
  throw DomainError("unknown angle residual mode '" + s + "'");
}

struct Stage1Config {
  double epsilon = 1e-3;
  double consensus_tol_mw = 1e-4;
  double consensus_tol_rad = 1e-6;
  double rel_gap = 1e-6;
  double alpha0 = 1.0;
  double nu0 = 10.0;
  std::optional<double> beta;  // defaults to the number of regions
  int max_iter = 500;
  FlowMode flow_mode = FlowMode::signed_flow;
  AngleResidual angle_residual = AngleResidual::centered;
  Schedule schedule;

  void validate() const {
    if (!(epsilon > 0) || !(consensus_tol_mw > 0) || !(consensus_tol_rad > 0) || !(rel_gap >= 0)) {
      throw DomainError("stage1: tolerances must be positive");
    }
    if (!(alpha0 > 0) || !(nu0 > 0)) throw DomainError("stage1: alpha0 and nu0 must be positive");
    if (beta && !(*beta > 0)) throw DomainError("stage1: beta must be positive");
    if (max_iter < 1) throw DomainError("stage1: max_iter must be >= 1");
    schedule.validate();
  }
};

/// Multipliers owned by one region. Entries for elements the region does not
/// touch stay zero.
struct DualSet {
  std::vector<double> pi;                              // [k]
  std::vector<std::vector<double>> mu;                 // [s][e]
  std::vector<std::vector<std::array<double, 2>>> xi;  // [s][e][end]

  static DualSet zeros(int K, int S, int E) {
    DualSet d;
    d.pi.assign(K, 0.0);
    d.mu.assign(S, std::vector<double>(E, 0.0));
    d.xi.assign(S, std::vector<std::array<double, 2>>(E, {0.0, 0.0}));
    return d;
  }
  double norm() const {
    double s = 0.0;
    for (double v : pi) s += v * v;
    for (const auto& r : mu) {
      for (double v : r) s += v * v;
    }
    for (const auto& r : xi) {
      for (const auto& v : r) s += v[0] * v[0] + v[1] * v[1];
    }
    return std::sqrt(s);
  }
};

/// Coordinator-side copies. u covers every candidate; internal candidates
/// are copied from their owning region's proposal.
struct GlobalCopies {
  std::vector<int> u;                      // [k]
  std::vector<std::vector<double>> flow;   // [s][e]
  std::vector<std::vector<double>> phi;    // [s][n], 0 for non-boundary nodes
};

struct RegionalProposal {
  int region = -1;
  solver::Status status = solver::Status::infeasible;
  std::vector<int> u;                                     // [k], -1 where not a stakeholder
  std::vector<std::vector<double>> flow;                  // [s][e], signed
  std::vector<std::vector<std::array<double, 2>>> angle;  // [s][e][end]
  std::vector<std::vector<double>> dispatch;              // [s][g], own generators
  double objective = kInf;
  double relaxation_bound = -kInf;
};

struct TpcDecision {
  solver::Status status = solver::Status::infeasible;
  GlobalCopies copies;
  double objective = kInf;
  double relaxation_bound = -kInf;
};

struct BoundReport {
  double lb_new = -kInf;   // this round's Lagrangian bound
  double lb = -kInf;       // best so far
  double ub = kInf;        // best physical bound so far
  double ub_round = kInf;  // best physical bound among this round's proposals
  double ub_phys = kInf;   // fixed-build objective at the coordinator's u
  double ub_split = kInf;  // min_z UB^TPC_z + sum_z UB_z
  double gap = kInf;       // 1 - lb / ub
  std::vector<int> incumbent;
};

enum class StopReason { none, consensus, gap, iteration_limit };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::none: return "none";
    case StopReason::consensus: return "consensus";
    case StopReason::gap: return "gap";
    case StopReason::iteration_limit: return "iteration_limit";
  }
  return "none";
}

/// Stop on consensus, on a non-negative gap within epsilon, or at the
/// iteration limit. A negative gap (LB above UB) never stops the run.
inline StopReason check_termination(double lb, double ub, bool consensus, long nu, double epsilon, int max_iter) {
  if (consensus) return StopReason::consensus;
  if (ub > 0 && std::isfinite(ub) && std::isfinite(lb)) {
    const double gap = 1.0 - lb / ub;
    if (gap >= 0.0 && gap <= epsilon) return StopReason::gap;
  }
  if (nu >= max_iter) return StopReason::iteration_limit;
  return StopReason::none;
}

/// Diminishing step alpha0 / (1 + nu / nu0).
inline double step_size(double alpha0, double nu0, long nu) { return alpha0 / (1.0 + static_cast<double>(nu) / nu0); }

/// An element ties the angles at its ends unless it is a candidate that
/// neither the region nor the coordinator builds.
inline bool binds_angles(const SharedElement& el, const RegionalProposal& p, const GlobalCopies& g) {
  return !el.candidate || p.u[el.index] == 1 || g.u[el.index] == 1;
}

/// Mean angle residual of region z in scenario s over its binding elements
/// (over all touched elements when none binds).
inline double angle_offset(int z, std::size_t s, const RegionalProposal& p, const GlobalCopies& g,
                           const std::vector<SharedElement>& elems) {
  double all = 0.0, bound = 0.0;
  int n_all = 0, n_bound = 0;
  for (std::size_t e = 0; e < elems.size(); ++e) {
    if (!elems[e].touches(z)) continue;
    const bool binds = binds_angles(elems[e], p, g);
    for (int end = 0; end < 2; ++end) {
      const double r = p.angle[s][e][end] - g.phi[s][elems[e].node(end)];
      all += r;
      ++n_all;
      if (binds) {
        bound += r;
        ++n_bound;
      }
    }
  }
  if (n_bound > 0) return bound / n_bound;
  return n_all > 0 ? all / n_all : 0.0;
}

/// Applies the seven affine multiplier updates for region z with step
/// a = alpha / beta.
inline void update_duals(DualSet& d, int z, const RegionalProposal& p, const GlobalCopies& g,
                         const std::vector<SharedElement>& elems, double a, FlowMode mode, AngleResidual ar) {
  for (std::size_t k = 0; k < d.pi.size(); ++k) {
    if (p.u[k] >= 0) d.pi[k] += a * (p.u[k] - g.u[k]);
  }
  for (std::size_t s = 0; s < d.mu.size(); ++s) {
    const double offset = ar == AngleResidual::centered ? angle_offset(z, s, p, g, elems) : 0.0;
    for (std::size_t e = 0; e < elems.size(); ++e) {
      if (!elems[e].touches(z)) continue;
      const double f = mode == FlowMode::magnitude ? std::abs(p.flow[s][e]) : p.flow[s][e];
      d.mu[s][e] += a * (f - g.flow[s][e]);
      for (int end = 0; end < 2; ++end) {
        d.xi[s][e][end] += a * (p.angle[s][e][end] - g.phi[s][elems[e].node(end)] - offset);
      }
    }
  }
}

namespace detail {

/// Regional MILP with the column layout needed to re-price it each round.
struct RegionalModel {
  int region = -1;
  solver::MixedIntegerProgram mip;
  std::vector<double> base_cost;
  std::vector<int> u;                                     // [k]
  std::vector<std::vector<int>> flow;                     // [s][e] signed flow column
  std::vector<std::vector<int>> mag;                      // [s][e] |flow| column (magnitude mode)
  std::vector<std::vector<int>> theta;                    // [s][n] own or far-copy angle
  std::vector<std::vector<std::vector<int>>> seg;         // [s][g]
};

inline RegionalModel build_regional_model(int z, const Network& net, const std::vector<SharedElement>& elems,
                                          FlowMode mode) {
  NetworkIndex idx(net);
  if (z < 0 || z >= idx.num_regions()) throw DomainError("unknown region index " + std::to_string(z));
  RegionalModel m;
  m.region = z;
  auto& mip = m.mip;
  auto& lp = mip.lp;
  const int S = idx.num_scenarios(), N = idx.num_nodes(), G = static_cast<int>(net.generators.size());
  const int K = static_cast<int>(net.candidate_lines.size()), E = static_cast<int>(elems.size());
  const std::string rz = net.regions[z];
  auto col = [&](std::string name, double lo, double hi, double c) { return mip.add_column(std::move(name), lo, hi, c); };

  const int ref = reference_node(net);  // pinned by its owning region, as in the centralized model
  m.u.assign(K, -1);
  for (int k = 0; k < K; ++k) {
    const auto& br = idx.candidates()[k];
    if (!br.touches(z)) continue;
    const double share = br.shared() ? 0.5 : 1.0;
    m.u[k] = mip.add_binary(rz + ".u[" + net.candidate_lines[k].id + "]",
                            share * annualized_cost(net, net.candidate_lines[k]));
  }
  std::vector<int> elem_of_existing(idx.existing().size(), -1), elem_of_candidate(K, -1);
  for (int e = 0; e < E; ++e) (elems[e].candidate ? elem_of_candidate : elem_of_existing)[elems[e].index] = e;

  m.flow.assign(S, std::vector<int>(E, -1));
  m.mag.assign(S, std::vector<int>(E, -1));
  m.theta.assign(S, std::vector<int>(N, -1));
  m.seg.assign(S, std::vector<std::vector<int>>(G));
  for (int s = 0; s < S; ++s) {
    const std::string tag = rz + ".s" + std::to_string(s) + ".";
    const double w = net.scenarios[s].weight;
    for (int g = 0; g < G; ++g) {
      if (idx.region_of_generator(g) != z) continue;
      m.seg[s][g] = add_generator(lp, net, g, s, w, tag);
      mip.integral.resize(lp.num_cols(), false);
    }
    for (int n : idx.region_nodes(z)) {
      const double b = n == ref ? 0.0 : net.angle_bound;
      m.theta[s][n] = col(tag + "theta[" + net.nodes[n].id + "]", -b, b, 0.0);
    }
    for (const auto& el : elems) {
      if (!el.touches(z)) continue;
      const int far = el.from_region == z ? el.to : el.from;
      if (m.theta[s][far] < 0) {
        m.theta[s][far] = col(tag + "theta_copy[" + net.nodes[far].id + "]", -net.angle_bound, net.angle_bound, 0.0);
      }
    }
    std::vector<std::vector<std::pair<int, double>>> balance(N);
    auto connect = [&](const Branch& br, int f) {
      if (idx.region_of_node(br.from) == z) balance[br.from].push_back({f, -1.0});
      if (idx.region_of_node(br.to) == z) balance[br.to].push_back({f, 1.0});
    };
    for (std::size_t h = 0; h < idx.existing().size(); ++h) {
      const auto& br = idx.existing()[h];
      if (!br.touches(z)) continue;
      const int f = col(tag + "P[" + net.existing_lines[h].id + "]", -br.capacity, br.capacity, 0.0);
      lp.add_row(tag + "dc[" + net.existing_lines[h].id + "]", 0.0, 0.0,
                 {{f, 1.0}, {m.theta[s][br.from], -1.0 / br.reactance}, {m.theta[s][br.to], 1.0 / br.reactance}});
      connect(br, f);
      if (elem_of_existing[h] >= 0) m.flow[s][elem_of_existing[h]] = f;
    }
    for (int k = 0; k < K; ++k) {
      const auto& br = idx.candidates()[k];
      if (!br.touches(z)) continue;
      const std::string& id = net.candidate_lines[k].id;
      const int f = col(tag + "Phat[" + id + "]", -br.capacity, br.capacity, 0.0);
      const int ti = m.theta[s][br.from], tj = m.theta[s][br.to], u = m.u[k];
      const double M = big_m(net.candidate_lines[k], net);
      lp.add_row(tag + "bigm_hi[" + id + "]", -kInf, M,
                 {{f, 1.0}, {ti, -1.0 / br.reactance}, {tj, 1.0 / br.reactance}, {u, M}});
      lp.add_row(tag + "bigm_lo[" + id + "]", -M, kInf,
                 {{f, 1.0}, {ti, -1.0 / br.reactance}, {tj, 1.0 / br.reactance}, {u, -M}});
      lp.add_row(tag + "cap_hi[" + id + "]", -kInf, 0.0, {{f, 1.0}, {u, -br.capacity}});
      lp.add_row(tag + "cap_lo[" + id + "]", 0.0, kInf, {{f, 1.0}, {u, br.capacity}});
      connect(br, f);
      if (elem_of_candidate[k] >= 0) m.flow[s][elem_of_candidate[k]] = f;
    }
    if (mode == FlowMode::magnitude) {
      for (int e = 0; e < E; ++e) {
        if (!elems[e].touches(z)) continue;
        const double B = elems[e].capacity;
        const int f = m.flow[s][e];
        const int t = col(tag + "absP[" + elems[e].id + "]", 0.0, B, 0.0);
        const int b = mip.add_binary(tag + "sign[" + elems[e].id + "]");
        lp.add_row(tag + "abs_a[" + elems[e].id + "]", 0.0, kInf, {{t, 1.0}, {f, -1.0}});
        lp.add_row(tag + "abs_b[" + elems[e].id + "]", 0.0, kInf, {{t, 1.0}, {f, 1.0}});
        lp.add_row(tag + "abs_c[" + elems[e].id + "]", -kInf, 2 * B, {{t, 1.0}, {f, -1.0}, {b, 2 * B}});
        lp.add_row(tag + "abs_d[" + elems[e].id + "]", -kInf, 0.0, {{t, 1.0}, {f, 1.0}, {b, -2 * B}});
        m.mag[s][e] = t;
      }
    }
    for (int n : idx.region_nodes(z)) {
      auto row = balance[n];
      for (int g : idx.generators_at(n)) {
        for (int c : m.seg[s][g]) row.push_back({c, 1.0});
      }
      const double d = idx.node_demand(n, s);
      lp.add_row(tag + "balance[" + net.nodes[n].id + "]", d, d, row);
    }
  }
  m.base_cost = lp.cost;
  return m;
}

inline void price_regional(RegionalModel& m, const DualSet& d, const std::vector<SharedElement>& elems) {
  auto& cost = m.mip.lp.cost;
  cost = m.base_cost;
  for (std::size_t k = 0; k < m.u.size(); ++k) {
    if (m.u[k] >= 0 && k < d.pi.size()) cost[m.u[k]] += d.pi[k];
  }
  for (std::size_t s = 0; s < m.flow.size(); ++s) {
    for (std::size_t e = 0; e < elems.size(); ++e) {
      if (!elems[e].touches(m.region)) continue;
      const int fc = m.mag[s][e] >= 0 ? m.mag[s][e] : m.flow[s][e];
      cost[fc] += d.mu[s][e];
      for (int end = 0; end < 2; ++end) cost[m.theta[s][elems[e].node(end)]] += d.xi[s][e][end];
    }
  }
}

struct TpcModel {
  solver::MixedIntegerProgram mip;
  std::vector<int> u;                   // [k], shared candidates only
  std::vector<std::vector<int>> flow;   // [s][e]
  std::vector<std::vector<int>> phi;    // [s][n]
};

inline TpcModel build_tpc_model(const Network& net, const std::vector<SharedElement>& elems) {
  NetworkIndex idx(net);
  TpcModel m;
  auto& mip = m.mip;
  auto& lp = mip.lp;
  const int S = idx.num_scenarios(), N = idx.num_nodes(), K = static_cast<int>(net.candidate_lines.size());
  const int E = static_cast<int>(elems.size());
  m.u.assign(K, -1);
  for (const auto& el : elems) {
    if (el.candidate) m.u[el.index] = mip.add_binary("tpc.u[" + el.id + "]");
  }
  m.flow.assign(S, std::vector<int>(E, -1));
  m.phi.assign(S, std::vector<int>(N, -1));
  for (int s = 0; s < S; ++s) {
    const std::string tag = "tpc.s" + std::to_string(s) + ".";
    for (const auto& el : elems) {
      for (int end = 0; end < 2; ++end) {
        const int n = el.node(end);
        if (m.phi[s][n] < 0) {
          m.phi[s][n] = mip.add_column(tag + "phi[" + net.nodes[n].id + "]", -net.angle_bound, net.angle_bound);
        }
      }
    }
    for (int e = 0; e < E; ++e) {
      const auto& el = elems[e];
      const int f = mip.add_column(tag + "P[" + el.id + "]", -el.capacity, el.capacity);
      m.flow[s][e] = f;
      const int pi = m.phi[s][el.from], pj = m.phi[s][el.to];
      if (!el.candidate) {
        lp.add_row(tag + "dc[" + el.id + "]", 0.0, 0.0, {{f, 1.0}, {pi, -1.0 / el.reactance}, {pj, 1.0 / el.reactance}});
        continue;
      }
      const double M = big_m(net.candidate_lines[el.index], net);
      const int u = m.u[el.index];
      lp.add_row(tag + "bigm_hi[" + el.id + "]", -kInf, M,
                 {{f, 1.0}, {pi, -1.0 / el.reactance}, {pj, 1.0 / el.reactance}, {u, M}});
      lp.add_row(tag + "bigm_lo[" + el.id + "]", -M, kInf,
                 {{f, 1.0}, {pi, -1.0 / el.reactance}, {pj, 1.0 / el.reactance}, {u, -M}});
      lp.add_row(tag + "cap_hi[" + el.id + "]", -kInf, 0.0, {{f, 1.0}, {u, -el.capacity}});
      lp.add_row(tag + "cap_lo[" + el.id + "]", 0.0, kInf, {{f, 1.0}, {u, el.capacity}});
    }
  }
  return m;
}

inline void price_tpc(TpcModel& m, const std::vector<DualSet>& duals, const std::vector<SharedElement>& elems) {
  auto& cost = m.mip.lp.cost;
  std::fill(cost.begin(), cost.end(), 0.0);
  for (std::size_t z = 0; z < duals.size(); ++z) {
    const auto& d = duals[z];
    for (std::size_t k = 0; k < m.u.size(); ++k) {
      if (m.u[k] >= 0) cost[m.u[k]] -= d.pi[k];
    }
    for (std::size_t s = 0; s < m.flow.size(); ++s) {
      for (std::size_t e = 0; e < elems.size(); ++e) {
        if (!elems[e].touches(static_cast<int>(z))) continue;
        cost[m.flow[s][e]] -= d.mu[s][e];
        for (int end = 0; end < 2; ++end) cost[m.phi[s][elems[e].node(end)]] -= d.xi[s][e][end];
      }
    }
  }
}

inline std::string join_u(const std::vector<int>& u, const std::vector<int>& which) {
  std::string out;
  for (int k : which) {
    if (!out.empty()) out += '|';
    out += u[k] < 0 ? "-" : std::to_string(u[k]);
  }
  return out;
}

}  // namespace detail

/// Region z's subproblem priced with its multipliers.
inline solver::MixedIntegerProgram build_regional_subproblem(int z, const DualSet& duals, const Network& net,
                                                             FlowMode mode = FlowMode::signed_flow) {
  const auto elems = shared_elements(net);
  auto m = detail::build_regional_model(z, net, elems, mode);
  detail::price_regional(m, duals, elems);
  return m.mip;
}

/// Coordinator subproblem priced with every region's multipliers.
inline solver::MixedIntegerProgram build_tpc_subproblem(const std::vector<DualSet>& duals, const Network& net) {
  const auto elems = shared_elements(net);
  auto m = detail::build_tpc_model(net, elems);
  detail::price_tpc(m, duals, elems);
  return m.mip;
}

struct Stage1TraceRow {
  long nu = 0;
  std::string region;
  std::string u_prop;
  std::string u_tpc;
  double lb = -kInf, ub = kInf, gap = kInf;
};

struct Stage1Result {
  StopReason reason = StopReason::none;
  long iterations = 0;
  std::vector<int> u;                    // final build decision
  std::vector<int> u_tpc;                // coordinator's last decision
  std::vector<std::vector<int>> u_regional;  // last proposal per region
  bool u_consensus = false;
  bool full_consensus = false;
  long u_consensus_round = -1;           // first round of the final unbroken u agreement
  double lb = -kInf, ub = kInf, ub_phys = kInf, ub_split = kInf, gap = kInf;
  std::vector<DualSet> duals;
  GlobalCopies copies;
  std::vector<Stage1TraceRow> trace;
  PlanResult plan;                       // fixed-build dispatch at u

  bool converged() const { return reason == StopReason::consensus || reason == StopReason::gap; }
};

/// Holds Stage I state and the primitives a coordinator loop needs.
class Stage1Engine {
 public:
  Stage1Engine(const Network& net, Stage1Config cfg) : net_(net), cfg_(std::move(cfg)), idx_(net) {
    require_valid(net_);
    cfg_.validate();
    elems_ = shared_elements(net_);
    const int R = idx_.num_regions(), K = static_cast<int>(net_.candidate_lines.size());
    const int S = idx_.num_scenarios(), E = static_cast<int>(elems_.size());
    beta_ = cfg_.beta ? *cfg_.beta : static_cast<double>(R);
    duals_.assign(R, DualSet::zeros(K, S, E));
    nu_.assign(R, 0);
    for (int z = 0; z < R; ++z) regional_.push_back(detail::build_regional_model(z, net_, elems_, cfg_.flow_mode));
    tpc_ = detail::build_tpc_model(net_, elems_);
    for (const auto& el : elems_) {
      if (el.candidate) shared_candidates_.push_back(el.index);
    }
  }

  const Network& net() const { return net_; }
  const Stage1Config& config() const { return cfg_; }
  int num_regions() const { return idx_.num_regions(); }
  const std::vector<SharedElement>& elements() const { return elems_; }
  const std::vector<int>& shared_candidates() const { return shared_candidates_; }
  const DualSet& duals(int z) const { return duals_.at(z); }
  const std::vector<DualSet>& all_duals() const { return duals_; }
  void set_duals(int z, DualSet d) { duals_.at(z) = std::move(d); }
  long nu(int z) const { return nu_.at(z); }
  double beta() const { return beta_; }
  double step(int z) const { return step_size(cfg_.alpha0, cfg_.nu0, nu_.at(z)) / beta_; }
  const BoundReport& bounds() const { return bounds_; }

  RegionalProposal solve_region(int z) { return solve_region(z, duals_.at(z)); }

  RegionalProposal solve_region(int z, const DualSet& d) {
    auto& m = regional_.at(z);
    detail::price_regional(m, d, elems_);
    const auto sol = solver::solve_milp(m.mip, cfg_.rel_gap);
    RegionalProposal p;
    p.region = z;
    p.status = sol.status;
    p.relaxation_bound = sol.relaxation_bound;
    if (!sol.optimal()) {
      throw Error("stage1: region '" + net_.regions[z] + "' subproblem is " + solver::to_string(sol.status));
    }
    p.objective = sol.objective;
    const int S = idx_.num_scenarios(), E = static_cast<int>(elems_.size());
    p.u.assign(net_.candidate_lines.size(), -1);
    for (std::size_t k = 0; k < m.u.size(); ++k) {
      if (m.u[k] >= 0) p.u[k] = sol.x[m.u[k]] > 0.5 ? 1 : 0;
    }
    p.flow.assign(S, std::vector<double>(E, 0.0));
    p.angle.assign(S, std::vector<std::array<double, 2>>(E, {0.0, 0.0}));
    p.dispatch.assign(S, std::vector<double>(net_.generators.size(), 0.0));
    for (int s = 0; s < S; ++s) {
      for (int e = 0; e < E; ++e) {
        if (!elems_[e].touches(z)) continue;
        p.flow[s][e] = sol.x[m.flow[s][e]];
        for (int end = 0; end < 2; ++end) p.angle[s][e][end] = sol.x[m.theta[s][elems_[e].node(end)]];
      }
      for (std::size_t g = 0; g < m.seg[s].size(); ++g) {
        for (int c : m.seg[s][g]) p.dispatch[s][g] += sol.x[c];
      }
    }
    return p;
  }

  /// Solves the coordinator problem at the current multipliers. Among tied
  /// optima, candidates are left unbuilt where that costs nothing. Internal
  /// candidates take the owning region's latest proposal.
  TpcDecision solve_tpc(const std::vector<RegionalProposal>& latest) {
    detail::price_tpc(tpc_, duals_, elems_);
    auto mip = tpc_.mip;
    auto sol = solver::solve_milp(mip, cfg_.rel_gap);
    if (!sol.optimal()) throw Error(std::string("stage1: coordinator subproblem is ") + solver::to_string(sol.status));
    TpcDecision t;
    t.relaxation_bound = sol.relaxation_bound;
    for (int k : shared_candidates_) {
      const int c = tpc_.u[k];
      if (sol.x[c] < 0.5) continue;
      auto trial = mip;
      trial.lp.col_lower[c] = trial.lp.col_upper[c] = 0.0;
      auto alt = solver::solve_milp(trial, cfg_.rel_gap);
      if (alt.optimal() && alt.objective <= sol.objective + 1e-9 * std::max(1.0, std::abs(sol.objective))) {
        mip = std::move(trial);
        sol = std::move(alt);
      }
    }
    t.status = sol.status;
    t.objective = sol.objective;
    const int S = idx_.num_scenarios(), N = idx_.num_nodes(), E = static_cast<int>(elems_.size());
    auto& g = t.copies;
    g.u.assign(net_.candidate_lines.size(), 0);
    for (std::size_t k = 0; k < g.u.size(); ++k) {
      if (tpc_.u[k] >= 0) {
        g.u[k] = sol.x[tpc_.u[k]] > 0.5 ? 1 : 0;
      } else {
        for (const auto& p : latest) {
          if (p.region >= 0 && p.u.size() == g.u.size() && p.u[k] >= 0) g.u[k] = p.u[k];
        }
      }
    }
    g.flow.assign(S, std::vector<double>(E, 0.0));
    g.phi.assign(S, std::vector<double>(N, 0.0));
    for (int s = 0; s < S; ++s) {
      for (int e = 0; e < E; ++e) g.flow[s][e] = sol.x[tpc_.flow[s][e]];
      for (int n = 0; n < N; ++n) {
        if (tpc_.phi[s][n] >= 0) g.phi[s][n] = sol.x[tpc_.phi[s][n]];
      }
    }
    return t;
  }

  /// Physical objective of a build vector (fixed-build centralized LP), memoized.
  double fixed_objective(const std::vector<int>& u) {
    auto it = ub_cache_.find(u);
    if (it != ub_cache_.end()) return it->second;
    auto sol = solver::solve_lp(build_fixed_u(net_, u));
    const double v = sol.optimal() ? sol.objective : kInf;
    ub_cache_.emplace(u, v);
    return v;
  }

  /// Lower bound from the LP relaxations at the multipliers the proposals
  /// were computed with; physical upper bound over all proposals.
  const BoundReport& compute_bounds(const std::vector<RegionalProposal>& latest, const TpcDecision& tpc) {
    BoundReport b = bounds_;
    b.lb_new = tpc.relaxation_bound;
    for (const auto& p : latest) b.lb_new += p.relaxation_bound;
    b.lb = std::max(bounds_.lb, b.lb_new);

    std::vector<std::vector<int>> candidates{tpc.copies.u};
    for (const auto& p : latest) {
      auto u = tpc.copies.u;
      for (std::size_t k = 0; k < u.size(); ++k) {
        if (p.u[k] >= 0) u[k] = p.u[k];
      }
      candidates.push_back(std::move(u));
    }
    b.ub_phys = fixed_objective(tpc.copies.u);
    b.ub_round = kInf;
    std::vector<int> round_best;
    for (const auto& u : candidates) {
      const double v = fixed_objective(u);
      if (v < b.ub_round) {
        b.ub_round = v;
        round_best = u;
      }
    }
    if (b.ub_round < bounds_.ub) {
      b.ub = b.ub_round;
      b.incumbent = round_best;
    }
    b.ub_split = split_upper_bound(latest);
    b.gap = (std::isfinite(b.ub) && b.ub > 0) ? 1.0 - b.lb / b.ub : kInf;
    bounds_ = b;
    return bounds_;
  }

  /// min_z UB^TPC_z + sum_z UB_z, where UB_z re-solves region z with its
  /// build binaries fixed to its own proposal and UB^TPC_z solves the
  /// coordinator problem with the shared binaries fixed to that proposal.
  double split_upper_bound(const std::vector<RegionalProposal>& latest) {
    double sum = 0.0, best_tpc = kInf;
    detail::price_tpc(tpc_, duals_, elems_);
    for (const auto& p : latest) {
      auto& m = regional_.at(p.region);
      detail::price_regional(m, duals_[p.region], elems_);
      auto fixed = m.mip;
      for (std::size_t k = 0; k < m.u.size(); ++k) {
        if (m.u[k] >= 0) fixed.lp.col_lower[m.u[k]] = fixed.lp.col_upper[m.u[k]] = p.u[k];
      }
      auto sz = solver::solve_milp(fixed, cfg_.rel_gap);
      sum += sz.optimal() ? sz.objective : kInf;
      auto t = tpc_.mip;
      for (std::size_t k = 0; k < tpc_.u.size(); ++k) {
        if (tpc_.u[k] >= 0 && p.u[k] >= 0) t.lp.col_lower[tpc_.u[k]] = t.lp.col_upper[tpc_.u[k]] = p.u[k];
      }
      auto st = solver::solve_milp(t, cfg_.rel_gap);
      if (st.optimal()) best_tpc = std::min(best_tpc, st.objective);
    }
    return best_tpc + sum;
  }

  void apply_updates(int z, const RegionalProposal& p, const TpcDecision& tpc) {
    update_duals(duals_.at(z), z, p, tpc.copies, elems_, step(z), cfg_.flow_mode, cfg_.angle_residual);
    ++nu_.at(z);
  }

  bool u_consensus(const std::vector<RegionalProposal>& latest, const TpcDecision& tpc) const {
    for (const auto& p : latest) {
      for (int k : shared_candidates_) {
        if (p.u[k] >= 0 && p.u[k] != tpc.copies.u[k]) return false;
      }
    }
    return true;
  }

  /// Agreement of build decisions, flows (MW) and angles (rad, up to each
  /// region's common offset) between every region and the coordinator.
  /// Angles at the ends of candidates nobody builds are unconstrained and
  /// are not compared.
  /// With no candidates there is no decision to agree on.
  bool full_consensus(const std::vector<RegionalProposal>& latest, const TpcDecision& tpc) const {
    if (net_.candidate_lines.empty()) return true;
    if (!u_consensus(latest, tpc)) return false;
    const auto& g = tpc.copies;
    for (const auto& p : latest) {
      const int z = p.region;
      for (std::size_t s = 0; s < g.flow.size(); ++s) {
        const double offset = angle_offset(z, s, p, g, elems_);
        for (std::size_t e = 0; e < elems_.size(); ++e) {
          if (!elems_[e].touches(z)) continue;
          const double f = cfg_.flow_mode == FlowMode::magnitude ? std::abs(p.flow[s][e]) : p.flow[s][e];
          if (std::abs(f - g.flow[s][e]) > cfg_.consensus_tol_mw) return false;
          if (!binds_angles(elems_[e], p, g)) continue;
          for (int end = 0; end < 2; ++end) {
            const double r = p.angle[s][e][end] - g.phi[s][elems_[e].node(end)] - offset;
            if (std::abs(r) > cfg_.consensus_tol_rad) return false;
          }
        }
      }
    }
    return true;
  }

  Stage1TraceRow trace_row(long nu, const RegionalProposal& p, const TpcDecision& tpc) const {
    std::vector<int> stakes;
    for (int k : shared_candidates_) {
      if (p.u[k] >= 0) stakes.push_back(k);
    }
    std::vector<int> internal;
    for (std::size_t k = 0; k < p.u.size(); ++k) {
      if (p.u[k] >= 0 && idx_.candidates()[k].shared() == false) internal.push_back(static_cast<int>(k));
    }
    stakes.insert(stakes.end(), internal.begin(), internal.end());
    return {nu, net_.regions[p.region], detail::join_u(p.u, stakes), detail::join_u(tpc.copies.u, shared_candidates_),
            bounds_.lb, bounds_.ub, bounds_.gap};
  }

 private:
  const Network& net_;
  Stage1Config cfg_;
  NetworkIndex idx_;
  std::vector<SharedElement> elems_;
  std::vector<int> shared_candidates_;
  double beta_ = 1.0;
  std::vector<DualSet> duals_;
  std::vector<long> nu_;
  std::vector<detail::RegionalModel> regional_;
  detail::TpcModel tpc_;
  BoundReport bounds_;
  std::map<std::vector<int>, double> ub_cache_;
};

/// Hooks for observing a Stage I run; the agent runtime uses these to log
/// the message exchange.
struct Stage1Observer {
  virtual ~Stage1Observer() = default;
  virtual void on_round_start(long /*nu*/, const std::vector<bool>& /*participating*/, const Stage1Engine&) {}
  virtual void on_proposal(long /*nu*/, const RegionalProposal&) {}
  virtual void on_tpc(long /*nu*/, const TpcDecision&) {}
  virtual void on_bounds(long /*nu*/, const BoundReport&) {}
  virtual void on_update(long /*nu*/, int /*z*/, const DualSet&) {}
  virtual void on_stop(long /*nu*/, StopReason) {}
};

namespace detail {

inline void finish_stage1(Stage1Engine& eng, Stage1Result& r, const std::vector<RegionalProposal>& latest,
                          const TpcDecision& tpc) {
  r.u_tpc = tpc.copies.u;
  r.u_regional.clear();
  for (const auto& p : latest) r.u_regional.push_back(p.u);
  r.duals = eng.all_duals();
  r.copies = tpc.copies;
  const auto& b = eng.bounds();
  r.lb = b.lb;
  r.ub = b.ub;
  r.ub_phys = b.ub_phys;
  r.ub_split = b.ub_split;
  r.gap = b.gap;
  r.u = r.u_consensus ? tpc.copies.u : (b.incumbent.empty() ? tpc.copies.u : b.incumbent);
  r.plan = fixed_u_dcopf(eng.net(), r.u);
}

}  // namespace detail

/// Runs Stage I rounds until consensus, a small non-negative gap, or the
/// iteration limit.
inline Stage1Result run_stage1(const Network& net, const Stage1Config& cfg, Stage1Observer* obs = nullptr) {
  Stage1Engine eng(net, cfg);
  const int R = eng.num_regions();
  Participation sched(cfg.schedule, R);
  std::vector<RegionalProposal> latest(R);
  TpcDecision tpc;
  Stage1Result r;
  long agree_since = -1;
  for (long nu = 0;; ++nu) {
    std::vector<bool> in = sched.next();
    if (nu == 0) std::fill(in.begin(), in.end(), true);
    if (obs) obs->on_round_start(nu, in, eng);
    for (int z = 0; z < R; ++z) {
      if (!in[z]) continue;
      latest[z] = eng.solve_region(z);
      if (obs) obs->on_proposal(nu, latest[z]);
    }
    tpc = eng.solve_tpc(latest);
    if (obs) obs->on_tpc(nu, tpc);
    const auto& b = eng.compute_bounds(latest, tpc);
    if (obs) obs->on_bounds(nu, b);
    for (int z = 0; z < R; ++z) r.trace.push_back(eng.trace_row(nu, latest[z], tpc));
    const bool agree = eng.u_consensus(latest, tpc);
    if (agree && agree_since < 0) agree_since = nu;
    if (!agree) agree_since = -1;
    const bool full = eng.full_consensus(latest, tpc);
    for (int z = 0; z < R; ++z) {
      if (!in[z]) continue;
      eng.apply_updates(z, latest[z], tpc);
      if (obs) obs->on_update(nu, z, eng.duals(z));
    }
    const StopReason why = check_termination(b.lb, b.ub, full, nu + 1, cfg.epsilon, cfg.max_iter);
    if (why != StopReason::none) {
      r.reason = why;
      r.iterations = nu + 1;
      r.u_consensus = agree;
      r.full_consensus = full;
      r.u_consensus_round = agree ? agree_since + 1 : -1;
      if (obs) obs->on_stop(nu, why);
      break;
    }
  }
  detail::finish_stage1(eng, r, latest, tpc);
  return r;
}

inline nlohmann::json to_json(const Network& net, const Stage1Result& r) {
  nlohmann::json j;
  j["reason"] = to_string(r.reason);
  j["iterations"] = r.iterations;
  j["converged"] = r.converged();
  j["u_consensus"] = r.u_consensus;
  j["full_consensus"] = r.full_consensus;
  j["u_consensus_round"] = r.u_consensus_round;
  auto named = [&](const std::vector<int>& u) {
    nlohmann::json o = nlohmann::json::object();
    for (std::size_t k = 0; k < u.size(); ++k) {
      if (u[k] >= 0) o[net.candidate_lines[k].id] = u[k];
    }
    return o;
  };
  j["build"] = named(r.u);
  j["build_coordinator"] = named(r.u_tpc);
  nlohmann::json reg = nlohmann::json::object();
  for (std::size_t z = 0; z < r.u_regional.size(); ++z) reg[net.regions[z]] = named(r.u_regional[z]);
  j["build_regional"] = reg;
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  j["lb"] = num(r.lb);
  j["ub"] = num(r.ub);
  j["ub_phys"] = num(r.ub_phys);
  j["ub_split"] = num(r.ub_split);
  j["gap"] = num(r.gap);
  nlohmann::json dn = nlohmann::json::object();
  for (std::size_t z = 0; z < r.duals.size(); ++z) {
    nlohmann::json d;
    d["norm"] = r.duals[z].norm();
    nlohmann::json pi = nlohmann::json::object();
    for (std::size_t k = 0; k < r.duals[z].pi.size(); ++k) {
      if (r.u_regional.size() > z && r.u_regional[z][k] >= 0) pi[net.candidate_lines[k].id] = r.duals[z].pi[k];
    }
    d["pi"] = pi;
    dn[net.regions[z]] = d;
  }
  j["duals"] = dn;
  j["plan"] = to_json(net, r.plan);
  return j;
}

}  // namespace gridcoord
