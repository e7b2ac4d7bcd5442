#pragma once

// Centralized expansion-planning benchmark: one MILP over all regions and
// scenarios, a fixed-build LP (the product form with u known), and an
// exhaustive planner over build vectors used as an oracle.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/netmodel.hpp"
#include "gridcoord/solver.hpp"

namespace gridcoord {

using solver::kInf;

/// Disjunctive constant for a candidate: with u = 0 the two big-M rows are
/// slack for every angle pair inside the box and every admissible flow.
inline double big_m(const CandidateLine& k, const Network& net) {
  if (!(k.reactance > 0.0)) throw DomainError("big_m: candidate '" + k.id + "' has non-positive reactance");
  return 2.0 * net.angle_bound / k.reactance + k.capacity;
}

struct PlanResult {
  solver::Status status = solver::Status::infeasible;
  std::vector<int> build;                             // per candidate
  std::vector<std::vector<double>> dispatch;          // [s][g] MW
  std::vector<std::vector<double>> generation_cost;   // [s][g] $ (unweighted)
  std::vector<std::vector<double>> existing_flow;     // [s][h] MW, from -> to
  std::vector<std::vector<double>> candidate_flow;    // [s][k] MW, 0 if unbuilt
  std::vector<std::vector<double>> angle;             // [s][n] rad
  double objective = kInf;
  double operational_cost = kInf;  // sum_s w_s * generation cost
  double investment_cost = kInf;   // sum_k u_k * annualized cost
  double best_bound = -kInf;
  double relaxation_bound = -kInf;
  long nodes = 0;

  bool optimal() const { return status == solver::Status::optimal; }
};

/// Cost of producing p MW on generator g (unweighted by scenario hours).
inline double generator_cost(const Generator& g, double p) {
  double cost = 0.0, prev = 0.0;
  for (const auto& seg : g.cost_curve) {
    if (p <= prev) break;
    cost += (std::min(p, seg.upper_mw) - prev) * seg.marginal_cost;
    prev = seg.upper_mw;
  }
  return cost;
}

namespace detail {

/// Segment columns for one generator in one scenario. Widths are clipped to
/// p_max; a row enforces p_min when positive.
inline std::vector<int> add_generator(solver::LinearProgram& lp, const Network& net, int g, int s, double weight,
                                      const std::string& tag) {
  const auto& gen = net.generators[g];
  const auto lim = net.limits(g, s);
  std::vector<int> cols;
  double prev = 0.0;
  for (std::size_t k = 0; k < gen.cost_curve.size(); ++k) {
    const double upper = std::min(gen.cost_curve[k].upper_mw, lim.p_max);
    const double width = std::max(0.0, upper - std::min(prev, lim.p_max));
    prev = gen.cost_curve[k].upper_mw;
    cols.push_back(lp.add_column(tag + "p[" + gen.id + "," + std::to_string(k) + "]", 0.0, width,
                                 weight * gen.cost_curve[k].marginal_cost));
  }
  if (lim.p_min > 0.0) {
    std::vector<std::pair<int, double>> row;
    for (int c : cols) row.push_back({c, 1.0});
    lp.add_row(tag + "pmin[" + gen.id + "]", lim.p_min, kInf, row);
  }
  return cols;
}

inline int reference_node(const Network& net) {
  int best = 0;
  for (int n = 1; n < static_cast<int>(net.nodes.size()); ++n) {
    if (net.nodes[n].id < net.nodes[best].id) best = n;
  }
  return best;
}

}  // namespace detail

/// Column layout of a centralized model; -1 marks an absent column.
struct CentralizedModel {
  solver::MixedIntegerProgram mip;
  std::vector<std::vector<std::vector<int>>> seg;  // [s][g] segment columns
  std::vector<std::vector<int>> theta;             // [s][n]
  std::vector<std::vector<int>> flow;              // [s][h]
  std::vector<std::vector<int>> cand;              // [s][k]
  std::vector<int> u;                              // [k]
};

namespace detail {

/// fixed == nullptr: big-M MILP with binary u. Otherwise the product form
/// with u known: built candidates get an exact flow equation, unbuilt ones
/// are dropped and their annualized cost is not charged.
inline CentralizedModel build_model(const Network& net, const std::vector<int>* fixed) {
  require_valid(net);
  NetworkIndex idx(net);
  CentralizedModel m;
  auto& lp = m.mip.lp;
  const int S = idx.num_scenarios(), N = idx.num_nodes();
  const int G = static_cast<int>(net.generators.size());
  const int H = static_cast<int>(idx.existing().size()), K = static_cast<int>(idx.candidates().size());
  const int ref = reference_node(net);
  m.u.assign(K, -1);
  for (int k = 0; k < K; ++k) {
    const double c = annualized_cost(net, net.candidate_lines[k]);
    if (!fixed) {
      m.u[k] = m.mip.add_binary("u[" + net.candidate_lines[k].id + "]", c);
    } else if ((*fixed)[k]) {
      lp.objective_offset += c;
    }
  }
  m.mip.integral.resize(lp.num_cols(), true);
  auto add_col = [&](std::string name, double lo, double hi, double c) {
    m.mip.integral.push_back(false);
    return lp.add_column(std::move(name), lo, hi, c);
  };
  m.seg.resize(S);
  m.theta.assign(S, std::vector<int>(N, -1));
  m.flow.assign(S, std::vector<int>(H, -1));
  m.cand.assign(S, std::vector<int>(K, -1));
  for (int s = 0; s < S; ++s) {
    const std::string tag = "s" + std::to_string(s) + ".";
    const double w = net.scenarios[s].weight;
    m.seg[s].resize(G);
    for (int g = 0; g < G; ++g) {
      std::vector<int> cols = add_generator(lp, net, g, s, w, tag);
      m.mip.integral.resize(lp.num_cols(), false);
      m.seg[s][g] = std::move(cols);
    }
    for (int n = 0; n < N; ++n) {
      const double b = n == ref ? 0.0 : net.angle_bound;
      m.theta[s][n] = add_col(tag + "theta[" + net.nodes[n].id + "]", -b, b, 0.0);
    }
    for (int h = 0; h < H; ++h) {
      const auto& br = idx.existing()[h];
      const int f = add_col(tag + "P[" + net.existing_lines[h].id + "]", -br.capacity, br.capacity, 0.0);
      m.flow[s][h] = f;
      lp.add_row(tag + "dc[" + net.existing_lines[h].id + "]", 0.0, 0.0,
                 {{f, 1.0}, {m.theta[s][br.from], -1.0 / br.reactance}, {m.theta[s][br.to], 1.0 / br.reactance}});
    }
    for (int k = 0; k < K; ++k) {
      const auto& br = idx.candidates()[k];
      const std::string& id = net.candidate_lines[k].id;
      const int ti = m.theta[s][br.from], tj = m.theta[s][br.to];
      if (fixed) {
        if (!(*fixed)[k]) continue;
        const int f = add_col(tag + "Phat[" + id + "]", -br.capacity, br.capacity, 0.0);
        m.cand[s][k] = f;
        lp.add_row(tag + "dc[" + id + "]", 0.0, 0.0,
                   {{f, 1.0}, {ti, -1.0 / br.reactance}, {tj, 1.0 / br.reactance}});
        continue;
      }
      const int f = add_col(tag + "Phat[" + id + "]", -br.capacity, br.capacity, 0.0);
      m.cand[s][k] = f;
      const double M = big_m(net.candidate_lines[k], net);
      const int u = m.u[k];
      lp.add_row(tag + "bigm_hi[" + id + "]", -kInf, M,
                 {{f, 1.0}, {ti, -1.0 / br.reactance}, {tj, 1.0 / br.reactance}, {u, M}});
      lp.add_row(tag + "bigm_lo[" + id + "]", -M, kInf,
                 {{f, 1.0}, {ti, -1.0 / br.reactance}, {tj, 1.0 / br.reactance}, {u, -M}});
      lp.add_row(tag + "cap_hi[" + id + "]", -kInf, 0.0, {{f, 1.0}, {u, -br.capacity}});
      lp.add_row(tag + "cap_lo[" + id + "]", 0.0, kInf, {{f, 1.0}, {u, br.capacity}});
    }
    for (int n = 0; n < N; ++n) {
      std::vector<std::pair<int, double>> row;
      for (int g : idx.generators_at(n)) {
        for (int c : m.seg[s][g]) row.push_back({c, 1.0});
      }
      for (int h = 0; h < H; ++h) {
        if (idx.existing()[h].from == n) row.push_back({m.flow[s][h], -1.0});
        if (idx.existing()[h].to == n) row.push_back({m.flow[s][h], 1.0});
      }
      for (int k = 0; k < K; ++k) {
        if (m.cand[s][k] < 0) continue;
        if (idx.candidates()[k].from == n) row.push_back({m.cand[s][k], -1.0});
        if (idx.candidates()[k].to == n) row.push_back({m.cand[s][k], 1.0});
      }
      const double d = idx.node_demand(n, s);
      lp.add_row(tag + "balance[" + net.nodes[n].id + "]", d, d, row);
    }
  }
  return m;
}

inline PlanResult extract_plan(const Network& net, const CentralizedModel& m, const solver::Solution& sol,
                               const std::vector<int>& build) {
  PlanResult p;
  p.status = sol.status;
  if (sol.x.empty()) return p;
  const int S = static_cast<int>(m.theta.size());
  const int G = static_cast<int>(net.generators.size());
  p.build = build;
  p.dispatch.assign(S, std::vector<double>(G, 0.0));
  p.generation_cost.assign(S, std::vector<double>(G, 0.0));
  p.operational_cost = 0.0;
  for (int s = 0; s < S; ++s) {
    for (int g = 0; g < G; ++g) {
      const auto& curve = net.generators[g].cost_curve;
      for (std::size_t k = 0; k < m.seg[s][g].size(); ++k) {
        const double v = sol.x[m.seg[s][g][k]];
        p.dispatch[s][g] += v;
        p.generation_cost[s][g] += v * curve[k].marginal_cost;
      }
      p.operational_cost += net.scenarios[s].weight * p.generation_cost[s][g];
    }
  }
  auto take = [&](const std::vector<std::vector<int>>& cols) {
    std::vector<std::vector<double>> out(cols.size());
    for (std::size_t s = 0; s < cols.size(); ++s) {
      for (int c : cols[s]) out[s].push_back(c < 0 ? 0.0 : sol.x[c]);
    }
    return out;
  };
  p.existing_flow = take(m.flow);
  p.candidate_flow = take(m.cand);
  p.angle = take(m.theta);
  p.investment_cost = 0.0;
  for (std::size_t k = 0; k < build.size(); ++k) {
    if (build[k]) p.investment_cost += annualized_cost(net, net.candidate_lines[k]);
  }
  p.objective = p.operational_cost + p.investment_cost;
  return p;
}

}  // namespace detail

inline solver::MixedIntegerProgram build_centralized(const Network& net) { return detail::build_model(net, nullptr).mip; }

/// The product-form LP for a known build vector (unbuilt candidates removed).
inline solver::LinearProgram build_fixed_u(const Network& net, const std::vector<int>& u) {
  if (u.size() != net.candidate_lines.size()) throw DomainError("build vector length does not match candidate count");
  return detail::build_model(net, &u).mip.lp;
}

/// The big-M model with every binary pinned to u (an LP).
inline solver::LinearProgram build_big_m_fixed(const Network& net, const std::vector<int>& u) {
  if (u.size() != net.candidate_lines.size()) throw DomainError("build vector length does not match candidate count");
  auto m = detail::build_model(net, nullptr);
  for (std::size_t k = 0; k < u.size(); ++k) {
    m.mip.lp.col_lower[m.u[k]] = m.mip.lp.col_upper[m.u[k]] = u[k] ? 1.0 : 0.0;
  }
  return m.mip.lp;
}

/// Violations of the physical plan invariants, empty when the plan is sound.
inline std::vector<std::string> check_plan(const Network& net, const PlanResult& p, double tol = 1e-6) {
  std::vector<std::string> out;
  if (!p.optimal()) return out;
  NetworkIndex idx(net);
  const int S = idx.num_scenarios();
  auto bad = [&](const std::string& what, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.6g)", v);
    out.push_back(what + buf);
  };
  for (int s = 0; s < S; ++s) {
    const std::string tag = "scenario " + net.scenarios[s].id + ": ";
    std::vector<double> inj(idx.num_nodes(), 0.0);
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
      const auto lim = net.limits(g, s);
      const double v = p.dispatch[s][g];
      if (v < lim.p_min - tol || v > lim.p_max + tol) bad(tag + "generator " + net.generators[g].id + " outside limits", v);
      inj[idx.generator_node(static_cast<int>(g))] += v;
    }
    for (int n = 0; n < idx.num_nodes(); ++n) inj[n] -= idx.node_demand(n, s);
    for (std::size_t h = 0; h < idx.existing().size(); ++h) {
      const auto& br = idx.existing()[h];
      const double f = p.existing_flow[s][h];
      if (std::abs(f) > br.capacity * (1 + tol) + tol) bad(tag + "line " + net.existing_lines[h].id + " over capacity", f);
      const double law = (p.angle[s][br.from] - p.angle[s][br.to]) / br.reactance;
      if (std::abs(f - law) > tol * std::max(1.0, std::abs(f))) bad(tag + "line " + net.existing_lines[h].id + " violates flow law", f - law);
      inj[br.from] -= f;
      inj[br.to] += f;
    }
    for (std::size_t k = 0; k < idx.candidates().size(); ++k) {
      const auto& br = idx.candidates()[k];
      const double f = p.candidate_flow[s][k];
      if (std::abs(f) > p.build[k] * br.capacity * (1 + tol) + tol) bad(tag + "candidate " + net.candidate_lines[k].id + " over capacity", f);
      if (p.build[k]) {
        const double law = (p.angle[s][br.from] - p.angle[s][br.to]) / br.reactance;
        if (std::abs(f - law) > tol * std::max(1.0, std::abs(f))) bad(tag + "candidate " + net.candidate_lines[k].id + " violates flow law", f - law);
      }
      inj[br.from] -= f;
      inj[br.to] += f;
    }
    for (int n = 0; n < idx.num_nodes(); ++n) {
      if (std::abs(inj[n]) > tol * std::max(1.0, idx.node_demand(n, s))) bad(tag + "imbalance at node " + net.nodes[n].id, inj[n]);
    }
    for (int n = 0; n < idx.num_nodes(); ++n) {
      if (std::abs(p.angle[s][n]) > net.angle_bound + tol) bad(tag + "angle outside box at node " + net.nodes[n].id, p.angle[s][n]);
    }
  }
  double inv = 0.0;
  for (std::size_t k = 0; k < p.build.size(); ++k) {
    if (p.build[k]) inv += annualized_cost(net, net.candidate_lines[k]);
  }
  if (std::abs(inv - p.investment_cost) > 1e-9 * std::max(1.0, inv)) bad("investment cost mismatch", p.investment_cost - inv);
  return out;
}

inline void verify_plan(const Network& net, const PlanResult& p, double tol = 1e-6) {
  auto issues = check_plan(net, p, tol);
  if (!issues.empty()) throw Error("plan failed verification: " + issues.front());
}

/// Centralized DCOPF with a known build vector.
inline PlanResult fixed_u_dcopf(const Network& net, const std::vector<int>& u, double tol = 1e-7) {
  if (u.size() != net.candidate_lines.size()) throw DomainError("build vector length does not match candidate count");
  auto m = detail::build_model(net, &u);
  auto sol = solver::solve_lp(m.mip.lp, tol);
  auto plan = detail::extract_plan(net, m, sol, u);
  if (plan.optimal()) verify_plan(net, plan);
  return plan;
}

inline PlanResult solve_centralized(const Network& net, double rel_gap = 1e-6) {
  auto m = detail::build_model(net, nullptr);
  auto sol = solver::solve_milp(m.mip, rel_gap);
  std::vector<int> build(net.candidate_lines.size(), 0);
  if (!sol.x.empty()) {
    for (std::size_t k = 0; k < build.size(); ++k) build[k] = sol.x[m.u[k]] > 0.5 ? 1 : 0;
  }
  auto plan = detail::extract_plan(net, m, sol, build);
  plan.best_bound = sol.best_bound;
  plan.relaxation_bound = sol.relaxation_bound;
  plan.nodes = sol.nodes;
  if (!sol.x.empty()) plan.objective = sol.objective;
  if (plan.optimal()) verify_plan(net, plan);
  return plan;
}

inline constexpr std::size_t kMaxBruteForceCandidates = 16;

/// Exhaustive search over build vectors, each solved as a fixed-u LP. Ties
/// keep the lexicographically smallest vector (candidate 0 least significant).
inline PlanResult brute_force_plan(const Network& net) {
  const std::size_t K = net.candidate_lines.size();
  if (K > kMaxBruteForceCandidates) {
    throw SizeError("brute_force_plan: " + std::to_string(K) + " candidates exceeds the limit of " +
                    std::to_string(kMaxBruteForceCandidates));
  }
  PlanResult best;
  for (unsigned long mask = 0; mask < (1ul << K); ++mask) {
    std::vector<int> u(K);
    for (std::size_t k = 0; k < K; ++k) u[k] = (mask >> k) & 1ul;
    auto plan = fixed_u_dcopf(net, u);
    if (plan.optimal() && (!best.optimal() || plan.objective < best.objective - 1e-9 * std::max(1.0, std::abs(best.objective)))) {
      best = std::move(plan);
    }
  }
  return best;
}

inline nlohmann::json to_json(const Network& net, const PlanResult& p) {
  nlohmann::json j;
  j["status"] = solver::to_string(p.status);
  if (!p.optimal() && p.status != solver::Status::iteration_limit) return j;
  j["objective"] = p.objective;
  j["operational_cost"] = p.operational_cost;
  j["investment_cost"] = p.investment_cost;
  nlohmann::json build = nlohmann::json::object();
  for (std::size_t k = 0; k < p.build.size(); ++k) build[net.candidate_lines[k].id] = p.build[k];
  j["build"] = build;
  nlohmann::json scen = nlohmann::json::array();
  for (std::size_t s = 0; s < p.dispatch.size(); ++s) {
    nlohmann::json js;
    js["id"] = net.scenarios[s].id;
    for (std::size_t g = 0; g < net.generators.size(); ++g) js["dispatch"][net.generators[g].id] = p.dispatch[s][g];
    js["existing_flows"] = nlohmann::json::object();
    for (std::size_t h = 0; h < net.existing_lines.size(); ++h) js["existing_flows"][net.existing_lines[h].id] = p.existing_flow[s][h];
    js["candidate_flows"] = nlohmann::json::object();
    for (std::size_t k = 0; k < net.candidate_lines.size(); ++k) js["candidate_flows"][net.candidate_lines[k].id] = p.candidate_flow[s][k];
    for (std::size_t n = 0; n < net.nodes.size(); ++n) js["angles"][net.nodes[n].id] = p.angle[s][n];
    scen.push_back(js);
  }
  j["scenarios"] = scen;
  return j;
}

}  // namespace gridcoord
