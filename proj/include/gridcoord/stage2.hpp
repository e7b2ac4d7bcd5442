#pragma once

// Stage II: auxiliary-problem-principle iterations on boundary angles with
// the build decisions held fixed.
//
// Every region keeps a belief about the angle at both ends of each tie line
// it touches: its own bus angle at the near end and a private copy at the
// far end. Region z's quadratic program adds, per (tie, end, scenario),
//   eta * v * (v_z^sigma - v_z'^sigma) + gamma/2 * (v - v_z^sigma)^2 + lambda_zz' * v
// and lambda_zz' moves by delta * (v_z - v_z') after each round.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/boundary.hpp"
#include "gridcoord/centralized.hpp"
#include "gridcoord/netmodel.hpp"
#include "gridcoord/solver.hpp"

namespace gridcoord {

struct Stage2Config {
  double eta = 1.0;
  double gamma = 2.0;
  double delta = 1.0;
  double epsilon = 1e-4;
  int max_iter = 5000;
  double tol = 1e-9;  // QP tolerance

  void validate() const {
    if (!(gamma > 0)) throw DomainError("stage2: gamma must be positive");
    if (!(delta > 0)) throw DomainError("stage2: delta must be positive");
    if (!(eta >= 0)) throw DomainError("stage2: eta must be non-negative");
    if (!(epsilon > 0)) throw DomainError("stage2: epsilon must be positive");
    if (max_iter < 1) throw DomainError("stage2: max_iter must be >= 1");
  }
};

/// Beliefs and multipliers, indexed [region][scenario][tie][end]. Entries of
/// regions that do not touch a tie stay zero.
template <class T>
using TieTable = std::vector<std::vector<std::vector<std::array<T, 2>>>>;

struct Stage2State {
  long sigma = 0;
  TieTable<double> belief;
  TieTable<double> lambda;  // lambda[z] pairs z with the other stakeholder of the tie
};

/// lambda_zz' += delta * (v_z - v_z') for both stakeholders of every tie.
inline void update_lambdas(Stage2State& st, const std::vector<SharedElement>& ties, double delta) {
  for (std::size_t t = 0; t < ties.size(); ++t) {
    const int a = ties[t].from_region, b = ties[t].to_region;
    for (std::size_t s = 0; s < st.belief[a].size(); ++s) {
      for (int end = 0; end < 2; ++end) {
        const double diff = st.belief[a][s][t][end] - st.belief[b][s][t][end];
        st.lambda[a][s][t][end] += delta * diff;
        st.lambda[b][s][t][end] -= delta * diff;
      }
    }
  }
  ++st.sigma;
}

/// Largest (v_z,i - v_z',i)^2 + (v_z,j - v_z',j)^2 over ties and scenarios.
inline double app_residual(const Stage2State& st, const std::vector<SharedElement>& ties) {
  double worst = 0.0;
  for (std::size_t t = 0; t < ties.size(); ++t) {
    const int a = ties[t].from_region, b = ties[t].to_region;
    for (std::size_t s = 0; s < st.belief[a].size(); ++s) {
      double r = 0.0;
      for (int end = 0; end < 2; ++end) {
        const double d = st.belief[a][s][t][end] - st.belief[b][s][t][end];
        r += d * d;
      }
      worst = std::max(worst, r);
    }
  }
  return worst;
}

namespace detail {

struct AppTerm {
  int col;
  int tie, end;
};

struct AppModel {
  int region = -1;
  solver::QuadraticProgram qp;
  std::vector<double> base_cost;
  std::vector<std::vector<std::vector<int>>> seg;    // [s][g]
  std::vector<std::vector<int>> theta;               // [s][n], own buses
  std::vector<std::vector<int>> internal_flow;       // [s][line] over existing then candidates, -1 if not internal
  std::vector<std::vector<AppTerm>> terms;           // [s]
};

inline AppModel build_app_model(int z, const Network& net, const std::vector<int>& u,
                                const std::vector<SharedElement>& ties, double gamma) {
  NetworkIndex idx(net);
  if (z < 0 || z >= idx.num_regions()) throw DomainError("unknown region index " + std::to_string(z));
  AppModel m;
  m.region = z;
  auto& lp = m.qp.lp;
  const int S = idx.num_scenarios(), N = idx.num_nodes(), G = static_cast<int>(net.generators.size());
  const int H = static_cast<int>(net.existing_lines.size()), K = static_cast<int>(net.candidate_lines.size());
  const int ref = reference_node(net);
  const std::string rz = net.regions[z];
  m.seg.assign(S, std::vector<std::vector<int>>(G));
  m.theta.assign(S, std::vector<int>(N, -1));
  m.internal_flow.assign(S, std::vector<int>(H + K, -1));
  m.terms.assign(S, {});
  for (int s = 0; s < S; ++s) {
    const std::string tag = rz + ".s" + std::to_string(s) + ".";
    for (int g = 0; g < G; ++g) {
      if (idx.region_of_generator(g) == z) m.seg[s][g] = add_generator(lp, net, g, s, net.scenarios[s].weight, tag);
    }
    for (int n : idx.region_nodes(z)) {
      const double b = n == ref ? 0.0 : net.angle_bound;
      m.theta[s][n] = lp.add_column(tag + "theta[" + net.nodes[n].id + "]", -b, b);
    }
    std::vector<std::vector<std::pair<int, double>>> balance(N);
    auto internal = [&](const Branch& br, const std::string& id, int slot) {
      const int f = lp.add_column(tag + "P[" + id + "]", -br.capacity, br.capacity);
      lp.add_row(tag + "dc[" + id + "]", 0.0, 0.0,
                 {{f, 1.0}, {m.theta[s][br.from], -1.0 / br.reactance}, {m.theta[s][br.to], 1.0 / br.reactance}});
      balance[br.from].push_back({f, -1.0});
      balance[br.to].push_back({f, 1.0});
      m.internal_flow[s][slot] = f;
    };
    for (int h = 0; h < H; ++h) {
      const auto& br = idx.existing()[h];
      if (!br.shared() && br.from_region == z) internal(br, net.existing_lines[h].id, h);
    }
    for (int k = 0; k < K; ++k) {
      const auto& br = idx.candidates()[k];
      if (!br.shared() && br.from_region == z && u.at(k) == 1) internal(br, net.candidate_lines[k].id, H + k);
    }
    for (int t = 0; t < static_cast<int>(ties.size()); ++t) {
      const auto& el = ties[t];
      if (!el.touches(z)) continue;
      std::array<int, 2> col{};
      for (int end = 0; end < 2; ++end) {
        const int n = el.node(end);
        if (idx.region_of_node(n) == z) {
          col[end] = m.theta[s][n];
        } else {
          col[end] = lp.add_column(tag + "belief[" + el.id + "," + net.nodes[n].id + "]", -net.angle_bound,
                                   net.angle_bound);
        }
        m.qp.add_quadratic(col[end], col[end], gamma);
        m.terms[s].push_back({col[end], t, end});
      }
      // Line flow implied by this region's beliefs; capacity enforced as a row.
      const double y = 1.0 / el.reactance;
      const int row = lp.add_row(tag + "cap[" + el.id + "]", -el.capacity, el.capacity, {{col[0], y}, {col[1], -y}});
      (void)row;
      for (int end = 0; end < 2; ++end) {
        const int n = el.node(end);
        if (idx.region_of_node(n) != z) continue;
        const double sign = end == 0 ? -1.0 : 1.0;  // flow leaves `from`, enters `to`
        balance[n].push_back({col[0], sign * y});
        balance[n].push_back({col[1], -sign * y});
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

}  // namespace detail

namespace detail {

inline void price_app(AppModel& m, const Stage2State& st, const std::vector<SharedElement>& ties,
                      const Stage2Config& cfg) {
  const int z = m.region;
  auto& cost = m.qp.lp.cost;
  cost = m.base_cost;
  for (std::size_t s = 0; s < m.terms.size(); ++s) {
    for (const auto& term : m.terms[s]) {
      const auto& el = ties[term.tie];
      const int other = el.from_region == z ? el.to_region : el.from_region;
      const double own = st.belief[z][s][term.tie][term.end];
      const double theirs = st.belief[other][s][term.tie][term.end];
      cost[term.col] += cfg.eta * (own - theirs) - cfg.gamma * own + st.lambda[z][s][term.tie][term.end];
    }
  }
}

}  // namespace detail

/// Region z's auxiliary problem at the current beliefs and multipliers.
inline solver::QuadraticProgram build_app_subproblem(int z, const Stage2State& st, const Network& net,
                                                     const std::vector<int>& u, const Stage2Config& cfg = {}) {
  const auto ties = tie_lines(net, u);
  auto m = detail::build_app_model(z, net, u, ties, cfg.gamma);
  detail::price_app(m, st, ties, cfg);
  return m.qp;
}

struct Stage2TraceRow {
  long sigma = 0;
  double max_residual = 0.0;
  double objective = 0.0;
};

struct Stage2Result {
  bool converged = false;
  long iterations = 0;
  double residual = kInf;
  Stage2State state;
  std::vector<SharedElement> ties;
  std::vector<double> regional_cost;  // weighted generation cost per region
  PlanResult plan;                    // dispatch, flows from averaged beliefs, objective
  std::vector<Stage2TraceRow> trace;
};

namespace detail {

inline void assemble_stage2_plan(const Network& net, const std::vector<int>& u, const std::vector<AppModel>& models,
                                 const std::vector<std::vector<double>>& xs, Stage2Result& r) {
  NetworkIndex idx(net);
  const int S = idx.num_scenarios(), N = idx.num_nodes(), G = static_cast<int>(net.generators.size());
  const int H = static_cast<int>(net.existing_lines.size()), K = static_cast<int>(net.candidate_lines.size());
  auto& p = r.plan;
  p.status = solver::Status::optimal;
  p.build = u;
  p.dispatch.assign(S, std::vector<double>(G, 0.0));
  p.generation_cost.assign(S, std::vector<double>(G, 0.0));
  p.angle.assign(S, std::vector<double>(N, 0.0));
  p.existing_flow.assign(S, std::vector<double>(H, 0.0));
  p.candidate_flow.assign(S, std::vector<double>(K, 0.0));
  r.regional_cost.assign(models.size(), 0.0);
  p.operational_cost = 0.0;
  for (std::size_t z = 0; z < models.size(); ++z) {
    const auto& m = models[z];
    const auto& x = xs[z];
    for (int s = 0; s < S; ++s) {
      for (int g = 0; g < G; ++g) {
        for (int c : m.seg[s][g]) p.dispatch[s][g] += x[c];
        if (!m.seg[s][g].empty()) {
          p.generation_cost[s][g] = generator_cost(net.generators[g], p.dispatch[s][g]);
          const double w = net.scenarios[s].weight * p.generation_cost[s][g];
          r.regional_cost[z] += w;
          p.operational_cost += w;
        }
      }
      for (int n = 0; n < N; ++n) {
        if (m.theta[s][n] >= 0) p.angle[s][n] = x[m.theta[s][n]];
      }
      for (int l = 0; l < H + K; ++l) {
        if (m.internal_flow[s][l] < 0) continue;
        (l < H ? p.existing_flow[s][l] : p.candidate_flow[s][l - H]) = x[m.internal_flow[s][l]];
      }
    }
  }
  for (std::size_t t = 0; t < r.ties.size(); ++t) {
    const auto& el = r.ties[t];
    for (int s = 0; s < S; ++s) {
      const auto& a = r.state.belief[el.from_region][s][t];
      const auto& b = r.state.belief[el.to_region][s][t];
      const double flow = (0.5 * (a[0] + b[0]) - 0.5 * (a[1] + b[1])) / el.reactance;
      (el.candidate ? p.candidate_flow[s][el.index] : p.existing_flow[s][el.index]) = flow;
    }
  }
  p.investment_cost = 0.0;
  for (int k = 0; k < K; ++k) {
    if (u[k] == 1) p.investment_cost += annualized_cost(net, net.candidate_lines[k]);
  }
  p.objective = p.operational_cost + p.investment_cost;
  p.best_bound = -kInf;
  p.relaxation_bound = -kInf;
}

}  // namespace detail

/// One region's answer in a Stage II round.
struct Stage2Proposal {
  int region = -1;
  std::vector<std::vector<std::array<double, 2>>> belief;  // [s][tie]
  std::vector<double> x;                                    // full QP solution
};

/// Holds Stage II state; a round is one solve_region per region followed
/// by commit.
class Stage2Engine {
 public:
  Stage2Engine(const Network& net, std::vector<int> u, Stage2Config cfg)
      : net_(net), u_(std::move(u)), cfg_(cfg), idx_(net) {
    require_valid(net_);
    cfg_.validate();
    if (u_.size() != net_.candidate_lines.size()) throw DomainError("stage2: build vector has the wrong length");
    const int R = idx_.num_regions(), S = idx_.num_scenarios();
    r_.ties = tie_lines(net_, u_);
    const int T = static_cast<int>(r_.ties.size());
    auto& st = r_.state;
    st.belief.assign(R, std::vector<std::vector<std::array<double, 2>>>(S, std::vector<std::array<double, 2>>(T, {0.0, 0.0})));
    st.lambda = st.belief;
    for (int z = 0; z < R; ++z) models_.push_back(detail::build_app_model(z, net_, u_, r_.ties, cfg_.gamma));
    warm_.resize(R);
    xs_.resize(R);
    qopt_.tol = cfg_.tol;
  }

  int num_regions() const { return idx_.num_regions(); }
  const Stage2Config& config() const { return cfg_; }
  const Stage2State& state() const { return r_.state; }
  const std::vector<SharedElement>& ties() const { return r_.ties; }
  const Stage2Result& result() const { return r_; }
  long sigma() const { return r_.state.sigma; }

  Stage2Proposal solve_region(int z) {
    auto& m = models_.at(z);
    detail::price_app(m, r_.state, r_.ties, cfg_);
    auto sol = solver::solve_qp(m.qp, qopt_, &warm_[z]);
    if (!sol.optimal()) {
      throw Error("stage2: region '" + net_.regions[z] + "' subproblem is " + solver::to_string(sol.status));
    }
    Stage2Proposal p;
    p.region = z;
    p.belief = r_.state.belief[z];
    for (std::size_t s = 0; s < m.terms.size(); ++s) {
      for (const auto& term : m.terms[s]) p.belief[s][term.tie][term.end] = sol.x[term.col];
    }
    p.x = std::move(sol.x);
    return p;
  }

  /// Installs the round's beliefs, moves the multipliers and records the
  /// residual. Returns true once the residual is within epsilon.
  bool commit(std::vector<Stage2Proposal> round) {
    for (auto& p : round) {
      r_.state.belief[p.region] = std::move(p.belief);
      xs_[p.region] = std::move(p.x);
    }
    update_lambdas(r_.state, r_.ties, cfg_.delta);
    r_.residual = app_residual(r_.state, r_.ties);
    detail::assemble_stage2_plan(net_, u_, models_, xs_, r_);
    r_.iterations = r_.state.sigma;
    r_.trace.push_back({r_.state.sigma, r_.residual, r_.plan.objective});
    r_.converged = r_.residual <= cfg_.epsilon;
    return r_.converged;
  }

 private:
  const Network& net_;
  std::vector<int> u_;
  Stage2Config cfg_;
  NetworkIndex idx_;
  Stage2Result r_;
  std::vector<detail::AppModel> models_;
  std::vector<solver::QpWarmStart> warm_;
  std::vector<std::vector<double>> xs_;
  solver::QpOptions qopt_;
};

/// Jacobi rounds of regional solves followed by multiplier updates, until
/// the largest paired-belief residual is at most epsilon.
inline Stage2Result run_stage2(const Network& net, const std::vector<int>& u, const Stage2Config& cfg = {}) {
  Stage2Engine eng(net, u, cfg);
  for (long sigma = 0; sigma < cfg.max_iter; ++sigma) {
    std::vector<Stage2Proposal> round;
    for (int z = 0; z < eng.num_regions(); ++z) round.push_back(eng.solve_region(z));
    if (eng.commit(std::move(round))) break;
  }
  return eng.result();
}

inline nlohmann::json to_json(const Network& net, const Stage2Result& r) {
  nlohmann::json j;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["residual"] = r.residual;
  nlohmann::json rc = nlohmann::json::object();
  for (std::size_t z = 0; z < r.regional_cost.size(); ++z) rc[net.regions[z]] = r.regional_cost[z];
  j["regional_cost"] = rc;
  j["plan"] = to_json(net, r.plan);
  return j;
}

}  // namespace gridcoord
