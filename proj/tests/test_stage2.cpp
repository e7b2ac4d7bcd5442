#include <gtest/gtest.h>

#include <random>

#include "gridcoord/stage2.hpp"
#include "support/random_net.hpp"

using namespace gridcoord;

namespace {

Network load(const char* file) { return load_case(std::string(GRIDCOORD_CASE_DIR) + "/" + file); }

Stage2State blank_state(int R, int S, int T) {
  Stage2State st;
  st.belief.assign(R, std::vector<std::vector<std::array<double, 2>>>(S, std::vector<std::array<double, 2>>(T, {0.0, 0.0})));
  st.lambda = st.belief;
  return st;
}

}  // namespace

TEST(Stage2Lambda, HandArithmetic) {
  Network net = load("two_region.json");
  auto ties = tie_lines(net, {1});
  ASSERT_EQ(ties.size(), 2u);
  auto st = blank_state(2, 1, 2);
  const int a = ties[0].from_region, b = ties[0].to_region;
  st.belief[a][0][0][0] = 0.3;
  st.belief[b][0][0][0] = 0.1;
  update_lambdas(st, ties, 2.0);
  EXPECT_DOUBLE_EQ(st.lambda[a][0][0][0], 0.4);
  EXPECT_DOUBLE_EQ(st.lambda[b][0][0][0], -0.4);  // paired entry moves the other way
  EXPECT_EQ(st.lambda[a][0][0][1], 0.0);
  EXPECT_EQ(st.sigma, 1);
}

TEST(Stage2Lambda, ZeroResidualLeavesLambda) {
  Network net = load("two_region.json");
  auto ties = tie_lines(net, {1});
  auto st = blank_state(2, 1, 2);
  for (int z = 0; z < 2; ++z) st.belief[z][0][1] = {0.7, -0.2};
  st.lambda[0][0][1] = {3.0, 4.0};
  st.lambda[1][0][1] = {-3.0, -4.0};
  update_lambdas(st, ties, 1.0);
  EXPECT_EQ(st.lambda[0][0][1][0], 3.0);
  EXPECT_EQ(st.lambda[1][0][1][1], -4.0);
  EXPECT_EQ(app_residual(st, ties), 0.0);
}

TEST(Stage2Residual, SquaredSumPerTie) {
  Network net = load("two_region.json");
  auto ties = tie_lines(net, {0});
  ASSERT_EQ(ties.size(), 1u);
  auto st = blank_state(2, 1, 1);
  st.belief[ties[0].from_region][0][0][0] = 0.2;
  st.belief[ties[0].to_region][0][0][0] = 0.1;
  EXPECT_NEAR(app_residual(st, ties), 0.01, 1e-15);
  st.belief[ties[0].from_region][0][0][1] = -0.1;
  EXPECT_NEAR(app_residual(st, ties), 0.02, 1e-15);
}

TEST(Stage2Subproblem, ProximalFixedPoint) {
  // eta = 0, lambda = 0: proximal iterations on one region settle at a point
  // that one more solve returns unchanged.
  Network net = load("two_region.json");
  const std::vector<int> u{1};
  auto ties = tie_lines(net, u);
  Stage2Config cfg;
  cfg.eta = 0.0;
  for (int z = 0; z < 2; ++z) {
    auto st = blank_state(2, 1, 2);
    std::vector<double> x;
    auto step = [&] {
      auto qp = build_app_subproblem(z, st, net, u, cfg);
      auto sol = solver::solve_qp(qp, 1e-10);
      EXPECT_TRUE(sol.optimal());
      x = sol.x;
      int c = 0;
      for (int j = 0; j < qp.lp.num_cols(); ++j) {
        const auto& name = qp.lp.col_names[j];
        const bool boundary = name.find("belief[") != std::string::npos || name.find("theta[") != std::string::npos;
        if (!boundary) continue;
        for (std::size_t t = 0; t < ties.size(); ++t) {
          for (int end = 0; end < 2; ++end) {
            const std::string node = net.nodes[ties[t].node(end)].id;
            const bool own = name.find("theta[" + node + "]") != std::string::npos;
            const bool copy = name.find("belief[" + ties[t].id + "," + node + "]") != std::string::npos;
            if (own || copy) {
              st.belief[z][0][t][end] = sol.x[j];
              ++c;
            }
          }
        }
      }
      EXPECT_EQ(c, 4);
    };
    for (int i = 0; i < 400; ++i) step();
    const auto before = st.belief[z];
    const auto x_before = x;
    step();
    for (std::size_t t = 0; t < ties.size(); ++t) {
      for (int end = 0; end < 2; ++end) EXPECT_NEAR(st.belief[z][0][t][end], before[0][t][end], 1e-6);
    }
    for (std::size_t j = 0; j < x.size(); ++j) EXPECT_NEAR(x[j], x_before[j], 1e-5);
  }
}

TEST(Stage2Run, TwoRegionBuiltMatchesOracle) {
  Network net = load("two_region.json");
  auto r = run_stage2(net, {1});
  ASSERT_TRUE(r.converged);
  EXPECT_LE(r.residual, 1e-4);
  EXPECT_LE(r.iterations, 2000);
  EXPECT_NEAR(r.plan.dispatch[0][0], 500, 1e-4);
  EXPECT_NEAR(r.plan.dispatch[0][1], 2000, 1e-4);
  EXPECT_NEAR(r.plan.candidate_flow[0][0], 1350, 1e-4);
  EXPECT_NEAR(r.plan.existing_flow[0][0], 150, 1e-4);
  const auto f = fixed_u_dcopf(net, {1});
  EXPECT_NEAR(r.plan.objective, f.objective, 1e-3 * f.objective);
  EXPECT_EQ(r.trace.size(), static_cast<std::size_t>(r.iterations));
}

TEST(Stage2Run, TwoRegionUnbuiltCarriesExistingTieOnly) {
  Network net = load("two_region.json");
  auto r = run_stage2(net, {0});
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.ties.size(), 1u);
  EXPECT_NEAR(r.plan.existing_flow[0][0], 150, 1e-3);
  EXPECT_EQ(r.plan.candidate_flow[0][0], 0.0);
  EXPECT_NEAR(r.plan.objective, 106500, 106500 * 1e-3);
}

TEST(Stage2Run, NoTiesConvergesInOneRound) {
  Network net = load("two_region.json");
  net.existing_lines.clear();
  net.candidate_lines.clear();
  net.loads[0].demand = 1000;
  auto r = run_stage2(net, {});
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_NEAR(r.plan.dispatch[0][0], 1000, 1e-6);
  EXPECT_NEAR(r.plan.objective, fixed_u_dcopf(net, {}).objective, 1e-6);
}

TEST(Stage2Run, ThreeRegionMatchesOracle) {
  Network net = load("three_region.json");
  const std::vector<int> u{1, 1, 0, 0, 0};
  auto r = run_stage2(net, u);
  ASSERT_TRUE(r.converged);
  const auto f = fixed_u_dcopf(net, u);
  EXPECT_NEAR(r.plan.objective, f.objective, 1e-3 * f.objective);
}

TEST(Stage2Run, DecoupledWithTinyProximalTerm) {
  // eta = lambda = 0 and gamma -> 0: the first round is each region's own
  // least-cost dispatch given free tie beliefs.
  Network net = load("two_region.json");
  Stage2Config cfg;
  cfg.eta = 0.0;
  cfg.gamma = 1e-6;
  cfg.max_iter = 1;
  auto r = run_stage2(net, {1}, cfg);
  // Without prices each region treats imports as free: region 1 imports up
  // to both tie limits, region 2 imports its whole load.
  EXPECT_NEAR(r.plan.dispatch[0][0], 500, 1e-4);
  EXPECT_NEAR(r.plan.dispatch[0][1], 0, 1e-4);
}

TEST(Stage2Run, FixedPointIsCentrallyFeasible) {
  std::mt19937_64 rng(909);
  testnet::Options opt;
  opt.min_regions = opt.max_regions = 2;
  opt.max_nodes = 6;
  opt.max_scenarios = 1;
  int checked = 0;
  for (int t = 0; t < 8; ++t) {
    Network net = testnet::random_network(rng, opt);
    std::vector<int> u(net.candidate_lines.size());
    for (auto& v : u) v = static_cast<int>(rng() % 2);
    auto r = run_stage2(net, u);
    if (!r.converged) continue;
    ++checked;
    // Beliefs agree to within sqrt(eps) at every shared end.
    for (std::size_t k = 0; k < r.ties.size(); ++k) {
      const auto& el = r.ties[k];
      for (int end = 0; end < 2; ++end) {
        EXPECT_LE(std::abs(r.state.belief[el.from_region][0][k][end] - r.state.belief[el.to_region][0][k][end]),
                  std::sqrt(1e-4) + 1e-12);
      }
    }
    // Generation meets demand up to the two regions' disagreement on tie flows.
    double total = 0.0, slack = 1e-6;
    for (double p : r.plan.dispatch[0]) total += p;
    for (const auto& d : net.loads) total -= d.demand;
    for (const auto& el : r.ties) slack += std::sqrt(2e-4) / el.reactance;
    EXPECT_LE(std::abs(total), slack);
  }
  EXPECT_GT(checked, 0);
}

TEST(Stage2Run, Deterministic) {
  Network net = load("three_region.json");
  auto a = run_stage2(net, {1, 1, 0, 0, 0});
  auto b = run_stage2(net, {1, 1, 0, 0, 0});
  EXPECT_EQ(to_json(net, a).dump(), to_json(net, b).dump());
}

TEST(Stage2Config, Validation) {
  Stage2Config c;
  c.gamma = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.delta = -1;
  EXPECT_THROW(c.validate(), DomainError);
  EXPECT_THROW(run_stage2(load("two_region.json"), {1, 0}), DomainError);
}
