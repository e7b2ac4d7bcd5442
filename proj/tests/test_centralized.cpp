#include <gtest/gtest.h>

#include <random>

#include "gridcoord/centralized.hpp"
#include "support/random_net.hpp"

using namespace gridcoord;

namespace {

Network two_region(const char* file = "two_region.json") {
  return load_case(std::string(GRIDCOORD_CASE_DIR) + "/" + file);
}

}  // namespace

TEST(BigM, Formula) {
  Network net = two_region();
  net.angle_bound = std::numbers::pi;
  EXPECT_NEAR(big_m(net.candidate_lines[0], net), 2 * std::numbers::pi / 0.1 + 1350, 1e-9);
  EXPECT_NEAR(big_m(net.candidate_lines[0], net), 1412.83, 5e-3);
}

TEST(BigM, MonotoneInCapacityAndReactance) {
  Network net = two_region();
  auto k = net.candidate_lines[0];
  const double base = big_m(k, net);
  k.capacity += 10;
  EXPECT_GT(big_m(k, net), base);
  k = net.candidate_lines[0];
  k.reactance *= 2;
  EXPECT_LT(big_m(k, net), base);
}

TEST(BigM, VacuousWhenUnbuilt) {
  // u = 0: both big-M rows hold for every angle pair in the box and every flow
  // within the candidate's capacity.
  Network net = two_region();
  const auto& k = net.candidate_lines[0];
  const double M = big_m(k, net), b = net.angle_bound;
  for (int a = 0; a <= 20; ++a) {
    for (int c = 0; c <= 20; ++c) {
      const double ti = -b + 2 * b * a / 20, tj = -b + 2 * b * c / 20;
      for (double f : {-k.capacity, 0.0, k.capacity}) {
        const double dc = f - (ti - tj) / k.reactance;
        EXPECT_LE(dc, M + 1e-9);
        EXPECT_GE(dc, -M - 1e-9);
      }
    }
  }
}

TEST(Centralized, TwoRegionBuildsLine) {
  Network net = two_region();
  auto plan = solve_centralized(net);
  ASSERT_TRUE(plan.optimal());
  EXPECT_EQ(plan.build, std::vector<int>{1});
  EXPECT_NEAR(plan.dispatch[0][0], 500, 1e-6);
  EXPECT_NEAR(plan.dispatch[0][1], 2000, 1e-6);
  EXPECT_NEAR(plan.candidate_flow[0][0], 1350, 1e-6);
  EXPECT_NEAR(plan.existing_flow[0][0], 150, 1e-6);
  EXPECT_NEAR(plan.objective, 47000, 47000 * 1e-6);
  EXPECT_NEAR(plan.operational_cost, 45000, 1e-6);
  EXPECT_NEAR(plan.investment_cost, 2000, 1e-5);
  EXPECT_LE(plan.relaxation_bound, plan.objective + 1e-6);
}

TEST(Centralized, ExpensiveLineStillBuilt) {
  auto plan = solve_centralized(two_region("two_region_40k.json"));
  ASSERT_TRUE(plan.optimal());
  EXPECT_EQ(plan.build, std::vector<int>{1});
  EXPECT_NEAR(plan.objective, 85000, 85000 * 1e-6);
  auto bf = brute_force_plan(two_region("two_region_40k.json"));
  EXPECT_NEAR(bf.objective, 85000, 85000 * 1e-6);
}

TEST(Centralized, WithoutCandidate) {
  Network net = two_region();
  net.candidate_lines.clear();
  auto plan = solve_centralized(net);
  ASSERT_TRUE(plan.optimal());
  EXPECT_NEAR(plan.dispatch[0][0], 1850, 1e-6);
  EXPECT_NEAR(plan.dispatch[0][1], 650, 1e-6);
  EXPECT_NEAR(plan.existing_flow[0][0], 150, 1e-6);
  EXPECT_NEAR(plan.objective, 106500, 1e-6);
  EXPECT_EQ(build_centralized(net).num_integral(), 0);
}

TEST(Centralized, FixedUMatchesHandValues) {
  Network net = two_region();
  auto built = fixed_u_dcopf(net, {1});
  ASSERT_TRUE(built.optimal());
  EXPECT_NEAR(built.dispatch[0][0], 500, 1e-6);
  EXPECT_NEAR(built.candidate_flow[0][0], 1350, 1e-6);
  auto unbuilt = fixed_u_dcopf(net, {0});
  ASSERT_TRUE(unbuilt.optimal());
  EXPECT_NEAR(unbuilt.dispatch[0][0], 1850, 1e-6);
  EXPECT_NEAR(unbuilt.dispatch[0][1], 650, 1e-6);
  EXPECT_NEAR(unbuilt.existing_flow[0][0], 150, 1e-6);
  EXPECT_DOUBLE_EQ(unbuilt.candidate_flow[0][0], 0.0);
  EXPECT_NEAR(unbuilt.objective, 106500, 1e-6);
}

TEST(Centralized, InfeasibleWhenLoadExceedsCapacity) {
  Network net = two_region();
  net.loads[0].demand = 10000;
  EXPECT_EQ(solve_centralized(net).status, solver::Status::infeasible);
  EXPECT_EQ(brute_force_plan(net).status, solver::Status::infeasible);
}

TEST(Centralized, BruteForceRejectsTooManyCandidates) {
  Network net = two_region();
  for (int k = 0; k < 16; ++k) {
    auto c = net.candidate_lines[0];
    c.id = "extra" + std::to_string(k);
    net.candidate_lines.push_back(c);
  }
  EXPECT_THROW(brute_force_plan(net), SizeError);
}

TEST(Centralized, ZeroCandidatesMatchesBruteForce) {
  Network net = two_region();
  net.candidate_lines.clear();
  EXPECT_NEAR(solve_centralized(net).objective, brute_force_plan(net).objective, 1e-6);
}

TEST(Centralized, RandomNetsAgreeWithBruteForce) {
  std::mt19937_64 rng(101);
  for (int t = 0; t < 15; ++t) {
    Network net = testnet::random_network(rng);
    auto c = solve_centralized(net);
    auto b = brute_force_plan(net);
    ASSERT_TRUE(c.optimal()) << "net " << t;
    ASSERT_TRUE(b.optimal()) << "net " << t;
    EXPECT_NEAR(c.objective, b.objective, 1e-6 * std::max(1.0, std::abs(b.objective))) << "net " << t;
    EXPECT_TRUE(check_plan(net, c).empty());
  }
}

TEST(Centralized, BigMAndProductFormAgreePerBuildVector) {
  std::mt19937_64 rng(202);
  for (int t = 0; t < 10; ++t) {
    Network net = testnet::random_network(rng);
    const std::size_t K = net.candidate_lines.size();
    for (unsigned mask = 0; mask < (1u << K); ++mask) {
      std::vector<int> u(K);
      for (std::size_t k = 0; k < K; ++k) u[k] = (mask >> k) & 1u;
      auto a = solver::solve_lp(build_big_m_fixed(net, u));
      auto b = solver::solve_lp(build_fixed_u(net, u));
      ASSERT_EQ(a.status, b.status);
      if (a.optimal()) EXPECT_NEAR(a.objective, b.objective, 1e-7 * std::max(1.0, std::abs(b.objective)));
    }
  }
}

TEST(Centralized, NodalInjectionsSumToZeroAndInvestmentExact) {
  std::mt19937_64 rng(303);
  for (int t = 0; t < 10; ++t) {
    Network net = testnet::random_network(rng);
    auto plan = solve_centralized(net);
    ASSERT_TRUE(plan.optimal());
    NetworkIndex idx(net);
    for (std::size_t s = 0; s < net.scenarios.size(); ++s) {
      double total = 0.0;
      for (double p : plan.dispatch[s]) total += p;
      for (int n = 0; n < idx.num_nodes(); ++n) total -= idx.node_demand(n, static_cast<int>(s));
      EXPECT_NEAR(total, 0.0, 1e-6);
    }
    double inv = 0.0;
    for (std::size_t k = 0; k < plan.build.size(); ++k) {
      if (plan.build[k]) inv += net.candidate_lines[k].build_cost * annuity_factor(net.interest_rate, net.candidate_lines[k].lifetime);
    }
    EXPECT_DOUBLE_EQ(plan.investment_cost, inv);
  }
}

TEST(Centralized, PlanJsonHasIds) {
  Network net = two_region();
  auto j = to_json(net, solve_centralized(net));
  EXPECT_EQ(j["status"], "optimal");
  EXPECT_EQ(j["build"]["C1"], 1);
  EXPECT_NEAR(j["scenarios"][0]["dispatch"]["g2"].get<double>(), 2000, 1e-6);
}

TEST(Centralized, CheckPlanFlagsBrokenFlowLaw) {
  Network net = two_region();
  auto plan = solve_centralized(net);
  plan.candidate_flow[0][0] += 5;
  EXPECT_FALSE(check_plan(net, plan).empty());
}
