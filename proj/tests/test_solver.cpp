#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "gridcoord/solver.hpp"
#include "support/oracles.hpp"

using namespace gridcoord::solver;

namespace {

LinearProgram random_boxed_lp(std::mt19937_64& rng, int rows, int cols, bool with_equalities) {
  std::uniform_real_distribution<double> coef(-5.0, 5.0), box(1.0, 10.0);
  LinearProgram lp;
  std::vector<double> x0(cols);
  for (int j = 0; j < cols; ++j) {
    const double lo = -box(rng) / 2, hi = box(rng);
    lp.add_column("x" + std::to_string(j), lo, hi, coef(rng));
    x0[j] = lo + (hi - lo) * 0.37;
  }
  for (int i = 0; i < rows; ++i) {
    std::vector<std::pair<int, double>> row;
    double act = 0.0;
    for (int j = 0; j < cols; ++j) {
      if (rng() % 3 == 0) continue;
      const double v = std::round(coef(rng) * 4) / 4;
      row.push_back({j, v});
      act += v * x0[j];
    }
    if (with_equalities && i % 3 == 0) {
      lp.add_row("r", act, act, row);
    } else if (i % 2 == 0) {
      lp.add_row("r", -kInf, act + box(rng), row);
    } else {
      lp.add_row("r", act - box(rng), act + box(rng), row);
    }
  }
  return lp;
}

}  // namespace

TEST(Lp, SingleLowerBound) {
  LinearProgram lp;
  const int x = lp.add_column("x", -kInf, kInf, 1.0);
  lp.add_row("c", 3.0, kInf, {{x, 1.0}});
  auto s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x[0], 3.0, 1e-9);
  EXPECT_NEAR(s.objective, 3.0, 1e-9);
  EXPECT_NEAR(s.row_duals[0], 1.0, 1e-9);
}

TEST(Lp, DegenerateFaceObjectiveUnique) {
  LinearProgram lp;
  const int x = lp.add_column("x", 0, kInf, -1.0);
  const int y = lp.add_column("y", 0, kInf, -1.0);
  lp.add_row("c", -kInf, 1.0, {{x, 1.0}, {y, 1.0}});
  auto s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.objective, -1.0, 1e-9);
  EXPECT_LE(max_violation(lp, s.x), 1e-9);
}

TEST(Lp, InfeasibleAndUnbounded) {
  LinearProgram inf;
  const int x = inf.add_column("x", 0, 1, 1.0);
  inf.add_row("c", 2.0, kInf, {{x, 1.0}});
  EXPECT_EQ(solve_lp(inf).status, Status::infeasible);

  LinearProgram unb;
  const int a = unb.add_column("a", 0, kInf, -1.0);
  const int b = unb.add_column("b", 0, kInf, 0.0);
  unb.add_row("c", -kInf, 1.0, {{a, 1.0}, {b, -1.0}});
  EXPECT_EQ(solve_lp(unb).status, Status::unbounded);
}

TEST(Lp, FreeVariablesAndEqualities) {
  // min |x - 2| style: x free, t >= x-2, t >= 2-x
  LinearProgram lp;
  const int x = lp.add_column("x", -kInf, kInf, 0.0);
  const int t = lp.add_column("t", -kInf, kInf, 1.0);
  lp.add_row("a", -2.0, kInf, {{t, 1.0}, {x, -1.0}});
  lp.add_row("b", 2.0, kInf, {{t, 1.0}, {x, 1.0}});
  auto s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.objective, 0.0, 1e-9);
  EXPECT_NEAR(s.x[0], 2.0, 1e-9);
}

TEST(Lp, IterationLimitReported) {
  std::mt19937_64 rng(5);
  auto lp = random_boxed_lp(rng, 20, 40, false);
  LpOptions opt;
  opt.max_iterations = 1;
  EXPECT_EQ(solve_lp(lp, opt).status, Status::iteration_limit);
}

TEST(Lp, RandomMatchesTextbookSimplex) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> coef(-5.0, 5.0), pos(0.5, 10.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int m = 20, n = 40;
    std::vector<std::vector<double>> A(m, std::vector<double>(n));
    std::vector<double> b(m), c(n), u(n);
    LinearProgram lp;
    for (int j = 0; j < n; ++j) {
      c[j] = coef(rng);
      u[j] = pos(rng);
      lp.add_column("x", 0.0, u[j], c[j]);
    }
    for (int i = 0; i < m; ++i) {
      std::vector<std::pair<int, double>> row;
      for (int j = 0; j < n; ++j) {
        A[i][j] = (rng() % 2) ? coef(rng) : 0.0;
        row.push_back({j, A[i][j]});
      }
      b[i] = pos(rng);
      lp.add_row("r", -kInf, b[i], row);
    }
    auto ref = oracle::textbook_simplex(A, b, c, u);
    ASSERT_TRUE(ref.has_value());
    auto s = solve_lp(lp);
    ASSERT_TRUE(s.optimal()) << "trial " << trial;
    EXPECT_NEAR(s.objective, *ref, 1e-7 * std::max(1.0, std::abs(*ref))) << "trial " << trial;
    EXPECT_LE(max_violation(lp, s.x), 1e-7);
  }
}

TEST(Lp, SmallMatchesVertexEnumeration) {
  std::mt19937_64 rng(7);
  int feasible = 0;
  for (int trial = 0; trial < 40; ++trial) {
    auto lp = random_boxed_lp(rng, 4, 5, true);
    auto ref = oracle::vertex_enumeration(lp);
    auto s = solve_lp(lp);
    if (!ref) {
      EXPECT_EQ(s.status, Status::infeasible);
      continue;
    }
    ++feasible;
    ASSERT_TRUE(s.optimal()) << "trial " << trial;
    EXPECT_NEAR(s.objective, *ref, 1e-7 * std::max(1.0, std::abs(*ref)));
  }
  EXPECT_GT(feasible, 20);
}

TEST(Lp, ScalingObjectiveScalesOptimum) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto lp = random_boxed_lp(rng, 12, 20, true);
    auto s = solve_lp(lp);
    if (!s.optimal()) continue;
    auto scaled = lp;
    for (double& c : scaled.cost) c *= 3.5;
    auto t = solve_lp(scaled);
    ASSERT_TRUE(t.optimal());
    EXPECT_NEAR(t.objective, 3.5 * s.objective, 1e-7 * std::max(1.0, std::abs(t.objective)));
    // The first optimum stays optimal for the scaled problem.
    EXPECT_NEAR(scaled.objective(s.x), t.objective, 1e-7 * std::max(1.0, std::abs(t.objective)));
  }
}

TEST(Lp, DualsSatisfyComplementarity) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    auto lp = random_boxed_lp(rng, 10, 15, true);
    auto s = solve_lp(lp);
    if (!s.optimal()) continue;
    QuadraticProgram qp{lp, {}};
    EXPECT_LE(kkt_residual(qp, s), 1e-7) << "trial " << trial;
  }
}

TEST(Milp, Knapsack) {
  MixedIntegerProgram mip;
  const int a = mip.add_binary("a", -3.0);
  const int b = mip.add_binary("b", -2.0);
  mip.lp.add_row("cap", -kInf, 1.0, {{a, 1.0}, {b, 1.0}});
  auto s = solve_milp(mip);
  ASSERT_TRUE(s.optimal());
  EXPECT_EQ(s.x[a], 1.0);
  EXPECT_EQ(s.x[b], 0.0);
  EXPECT_NEAR(s.objective, -3.0, 1e-9);
}

TEST(Milp, NoBinariesEqualsLp) {
  std::mt19937_64 rng(3);
  auto lp = random_boxed_lp(rng, 8, 10, false);
  MixedIntegerProgram mip{lp, std::vector<bool>(lp.num_cols(), false)};
  auto a = solve_milp(mip), b = solve_lp(lp);
  ASSERT_TRUE(a.optimal());
  EXPECT_NEAR(a.objective, b.objective, 1e-9);
}

TEST(Milp, RejectsNonBinaryIntegral) {
  MixedIntegerProgram mip;
  mip.add_column("x", 0, 2);
  mip.integral[0] = true;
  EXPECT_THROW(solve_milp(mip), gridcoord::DomainError);
}

TEST(Milp, MatchesEnumeration) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> coef(-5.0, 5.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int nb = 3 + static_cast<int>(rng() % 8);  // up to 10 binaries
    MixedIntegerProgram mip;
    mip.lp = random_boxed_lp(rng, 6, 6, false);
    mip.integral.assign(mip.lp.num_cols(), false);
    std::vector<int> bins;
    for (int k = 0; k < nb; ++k) bins.push_back(mip.add_binary("u", coef(rng)));
    // Link binaries to continuous columns (big-M style switches).
    for (int k = 0; k < nb; ++k) {
      const int j = static_cast<int>(rng() % 6);
      mip.lp.add_row("link", -kInf, 0.0, {{j, 1.0}, {bins[k], -10.0 * (1 + k % 3)}});
    }
    mip.lp.add_row("card", -kInf, nb / 2.0, [&] {
      std::vector<std::pair<int, double>> r;
      for (int b : bins) r.push_back({b, 1.0});
      return r;
    }());

    double best = kInf;
    for (unsigned mask = 0; mask < (1u << nb); ++mask) {
      auto lp = mip.lp;
      for (int k = 0; k < nb; ++k) lp.col_lower[bins[k]] = lp.col_upper[bins[k]] = (mask >> k) & 1u;
      auto s = solve_lp(lp);
      if (s.optimal()) best = std::min(best, s.objective);
    }
    auto s = solve_milp(mip);
    if (!std::isfinite(best)) {
      EXPECT_EQ(s.status, Status::infeasible);
      continue;
    }
    ASSERT_TRUE(s.optimal()) << "trial " << trial;
    EXPECT_NEAR(s.objective, best, 1e-6 * std::max(1.0, std::abs(best))) << "trial " << trial;
    EXPECT_LE(s.relaxation_bound, s.best_bound + 1e-9);
    EXPECT_LE(s.best_bound, s.objective + 1e-9);
    EXPECT_LE(max_violation(mip.lp, s.x), 1e-7);
    for (int b : bins) EXPECT_TRUE(s.x[b] == 0.0 || s.x[b] == 1.0);
  }
}

TEST(Qp, UnconstrainedQuadratic) {
  QuadraticProgram qp;
  qp.lp.add_column("x", -kInf, kInf, -4.0);
  qp.lp.objective_offset = 4.0;
  qp.add_quadratic(0, 0, 2.0);  // (x-2)^2 = x^2 - 4x + 4
  auto s = solve_qp(qp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x[0], 2.0, 1e-9);
  EXPECT_NEAR(s.objective, 0.0, 1e-9);
}

TEST(Qp, BoundActive) {
  QuadraticProgram qp;
  const int x = qp.lp.add_column("x", -kInf, kInf, 0.0);
  qp.lp.add_row("c", 1.0, kInf, {{x, 1.0}});
  qp.add_quadratic(x, x, 2.0);
  auto s = solve_qp(qp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x[0], 1.0, 1e-9);
  EXPECT_NEAR(s.row_duals[0], 2.0, 1e-9);
  EXPECT_LE(kkt_residual(qp, s), 1e-9);
}

TEST(Qp, RejectsIndefinite) {
  QuadraticProgram qp;
  qp.lp.add_column("x", -1, 1, 0.0);
  qp.lp.add_column("y", -1, 1, 0.0);
  qp.add_quadratic(0, 0, 1.0);
  qp.add_quadratic(1, 1, 1.0);
  qp.add_quadratic(0, 1, 3.0);
  EXPECT_THROW(solve_qp(qp), gridcoord::DomainError);
}

TEST(Qp, UnboundedAndInfeasible) {
  QuadraticProgram unb;
  unb.lp.add_column("x", -kInf, kInf, 0.0);
  unb.lp.add_column("y", 0, kInf, -1.0);
  unb.add_quadratic(0, 0, 1.0);
  EXPECT_EQ(solve_qp(unb).status, Status::unbounded);

  QuadraticProgram inf;
  const int x = inf.lp.add_column("x", 0, 1, 0.0);
  inf.lp.add_row("c", 3.0, 3.0, {{x, 1.0}});
  inf.add_quadratic(x, x, 1.0);
  EXPECT_EQ(solve_qp(inf).status, Status::infeasible);
}

TEST(Qp, SemidefiniteWithLinearTerm) {
  // min x^2 - y, x + y <= 2, y <= 5 -> y = 2 - x, minimize x^2 + x - 2 -> x=-1/2
  QuadraticProgram qp;
  const int x = qp.lp.add_column("x", -kInf, kInf, 0.0);
  const int y = qp.lp.add_column("y", -kInf, 5.0, -1.0);
  qp.lp.add_row("c", -kInf, 2.0, {{x, 1.0}, {y, 1.0}});
  qp.add_quadratic(x, x, 2.0);
  auto s = solve_qp(qp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x[x], -0.5, 1e-9);
  EXPECT_NEAR(s.x[y], 2.5, 1e-9);
}

TEST(Qp, RandomMatchesActiveSetEnumeration) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 5), m = static_cast<int>(rng() % 3);
    Eigen::MatrixXd R = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return u(rng); });
    Eigen::MatrixXd Q = R.transpose() * R + 0.1 * Eigen::MatrixXd::Identity(n, n);
    QuadraticProgram qp;
    std::vector<double> x0(n);
    for (int j = 0; j < n; ++j) {
      const double lo = -1.0 - std::abs(u(rng)), hi = 1.0 + std::abs(u(rng));
      qp.lp.add_column("x", lo, hi, 3.0 * u(rng));
      x0[j] = 0.3 * u(rng);
    }
    for (int i = 0; i < m; ++i) {
      std::vector<std::pair<int, double>> row;
      double act = 0.0;
      for (int j = 0; j < n; ++j) {
        const double v = u(rng);
        row.push_back({j, v});
        act += v * x0[j];
      }
      qp.lp.add_row("eq", act, act, row);
    }
    for (int a = 0; a < n; ++a) {
      for (int b = a; b < n; ++b) qp.add_quadratic(a, b, Q(a, b));
    }
    auto ref = oracle::qp_active_set_enumeration(qp);
    ASSERT_TRUE(ref.has_value());
    auto s = solve_qp(qp);
    ASSERT_TRUE(s.optimal()) << "trial " << trial;
    for (int j = 0; j < n; ++j) EXPECT_NEAR(s.x[j], (*ref)[j], 1e-6) << "trial " << trial;
    EXPECT_LE(kkt_residual(qp, s), 1e-7);
    ++checked;
  }
  EXPECT_EQ(checked, 40);
}

TEST(Qp, WarmStartReachesSameOptimum) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  QuadraticProgram qp;
  const int n = 8;
  for (int j = 0; j < n; ++j) qp.lp.add_column("x", -1, 1, u(rng));
  for (int j = 0; j < n; ++j) qp.add_quadratic(j, j, 1.0 + j);
  qp.lp.add_row("sum", 0.5, 0.5, [&] {
    std::vector<std::pair<int, double>> r;
    for (int j = 0; j < n; ++j) r.push_back({j, 1.0});
    return r;
  }());
  QpWarmStart warm;
  for (int round = 0; round < 5; ++round) {
    for (double& c : qp.lp.cost) c += 0.3 * u(rng);
    auto cold = solve_qp(qp);
    auto hot = solve_qp(qp, QpOptions{}, &warm);
    ASSERT_TRUE(cold.optimal());
    ASSERT_TRUE(hot.optimal());
    EXPECT_NEAR(cold.objective, hot.objective, 1e-9);
  }
}

TEST(Qp, IndependentBlocksSolvedSeparately) {
  QuadraticProgram qp;
  for (int j = 0; j < 4; ++j) {
    qp.lp.add_column("x", -kInf, kInf, -2.0 * (j + 1));
    qp.add_quadratic(j, j, 2.0);
  }
  qp.lp.add_row("pair", -kInf, 1.0, {{0, 1.0}, {1, 1.0}});
  auto s = solve_qp(qp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x[0], 0.0, 1e-9);
  EXPECT_NEAR(s.x[1], 1.0, 1e-9);
  EXPECT_NEAR(s.x[2], 3.0, 1e-9);
  EXPECT_NEAR(s.x[3], 4.0, 1e-9);
}

TEST(Problem, LpTextDump) {
  MixedIntegerProgram mip;
  const int u = mip.add_binary("u", 5.0);
  const int f = mip.add_column("f", -kInf, kInf, 1.0);
  mip.lp.add_row("link", 0.0, 0.0, {{f, 1.0}, {u, -2.0}});
  std::ostringstream os;
  write_lp_text(os, mip.lp, &mip.integral);
  const std::string text = os.str();
  EXPECT_NE(text.find("Minimize"), std::string::npos);
  EXPECT_NE(text.find("link: + 1 f - 2 u = 0"), std::string::npos);
  EXPECT_NE(text.find("f free"), std::string::npos);
  EXPECT_NE(text.find("Binaries\n u"), std::string::npos);
}

TEST(Problem, ValidateRejectsBadInput) {
  LinearProgram lp;
  lp.add_column("x", 1.0, 0.0, 0.0);
  EXPECT_THROW(lp.validate(), gridcoord::DomainError);
  LinearProgram lp2;
  lp2.add_column("x", 0.0, 1.0, 0.0);
  lp2.entries.push_back({3, 0, 1.0});
  EXPECT_THROW(lp2.validate(), gridcoord::DomainError);
}
