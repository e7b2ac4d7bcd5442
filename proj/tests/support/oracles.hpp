#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gridcoord/solver/problem.hpp"

namespace oracle {

using gridcoord::solver::kInf;
using gridcoord::solver::LinearProgram;
using gridcoord::solver::QuadraticProgram;

/// Textbook tableau simplex for  min c'x  s.t.  A x <= b, 0 <= x <= u, with b >= 0.
/// Upper bounds become explicit rows; Bland's rule throughout.
/// Returns nullopt if unbounded.
inline std::optional<double> textbook_simplex(const std::vector<std::vector<double>>& A, const std::vector<double>& b,
                                              const std::vector<double>& c, const std::vector<double>& u) {
  const int m0 = static_cast<int>(A.size()), n = static_cast<int>(c.size());
  const int m = m0 + n;
  const int cols = n + m;
  std::vector<std::vector<double>> t(m + 1, std::vector<double>(cols + 1, 0.0));
  for (int i = 0; i < m0; ++i) {
    for (int j = 0; j < n; ++j) t[i][j] = A[i][j];
    t[i][n + i] = 1.0;
    t[i][cols] = b[i];
  }
  for (int j = 0; j < n; ++j) {
    t[m0 + j][j] = 1.0;
    t[m0 + j][n + m0 + j] = 1.0;
    t[m0 + j][cols] = u[j];
  }
  for (int j = 0; j < n; ++j) t[m][j] = c[j];
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;
  for (int iter = 0; iter < 100000; ++iter) {
    int q = -1;
    for (int j = 0; j < cols; ++j) {
      if (t[m][j] < -1e-10) {
        q = j;
        break;
      }
    }
    if (q < 0) break;
    int r = -1;
    double best = kInf;
    for (int i = 0; i < m; ++i) {
      if (t[i][q] > 1e-10) {
        const double ratio = t[i][cols] / t[i][q];
        if (ratio < best - 1e-12 || (std::abs(ratio - best) <= 1e-12 && r >= 0 && basis[i] < basis[r])) {
          best = ratio;
          r = i;
        }
      }
    }
    if (r < 0) return std::nullopt;
    const double piv = t[r][q];
    for (double& v : t[r]) v /= piv;
    for (int i = 0; i <= m; ++i) {
      if (i == r || t[i][q] == 0.0) continue;
      const double f = t[i][q];
      for (int j = 0; j <= cols; ++j) t[i][j] -= f * t[r][j];
    }
    basis[r] = q;
  }
  return -t[m][cols];
}

/// Minimum of a bounded LP by enumerating every vertex (all n-subsets of the
/// bound/row constraints taken as equalities). Returns nullopt if infeasible.
/// Only suitable for very small problems with all columns boxed.
inline std::optional<double> vertex_enumeration(const LinearProgram& lp) {
  const int n = lp.num_cols(), m = lp.num_rows();
  struct Plane {
    Eigen::VectorXd a;
    double rhs;
  };
  std::vector<Plane> planes;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, n);
  for (const auto& t : lp.entries) A(t.row, t.col) += t.value;
  for (int i = 0; i < m; ++i) {
    if (std::isfinite(lp.row_lower[i])) planes.push_back({A.row(i).transpose(), lp.row_lower[i]});
    if (std::isfinite(lp.row_upper[i]) && lp.row_upper[i] != lp.row_lower[i]) {
      planes.push_back({A.row(i).transpose(), lp.row_upper[i]});
    }
  }
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(n, j);
    if (std::isfinite(lp.col_lower[j])) planes.push_back({e, lp.col_lower[j]});
    if (std::isfinite(lp.col_upper[j]) && lp.col_upper[j] != lp.col_lower[j]) planes.push_back({e, lp.col_upper[j]});
  }
  const int p = static_cast<int>(planes.size());
  std::optional<double> best;
  std::vector<int> pick;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(pick.size()) == n) {
      Eigen::MatrixXd M(n, n);
      Eigen::VectorXd r(n);
      for (int k = 0; k < n; ++k) {
        M.row(k) = planes[pick[k]].a.transpose();
        r(k) = planes[pick[k]].rhs;
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
      if (lu.rank() < n) return;
      Eigen::VectorXd x = lu.solve(r);
      std::vector<double> xv(x.data(), x.data() + n);
      if (gridcoord::solver::max_violation(lp, xv) > 1e-9) return;
      const double obj = lp.objective(xv);
      if (!best || obj < *best) best = obj;
      return;
    }
    for (int k = start; k < p; ++k) {
      pick.push_back(k);
      rec(k + 1);
      pick.pop_back();
    }
  };
  rec(0);
  return best;
}

/// Strictly convex QP with equality rows and column boxes: enumerate which
/// columns sit at which bound, solve the equality-constrained KKT system for
/// the rest, keep the feasible point with valid multiplier signs.
inline std::optional<std::vector<double>> qp_active_set_enumeration(const QuadraticProgram& qp) {
  const auto& lp = qp.lp;
  const int n = lp.num_cols(), m = lp.num_rows();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (const auto& t : qp.quad) {
    Q(t.row, t.col) += t.value;
    if (t.row != t.col) Q(t.col, t.row) += t.value;
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, n);
  for (const auto& t : lp.entries) A(t.row, t.col) += t.value;
  Eigen::VectorXd b(m), c(n);
  for (int i = 0; i < m; ++i) b(i) = lp.row_lower[i];
  for (int j = 0; j < n; ++j) c(j) = lp.cost[j];

  std::optional<std::vector<double>> best;
  double best_obj = kInf;
  std::vector<int> state(n, 0);
  std::function<void(int)> rec = [&](int j) {
    if (j < n) {
      for (int s = 0; s < 3; ++s) {
        if (s == 1 && !std::isfinite(lp.col_lower[j])) continue;
        if (s == 2 && !std::isfinite(lp.col_upper[j])) continue;
        state[j] = s;
        rec(j + 1);
      }
      return;
    }
    // Unknowns: x (n), y (m), z (n); equations: Qx + c = A'y + z, Ax = b,
    // x_j = bound for fixed j, z_j = 0 for free j.
    const int N = 2 * n + m;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
    K.block(0, 0, n, n) = Q;
    K.block(0, n, n, m) = -A.transpose();
    K.block(0, n + m, n, n) = -Eigen::MatrixXd::Identity(n, n);
    rhs.head(n) = -c;
    K.block(n, 0, m, n) = A;
    rhs.segment(n, m) = b;
    for (int k = 0; k < n; ++k) {
      if (state[k] == 0) {
        K(n + m + k, n + m + k) = 1.0;
      } else {
        K(n + m + k, k) = 1.0;
        rhs(n + m + k) = state[k] == 1 ? lp.col_lower[k] : lp.col_upper[k];
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (lu.rank() < N) return;
    Eigen::VectorXd sol = lu.solve(rhs);
    std::vector<double> x(sol.data(), sol.data() + n);
    if (gridcoord::solver::max_violation(lp, x) > 1e-9) return;
    for (int k = 0; k < n; ++k) {
      const double z = sol(n + m + k);
      if (state[k] == 1 && z < -1e-9) return;
      if (state[k] == 2 && z > 1e-9) return;
    }
    const double obj = qp.objective(x);
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
  };
  rec(0);
  return best;
}

}  // namespace oracle
