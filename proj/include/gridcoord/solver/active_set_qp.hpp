#pragma once

// Primal active-set method for convex QPs with row and column bounds.
//
// The problem is split into independent blocks (columns connected through
// rows or quadratic terms) and each block is solved densely. A feasible start
// comes from a zero-cost LP; callers solving a sequence of related QPs can
// pass a QpWarmStart to resume from the previous working set.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "gridcoord/solver/problem.hpp"
#include "gridcoord/solver/simplex.hpp"

namespace gridcoord::solver {

struct QpOptions {
  double tol = 1e-7;
  long max_iterations = 20000;  // per block
  LpOptions lp;
};

/// Primal point plus working set; 0 = free/inactive, 1 = at lower, 2 = at upper.
struct QpWarmStart {
  std::vector<double> x;
  std::vector<signed char> col_state;
  std::vector<signed char> row_state;
};

namespace detail {

struct QpBlock {
  std::vector<int> cols, rows;  // global indices
};

inline std::vector<QpBlock> qp_blocks(const QuadraticProgram& qp) {
  const int n = qp.lp.num_cols(), m = qp.lp.num_rows();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  std::vector<int> row_first(m, -1);
  for (const auto& t : qp.lp.entries) {
    if (row_first[t.row] < 0) {
      row_first[t.row] = t.col;
    } else {
      unite(t.col, row_first[t.row]);
    }
  }
  for (const auto& t : qp.quad) unite(t.row, t.col);
  std::vector<int> block_of(n, -1);
  std::vector<QpBlock> blocks;
  for (int j = 0; j < n; ++j) {
    const int r = find(j);
    if (block_of[r] < 0) {
      block_of[r] = static_cast<int>(blocks.size());
      blocks.emplace_back();
    }
    blocks[block_of[r]].cols.push_back(j);
  }
  for (int i = 0; i < m; ++i) {
    if (row_first[i] >= 0) blocks[block_of[find(row_first[i])]].rows.push_back(i);
  }
  return blocks;
}

class DenseActiveSet {
 public:
  DenseActiveSet(const QuadraticProgram& qp, const QpBlock& blk, const QpOptions& opt)
      : opt_(opt), nb_(static_cast<int>(blk.cols.size())), mb_(static_cast<int>(blk.rows.size())) {
    std::vector<int> col_local(qp.lp.num_cols(), -1), row_local(qp.lp.num_rows(), -1);
    for (int k = 0; k < nb_; ++k) col_local[blk.cols[k]] = k;
    for (int k = 0; k < mb_; ++k) row_local[blk.rows[k]] = k;
    A_ = Eigen::MatrixXd::Zero(mb_, nb_);
    Q_ = Eigen::MatrixXd::Zero(nb_, nb_);
    c_.resize(nb_);
    lo_.resize(nb_);
    hi_.resize(nb_);
    rlo_.resize(mb_);
    rhi_.resize(mb_);
    for (int k = 0; k < nb_; ++k) {
      c_(k) = qp.lp.cost[blk.cols[k]];
      lo_[k] = qp.lp.col_lower[blk.cols[k]];
      hi_[k] = qp.lp.col_upper[blk.cols[k]];
    }
    for (int k = 0; k < mb_; ++k) {
      rlo_[k] = qp.lp.row_lower[blk.rows[k]];
      rhi_[k] = qp.lp.row_upper[blk.rows[k]];
    }
    for (const auto& t : qp.lp.entries) {
      if (row_local[t.row] >= 0) A_(row_local[t.row], col_local[t.col]) += t.value;
    }
    for (const auto& t : qp.quad) {
      const int a = col_local[t.row], b = col_local[t.col];
      if (a < 0) continue;
      Q_(a, b) += t.value;
      if (a != b) Q_(b, a) += t.value;
    }
  }

  void check_psd() const {
    if (nb_ == 0) return;
    const double scale = std::max(1.0, Q_.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q_, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-9 * scale) {
      throw DomainError("QuadraticProgram: quadratic term is not positive semidefinite");
    }
  }

  /// Seeds the working set from a warm start; returns false if unusable.
  bool seed(const std::vector<double>& x, const std::vector<signed char>& cs, const std::vector<signed char>& rs) {
    x_.resize(nb_);
    cs_.assign(nb_, 0);
    rs_.assign(mb_, 0);
    for (int k = 0; k < nb_; ++k) {
      x_(k) = x[k];
      if (!std::isfinite(x_(k))) return false;
      const double t = opt_.tol * std::max(1.0, std::abs(x_(k)));
      if (x_(k) < lo_[k] - t || x_(k) > hi_[k] + t) return false;
      cs_[k] = cs[k];
      if (lo_[k] == hi_[k]) cs_[k] = 1;
      if (cs_[k] == 1 && !std::isfinite(lo_[k])) cs_[k] = 0;
      if (cs_[k] == 2 && !std::isfinite(hi_[k])) cs_[k] = 0;
      if (cs_[k] == 1) x_(k) = lo_[k];
      if (cs_[k] == 2) x_(k) = hi_[k];
    }
    Eigen::VectorXd ax = A_ * x_;
    for (int i = 0; i < mb_; ++i) {
      const double t = opt_.tol * std::max(1.0, std::abs(ax(i)));
      if (ax(i) < rlo_[i] - t || ax(i) > rhi_[i] + t) return false;
      rs_[i] = rs[i];
      if (rlo_[i] == rhi_[i]) rs_[i] = 1;
      if (rs_[i] == 1 && std::abs(ax(i) - rlo_[i]) > t) rs_[i] = 0;
      if (rs_[i] == 2 && std::abs(ax(i) - rhi_[i]) > t) rs_[i] = 0;
    }
    return true;
  }

  /// Seeds from a vertex of the feasible set. Returns false if infeasible.
  bool seed_from_lp() {
    LinearProgram lp;
    for (int k = 0; k < nb_; ++k) lp.add_column("", lo_[k], hi_[k], 0.0);
    for (int i = 0; i < mb_; ++i) {
      std::vector<std::pair<int, double>> coefs;
      for (int k = 0; k < nb_; ++k) {
        if (A_(i, k) != 0.0) coefs.push_back({k, A_(i, k)});
      }
      lp.add_row("", rlo_[i], rhi_[i], coefs);
    }
    LpOptions lpo = opt_.lp;
    lpo.tol = opt_.tol;
    auto res = run_simplex(lp, lp.col_lower, lp.col_upper, lpo);
    lp_iterations_ = res.solution.iterations;
    if (res.solution.status != Status::optimal) return false;
    x_.resize(nb_);
    cs_.assign(nb_, 0);
    rs_.assign(mb_, 0);
    auto code = [](VarState s) -> signed char {
      return s == VarState::at_lower ? 1 : (s == VarState::at_upper ? 2 : 0);
    };
    for (int k = 0; k < nb_; ++k) {
      x_(k) = res.solution.x[k];
      cs_[k] = code(res.state[k]);
      if (lo_[k] == hi_[k]) cs_[k] = 1;
    }
    for (int i = 0; i < mb_; ++i) {
      rs_[i] = code(res.state[nb_ + i]);
      if (rlo_[i] == rhi_[i]) rs_[i] = 1;
    }
    return true;
  }

  Status solve() {
    int stalled = 0;
    while (iterations_ < opt_.max_iterations) {
      ++iterations_;
      std::vector<int> F, W;
      for (int k = 0; k < nb_; ++k) {
        if (cs_[k] == 0) F.push_back(k);
      }
      for (int i = 0; i < mb_; ++i) {
        if (rs_[i] != 0) W.push_back(i);
      }
      const int f = static_cast<int>(F.size()), w = static_cast<int>(W.size());
      Eigen::VectorXd g = Q_ * x_ + c_;
      Eigen::MatrixXd M(w, f);
      for (int a = 0; a < w; ++a) {
        for (int b = 0; b < f; ++b) M(a, b) = A_(W[a], F[b]);
      }
      Eigen::VectorXd gF(f);
      for (int b = 0; b < f; ++b) gF(b) = g(F[b]);

      Eigen::MatrixXd Z;
      if (f > 0 && w == 0) {
        Z = Eigen::MatrixXd::Identity(f, f);
      } else if (f > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M.transpose());
        qr.setThreshold(1e-10);
        const int r = static_cast<int>(qr.rank());
        if (r < f) {
          Eigen::MatrixXd Qm = qr.householderQ();
          Z = Qm.rightCols(f - r);
        }
      }

      Eigen::VectorXd pF = Eigen::VectorXd::Zero(f);
      bool unbounded_dir = false;
      if (Z.cols() > 0) {
        Eigen::MatrixXd QFF(f, f);
        for (int a = 0; a < f; ++a) {
          for (int b = 0; b < f; ++b) QFF(a, b) = Q_(F[a], F[b]);
        }
        Eigen::MatrixXd H = Z.transpose() * QFF * Z;
        Eigen::VectorXd rg = Z.transpose() * gF;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        const auto& lam = es.eigenvalues();
        const auto& V = es.eigenvectors();
        const double lmax = std::max(1.0, lam.cwiseAbs().maxCoeff());
        Eigen::VectorXd rz = V.transpose() * rg;
        Eigen::VectorXd flat = Eigen::VectorXd::Zero(rz.size()), newton = Eigen::VectorXd::Zero(rz.size());
        for (int i = 0; i < rz.size(); ++i) {
          if (lam(i) > 1e-10 * lmax) {
            newton(i) = -rz(i) / lam(i);
          } else {
            flat(i) = -rz(i);
          }
        }
        const double gscale = std::max(1.0, gF.cwiseAbs().maxCoeff());
        if (flat.cwiseAbs().maxCoeff() > 1e-9 * gscale) {
          pF = Z * (V * flat);
          unbounded_dir = true;
        } else {
          pF = Z * (V * newton);
        }
      }
      const double xscale = std::max(1.0, x_.cwiseAbs().maxCoeff());
      if (f > 0 && pF.cwiseAbs().maxCoeff() > 1e-11 * xscale) {
        // Ratio test over free columns and inactive rows.
        double alpha = unbounded_dir ? kInf : 1.0;
        int block_col = -1, block_row = -1;
        signed char block_side = 0;
        for (int b = 0; b < f; ++b) {
          const int k = F[b];
          const double p = pF(b);
          if (p < -1e-14 && std::isfinite(lo_[k])) {
            const double lim = std::max(0.0, (x_(k) - lo_[k]) / -p);
            if (lim < alpha) {
              alpha = lim;
              block_col = k;
              block_row = -1;
              block_side = 1;
            }
          } else if (p > 1e-14 && std::isfinite(hi_[k])) {
            const double lim = std::max(0.0, (hi_[k] - x_(k)) / p);
            if (lim < alpha) {
              alpha = lim;
              block_col = k;
              block_row = -1;
              block_side = 2;
            }
          }
        }
        Eigen::VectorXd ax = A_ * x_;
        for (int i = 0; i < mb_; ++i) {
          if (rs_[i] != 0) continue;
          double rate = 0.0;
          for (int b = 0; b < f; ++b) rate += A_(i, F[b]) * pF(b);
          if (std::abs(rate) < 1e-12 * std::max(1.0, A_.row(i).cwiseAbs().maxCoeff())) continue;
          double lim = kInf;
          signed char side = 0;
          if (rate < 0 && std::isfinite(rlo_[i])) {
            lim = std::max(0.0, (ax(i) - rlo_[i]) / -rate);
            side = 1;
          } else if (rate > 0 && std::isfinite(rhi_[i])) {
            lim = std::max(0.0, (rhi_[i] - ax(i)) / rate);
            side = 2;
          }
          if (lim < alpha) {
            alpha = lim;
            block_col = -1;
            block_row = i;
            block_side = side;
          }
        }
        if (!std::isfinite(alpha)) return Status::unbounded;
        for (int b = 0; b < f; ++b) x_(F[b]) += alpha * pF(b);
        if (block_col >= 0) {
          cs_[block_col] = block_side;
          x_(block_col) = block_side == 1 ? lo_[block_col] : hi_[block_col];
        } else if (block_row >= 0) {
          rs_[block_row] = block_side;
        }
        stalled = alpha <= 1e-14 ? stalled + 1 : 0;
        continue;
      }

      // Stationary on the working set: check multiplier signs.
      Eigen::VectorXd y = Eigen::VectorXd::Zero(w);
      if (w > 0 && f > 0) {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M.transpose());
        y = cod.solve(gF);
      }
      const double dtol = 1e-9 * std::max(1.0, g.cwiseAbs().maxCoeff());
      const bool bland = stalled > 50;
      double worst = 0.0;
      int rel_col = -1, rel_row = -1;
      auto consider = [&](double viol, int col, int row) {
        if (viol <= dtol) return;
        if (bland) {
          if (rel_col < 0 && rel_row < 0) {
            rel_col = col;
            rel_row = row;
          }
          return;
        }
        if (viol > worst) {
          worst = viol;
          rel_col = col;
          rel_row = row;
        }
      };
      for (int k = 0; k < nb_; ++k) {
        if (cs_[k] == 0 || lo_[k] == hi_[k]) continue;
        double z = g(k);
        for (int a = 0; a < w; ++a) z -= A_(W[a], k) * y(a);
        consider(cs_[k] == 1 ? -z : z, k, -1);
      }
      for (int a = 0; a < w; ++a) {
        const int i = W[a];
        if (rlo_[i] == rhi_[i]) continue;
        consider(rs_[i] == 1 ? -y(a) : y(a), -1, i);
      }
      if (rel_col < 0 && rel_row < 0) {
        duals_.assign(mb_, 0.0);
        for (int a = 0; a < w; ++a) duals_[W[a]] = y(a);
        return Status::optimal;
      }
      if (rel_col >= 0) cs_[rel_col] = 0;
      if (rel_row >= 0) rs_[rel_row] = 0;
      ++stalled;
    }
    return Status::iteration_limit;
  }

  const Eigen::VectorXd& x() const { return x_; }
  const std::vector<signed char>& col_state() const { return cs_; }
  const std::vector<signed char>& row_state() const { return rs_; }
  const std::vector<double>& duals() const { return duals_; }
  long iterations() const { return iterations_ + lp_iterations_; }

 private:
  QpOptions opt_;
  int nb_, mb_;
  Eigen::MatrixXd A_, Q_;
  Eigen::VectorXd c_, x_;
  std::vector<double> lo_, hi_, rlo_, rhi_, duals_;
  std::vector<signed char> cs_, rs_;
  long iterations_ = 0, lp_iterations_ = 0;
};

}  // namespace detail

/// Solves a convex QP. If `warm` is non-null and matches the problem size it is
/// used as the starting working set; on return it holds the final one.
inline Solution solve_qp(const QuadraticProgram& qp, const QpOptions& opt = {}, QpWarmStart* warm = nullptr) {
  qp.lp.validate();
  const int n = qp.lp.num_cols(), m = qp.lp.num_rows();
  for (const auto& t : qp.quad) {
    if (t.row < 0 || t.row >= n || t.col < 0 || t.col >= n || !std::isfinite(t.value)) {
      throw DomainError("QuadraticProgram: bad quadratic entry");
    }
  }
  Solution out;
  std::vector<bool> row_used(m, false);
  for (const auto& t : qp.lp.entries) row_used[t.row] = true;
  for (int i = 0; i < m; ++i) {
    if (!row_used[i] && (qp.lp.row_lower[i] > opt.tol || qp.lp.row_upper[i] < -opt.tol)) {
      out.status = Status::infeasible;
      return out;
    }
  }
  const bool use_warm = warm && static_cast<int>(warm->x.size()) == n &&
                        static_cast<int>(warm->col_state.size()) == n && static_cast<int>(warm->row_state.size()) == m;
  std::vector<double> x(n, 0.0), duals(m, 0.0);
  std::vector<signed char> cs(n, 0), rs(m, 0);
  Status status = Status::optimal;
  long iterations = 0;

  for (const auto& blk : detail::qp_blocks(qp)) {
    detail::DenseActiveSet solver(qp, blk, opt);
    solver.check_psd();
    bool seeded = false;
    if (use_warm) {
      std::vector<double> wx;
      std::vector<signed char> wc, wr;
      for (int j : blk.cols) {
        wx.push_back(warm->x[j]);
        wc.push_back(warm->col_state[j]);
      }
      for (int i : blk.rows) wr.push_back(warm->row_state[i]);
      seeded = solver.seed(wx, wc, wr);
    }
    if (!seeded && !solver.seed_from_lp()) {
      out.status = Status::infeasible;
      out.iterations = iterations + solver.iterations();
      return out;
    }
    const Status st = solver.solve();
    iterations += solver.iterations();
    if (st == Status::unbounded) {
      out.status = st;
      out.iterations = iterations;
      return out;
    }
    if (st != Status::optimal) status = st;
    for (std::size_t k = 0; k < blk.cols.size(); ++k) {
      x[blk.cols[k]] = solver.x()(static_cast<int>(k));
      cs[blk.cols[k]] = solver.col_state()[k];
    }
    for (std::size_t k = 0; k < blk.rows.size(); ++k) {
      rs[blk.rows[k]] = solver.row_state()[k];
      if (!solver.duals().empty()) duals[blk.rows[k]] = solver.duals()[k];
    }
  }
  out.status = status;
  out.x = x;
  out.objective = qp.objective(x);
  out.row_duals = duals;
  out.iterations = iterations;
  if (warm) {
    warm->x = x;
    warm->col_state = cs;
    warm->row_state = rs;
  }
  return out;
}

inline Solution solve_qp(const QuadraticProgram& qp, double tol) {
  QpOptions opt;
  opt.tol = tol;
  return solve_qp(qp, opt);
}

/// Largest absolute KKT stationarity / sign residual at (x, row_duals), with
/// column multipliers recovered from the reduced gradient. Scaled by max(1, |g|).
inline double kkt_residual(const QuadraticProgram& qp, const Solution& sol, double active_tol = 1e-7) {
  const auto& lp = qp.lp;
  const int n = lp.num_cols(), m = lp.num_rows();
  std::vector<double> g(lp.cost);
  for (const auto& t : qp.quad) {
    g[t.row] += t.value * sol.x[t.col];
    if (t.row != t.col) g[t.col] += t.value * sol.x[t.row];
  }
  double gmax = 1.0;
  for (double v : g) gmax = std::max(gmax, std::abs(v));
  std::vector<double> red(g);
  for (const auto& t : lp.entries) red[t.col] -= t.value * sol.row_duals[t.row];
  auto ax = lp.activities(sol.x);
  double worst = max_violation(lp, sol.x);
  auto near = [&](double v, double b) { return std::isfinite(b) && std::abs(v - b) <= active_tol * std::max(1.0, std::abs(b)); };
  for (int j = 0; j < n; ++j) {
    const bool at_lo = near(sol.x[j], lp.col_lower[j]), at_hi = near(sol.x[j], lp.col_upper[j]);
    double r = 0.0;
    if (at_lo && at_hi) r = 0.0;
    else if (at_lo) r = std::max(0.0, -red[j]);
    else if (at_hi) r = std::max(0.0, red[j]);
    else r = std::abs(red[j]);
    worst = std::max(worst, r / gmax);
  }
  for (int i = 0; i < m; ++i) {
    const double y = sol.row_duals[i];
    const bool at_lo = near(ax[i], lp.row_lower[i]), at_hi = near(ax[i], lp.row_upper[i]);
    double r = 0.0;
    if (at_lo && at_hi) r = 0.0;
    else if (at_lo) r = std::max(0.0, -y);
    else if (at_hi) r = std::max(0.0, y);
    else r = std::abs(y);
    worst = std::max(worst, r / gmax);
  }
  return worst;
}

}  // namespace gridcoord::solver
