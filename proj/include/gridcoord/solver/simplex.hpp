#pragma once

// Dense bounded-variable primal simplex (two phases, artificial start basis).
//
// Rows are turned into equalities with one slack each, A x - s = 0, where the
// slack carries the row bounds. The tableau is kept explicitly and
// periodically rebuilt from an LU factorization of the basis to keep drift
// below the feasibility tolerance.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gridcoord/solver/problem.hpp"

namespace gridcoord::solver {

struct LpOptions {
  double tol = 1e-7;               // feasibility / optimality tolerance
  long max_iterations = 200000;
  int refactor_every = 80;
};

namespace detail {

enum class VarState : unsigned char { basic, at_lower, at_upper, free_zero };

struct SimplexResult {
  Solution solution;
  std::vector<double> x;           // structural + slack values
  std::vector<VarState> state;     // structural + slack states
};

class BoundedSimplex {
 public:
  BoundedSimplex(const LinearProgram& lp, std::span<const double> col_lo, std::span<const double> col_hi,
                 const LpOptions& opt)
      : lp_(lp), opt_(opt), n_(lp.num_cols()), m_(lp.num_rows()) {
    columns_.resize(n_ + m_);
    for (const auto& t : lp.entries) columns_[t.col].push_back({t.row, t.value});
    lo_.assign(n_ + m_, 0.0);
    hi_.assign(n_ + m_, 0.0);
    for (int j = 0; j < n_; ++j) {
      lo_[j] = col_lo[j];
      hi_[j] = col_hi[j];
    }
    for (int i = 0; i < m_; ++i) {
      columns_[n_ + i].push_back({i, -1.0});
      lo_[n_ + i] = lp.row_lower[i];
      hi_[n_ + i] = lp.row_upper[i];
    }
    double cmax = 1.0;
    for (double c : lp.cost) cmax = std::max(cmax, std::abs(c));
    dual_tol_ = 1e-9 * cmax;
  }

  SimplexResult run() {
    SimplexResult out;
    for (int j = 0; j < n_; ++j) {
      if (lo_[j] > hi_[j]) {
        out.solution.status = Status::infeasible;
        return out;
      }
    }
    start_basis();
    Status st = Status::optimal;
    if (num_art_ > 0) {
      set_phase_costs(true);
      st = iterate();
      if (st == Status::iteration_limit) return finish(st);
      double infeas = 0.0;
      for (int a = n_ + m_; a < total_; ++a) infeas += x_[a];
      if (infeas > opt_.tol * feas_scale_) return finish(Status::infeasible);
      for (int a = n_ + m_; a < total_; ++a) {
        hi_[a] = 0.0;
        if (pos_[a] < 0) x_[a] = 0.0;
      }
    }
    set_phase_costs(false);
    for (int pass = 0; pass < 4; ++pass) {
      st = iterate();
      if (st != Status::optimal) return finish(st);
      if (!reinvert()) continue;
      if (dual_feasible() && primal_feasible()) break;
    }
    return finish(st);
  }

 private:
  struct Entry {
    int row;
    double value;
  };

  double& T(int i, int c) { return tab_[static_cast<std::size_t>(i) * total_ + c]; }

  static bool finite(double v) { return std::isfinite(v); }

  void start_basis() {
    x_.assign(n_ + m_, 0.0);
    state_.assign(n_ + m_, VarState::at_lower);
    for (int j = 0; j < n_; ++j) {
      if (finite(lo_[j])) {
        x_[j] = lo_[j];
        state_[j] = VarState::at_lower;
      } else if (finite(hi_[j])) {
        x_[j] = hi_[j];
        state_[j] = VarState::at_upper;
      } else {
        x_[j] = 0.0;
        state_[j] = VarState::free_zero;
      }
    }
    feas_scale_ = 1.0;
    std::vector<double> act(m_, 0.0);
    for (int j = 0; j < n_; ++j) {
      for (auto [r, v] : columns_[j]) act[r] += v * x_[j];
    }
    // Basis: slack if the row is satisfied, otherwise an artificial.
    std::vector<double> diag(m_, -1.0);
    head_.assign(m_, -1);
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      const double lo = lo_[s], hi = hi_[s];
      const double slack_tol = 1e-9 * std::max(1.0, std::abs(act[i]));
      if (act[i] >= lo - slack_tol && act[i] <= hi + slack_tol) {
        x_[s] = act[i];
        head_[i] = s;
        state_[s] = VarState::basic;
        continue;
      }
      const double target = act[i] < lo ? lo : hi;
      x_[s] = target;
      state_[s] = act[i] < lo ? VarState::at_lower : VarState::at_upper;
      const double d = target - act[i] > 0 ? 1.0 : -1.0;
      const int a = static_cast<int>(columns_.size());
      columns_.push_back({{i, d}});
      lo_.push_back(0.0);
      hi_.push_back(kInf);
      x_.push_back(std::abs(target - act[i]));
      state_.push_back(VarState::basic);
      feas_scale_ = std::max(feas_scale_, std::abs(target));
      head_[i] = a;
      diag[i] = d;
    }
    total_ = static_cast<int>(columns_.size());
    num_art_ = total_ - n_ - m_;
    pos_.assign(total_, -1);
    for (int i = 0; i < m_; ++i) pos_[head_[i]] = i;
    tab_.assign(static_cast<std::size_t>(m_) * total_, 0.0);
    for (int c = 0; c < total_; ++c) {
      for (auto [r, v] : columns_[c]) T(r, c) = v / diag[r];
    }
    cost_.assign(total_, 0.0);
    d_.assign(total_, 0.0);
  }

  void set_phase_costs(bool phase_one) {
    std::fill(cost_.begin(), cost_.end(), 0.0);
    if (phase_one) {
      for (int a = n_ + m_; a < total_; ++a) cost_[a] = 1.0;
    } else {
      for (int j = 0; j < n_; ++j) cost_[j] = lp_.cost[j];
    }
    recompute_reduced_costs();
  }

  void recompute_reduced_costs() {
    for (int c = 0; c < total_; ++c) d_[c] = cost_[c];
    for (int i = 0; i < m_; ++i) {
      const double cb = cost_[head_[i]];
      if (cb == 0.0) continue;
      const double* row = &tab_[static_cast<std::size_t>(i) * total_];
      for (int c = 0; c < total_; ++c) d_[c] -= cb * row[c];
    }
    for (int i = 0; i < m_; ++i) d_[head_[i]] = 0.0;
  }

  /// Rebuilds tableau, basic values and reduced costs from the original
  /// columns. Returns false if the basis matrix is numerically singular.
  bool reinvert() {
    if (m_ == 0) {
      recompute_reduced_costs();
      return true;
    }
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(m_, m_);
    for (int i = 0; i < m_; ++i) {
      for (auto [r, v] : columns_[head_[i]]) basis(r, i) = v;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis);
    if (!(std::abs(lu.determinant()) > 0.0) || lu.rcond() < 1e-14) return false;
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(m_, total_);
    for (int c = 0; c < total_; ++c) {
      for (auto [r, v] : columns_[c]) full(r, c) = v;
    }
    Eigen::MatrixXd t = lu.solve(full);
    for (int i = 0; i < m_; ++i) {
      for (int c = 0; c < total_; ++c) {
        const double v = t(i, c);
        T(i, c) = std::abs(v) < 1e-13 ? 0.0 : v;
      }
      T(i, head_[i]) = 1.0;
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
    for (int c = 0; c < total_; ++c) {
      if (pos_[c] >= 0 || x_[c] == 0.0) continue;
      for (auto [r, v] : columns_[c]) rhs(r) -= v * x_[c];
    }
    Eigen::VectorXd xb = lu.solve(rhs);
    for (int i = 0; i < m_; ++i) x_[head_[i]] = xb(i);
    recompute_reduced_costs();
    return true;
  }

  bool dual_feasible() const {
    for (int c = 0; c < total_; ++c) {
      if (pos_[c] >= 0 || lo_[c] == hi_[c]) continue;
      if (entering_direction(c) != 0) return false;
    }
    return true;
  }

  bool primal_feasible() const {
    for (int i = 0; i < m_; ++i) {
      const int b = head_[i];
      const double tol = opt_.tol * std::max(1.0, std::abs(x_[b]));
      if (x_[b] < lo_[b] - tol || x_[b] > hi_[b] + tol) return false;
    }
    return true;
  }

  int entering_direction(int c) const {
    const double d = d_[c];
    switch (state_[c]) {
      case VarState::at_lower: return d < -dual_tol_ ? 1 : 0;
      case VarState::at_upper: return d > dual_tol_ ? -1 : 0;
      case VarState::free_zero: return d < -dual_tol_ ? 1 : (d > dual_tol_ ? -1 : 0);
      case VarState::basic: return 0;
    }
    return 0;
  }

  Status iterate() {
    int degenerate_run = 0;
    bool bland = false;
    int since_refactor = 0;
    while (true) {
      if (iterations_ >= opt_.max_iterations) return Status::iteration_limit;
      if (since_refactor >= opt_.refactor_every) {
        reinvert();
        since_refactor = 0;
      }
      // Pricing.
      int q = -1, dir = 0;
      double best = 0.0;
      for (int c = 0; c < total_; ++c) {
        if (pos_[c] >= 0 || lo_[c] == hi_[c]) continue;
        const int dc = entering_direction(c);
        if (dc == 0) continue;
        if (bland) {
          q = c;
          dir = dc;
          break;
        }
        if (std::abs(d_[c]) > best) {
          best = std::abs(d_[c]);
          q = c;
          dir = dc;
        }
      }
      if (q < 0) return Status::optimal;

      // Harris two-pass ratio test.
      const double piv_tol = 1e-9;
      double relaxed = kInf;
      for (int i = 0; i < m_; ++i) {
        const double a = T(i, q);
        if (std::abs(a) < piv_tol) continue;
        const int b = head_[i];
        const double rate = -dir * a;
        const double slack_tol = 1e-9 * std::max(1.0, std::abs(x_[b]));
        double lim = kInf;
        if (rate < 0 && finite(lo_[b])) lim = (x_[b] - lo_[b] + slack_tol) / -rate;
        if (rate > 0 && finite(hi_[b])) lim = (hi_[b] - x_[b] + slack_tol) / rate;
        relaxed = std::min(relaxed, lim);
      }
      int r = -1;
      double step = kInf, best_piv = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double a = T(i, q);
        if (std::abs(a) < piv_tol) continue;
        const int b = head_[i];
        const double rate = -dir * a;
        double lim = kInf;
        if (rate < 0 && finite(lo_[b])) lim = (x_[b] - lo_[b]) / -rate;
        if (rate > 0 && finite(hi_[b])) lim = (hi_[b] - x_[b]) / rate;
        if (std::isfinite(lim) && lim <= relaxed && std::abs(a) > best_piv) {
          best_piv = std::abs(a);
          r = i;
          step = std::max(lim, 0.0);
        }
      }
      const double flip = (finite(lo_[q]) && finite(hi_[q])) ? hi_[q] - lo_[q] : kInf;
      if (r < 0 && flip == kInf) return Status::unbounded;
      const bool do_flip = flip <= step;
      if (do_flip) step = flip;

      ++iterations_;
      ++since_refactor;
      if (step > 0.0) {
        x_[q] += dir * step;
        for (int i = 0; i < m_; ++i) {
          const double a = T(i, q);
          if (a != 0.0) x_[head_[i]] -= dir * a * step;
        }
      }
      if (step <= 1e-12) {
        if (++degenerate_run > 40) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
      if (do_flip) {
        if (dir > 0) {
          x_[q] = hi_[q];
          state_[q] = VarState::at_upper;
        } else {
          x_[q] = lo_[q];
          state_[q] = VarState::at_lower;
        }
        continue;
      }
      const int leaving = head_[r];
      const double rate = -dir * T(r, q);
      if (rate < 0) {
        x_[leaving] = lo_[leaving];
        state_[leaving] = VarState::at_lower;
      } else {
        x_[leaving] = hi_[leaving];
        state_[leaving] = VarState::at_upper;
      }
      pivot(r, q);
    }
  }

  void pivot(int r, int q) {
    const int leaving = head_[r];
    double* prow = &tab_[static_cast<std::size_t>(r) * total_];
    const double inv = 1.0 / prow[q];
    nz_.clear();
    for (int c = 0; c < total_; ++c) {
      if (prow[c] == 0.0) continue;
      prow[c] *= inv;
      if (std::abs(prow[c]) < 1e-14) {
        prow[c] = 0.0;
        continue;
      }
      nz_.push_back(c);
    }
    prow[q] = 1.0;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &tab_[static_cast<std::size_t>(i) * total_];
      const double f = row[q];
      if (f == 0.0) continue;
      for (int c : nz_) row[c] -= f * prow[c];
      row[q] = 0.0;
    }
    const double f = d_[q];
    if (f != 0.0) {
      for (int c : nz_) d_[c] -= f * prow[c];
    }
    d_[q] = 0.0;
    head_[r] = q;
    pos_[q] = r;
    pos_[leaving] = -1;
    state_[q] = VarState::basic;
  }

  SimplexResult finish(Status st) {
    SimplexResult out;
    out.solution.status = st;
    out.solution.iterations = iterations_;
    if (st == Status::infeasible) return out;
    out.x.assign(x_.begin(), x_.begin() + n_ + m_);
    out.state.assign(state_.begin(), state_.begin() + n_ + m_);
    out.solution.x.assign(x_.begin(), x_.begin() + n_);
    // Snap nonbasic structurals exactly onto their bounds.
    for (int j = 0; j < n_; ++j) {
      if (state_[j] == VarState::at_lower) out.solution.x[j] = lo_[j];
      if (state_[j] == VarState::at_upper) out.solution.x[j] = hi_[j];
    }
    out.solution.objective = lp_.objective(out.solution.x);
    out.solution.row_duals.assign(m_, 0.0);
    for (int i = 0; i < m_; ++i) out.solution.row_duals[i] = d_[n_ + i];
    return out;
  }

  const LinearProgram& lp_;
  LpOptions opt_;
  int n_ = 0, m_ = 0, total_ = 0, num_art_ = 0;
  std::vector<std::vector<Entry>> columns_;
  std::vector<double> lo_, hi_, x_, cost_, d_, tab_;
  std::vector<VarState> state_;
  std::vector<int> head_, pos_, nz_;
  double dual_tol_ = 1e-9;
  double feas_scale_ = 1.0;
  long iterations_ = 0;
};

inline SimplexResult run_simplex(const LinearProgram& lp, std::span<const double> lo, std::span<const double> hi,
                                 const LpOptions& opt) {
  return BoundedSimplex(lp, lo, hi, opt).run();
}

}  // namespace detail

/// Solves an LP. Row duals are the reduced costs of the row slacks.
inline Solution solve_lp(const LinearProgram& lp, const LpOptions& opt = {}) {
  lp.validate();
  return detail::run_simplex(lp, lp.col_lower, lp.col_upper, opt).solution;
}

inline Solution solve_lp(const LinearProgram& lp, double tol) {
  LpOptions opt;
  opt.tol = tol;
  return solve_lp(lp, opt);
}

}  // namespace gridcoord::solver
