#pragma once

// Best-first branch-and-bound over binary columns with LP relaxations.

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "gridcoord/solver/problem.hpp"
#include "gridcoord/solver/simplex.hpp"

namespace gridcoord::solver {

struct MilpOptions {
  double rel_gap = 1e-6;
  double integrality_tol = 1e-6;
  long max_nodes = 200000;
  LpOptions lp;
};

namespace detail {

struct BnbNode {
  double bound;
  long seq;
  std::vector<signed char> fix;  // per integral column: -1 free, 0, 1
};

struct BnbOrder {
  bool operator()(const BnbNode& a, const BnbNode& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.seq > b.seq;
  }
};

inline double relative_gap(double incumbent, double bound) {
  return (incumbent - bound) / std::max(1.0, std::abs(incumbent));
}

}  // namespace detail

inline Solution solve_milp(const MixedIntegerProgram& mip, const MilpOptions& opt = {}) {
  mip.validate();
  if (opt.rel_gap < 0.0) throw DomainError("solve_milp: rel_gap must be non-negative");
  const LinearProgram& lp = mip.lp;
  const int n = lp.num_cols();
  std::vector<int> ints;
  for (int j = 0; j < n; ++j) {
    if (mip.integral[j]) ints.push_back(j);
  }

  std::vector<double> lo(lp.col_lower), hi(lp.col_upper);
  auto apply_fix = [&](const std::vector<signed char>& fix) {
    for (std::size_t k = 0; k < ints.size(); ++k) {
      const int j = ints[k];
      if (fix[k] < 0) {
        lo[j] = lp.col_lower[j];
        hi[j] = lp.col_upper[j];
      } else {
        lo[j] = hi[j] = fix[k];
      }
    }
  };
  auto relax = [&](const std::vector<signed char>& fix) {
    apply_fix(fix);
    return detail::run_simplex(lp, lo, hi, opt.lp).solution;
  };

  Solution best;
  best.status = Status::infeasible;
  long lp_iterations = 0;

  std::vector<signed char> root_fix(ints.size(), -1);
  Solution root = relax(root_fix);
  lp_iterations += root.iterations;
  if (root.status != Status::optimal) {
    root.nodes = 1;
    return root;
  }

  std::priority_queue<detail::BnbNode, std::vector<detail::BnbNode>, detail::BnbOrder> open;
  long seq = 0, nodes = 0;
  open.push({root.objective, seq++, root_fix});
  bool first = true;
  bool hit_limit = false;

  while (!open.empty()) {
    if (best.status == Status::optimal &&
        detail::relative_gap(best.objective, open.top().bound) <= opt.rel_gap) {
      break;
    }
    if (nodes >= opt.max_nodes) {
      hit_limit = true;
      break;
    }
    detail::BnbNode node = open.top();
    open.pop();
    ++nodes;
    Solution rel = first ? root : relax(node.fix);
    if (!first) lp_iterations += rel.iterations;
    first = false;
    if (rel.status == Status::unbounded) {
      rel.nodes = nodes;
      return rel;
    }
    if (rel.status != Status::optimal) continue;
    if (best.status == Status::optimal && detail::relative_gap(best.objective, rel.objective) <= opt.rel_gap) {
      continue;
    }

    int branch = -1;
    double most = -1.0;
    for (std::size_t k = 0; k < ints.size(); ++k) {
      const double v = rel.x[ints[k]];
      const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac <= opt.integrality_tol) continue;
      if (frac > most + 1e-12) {
        most = frac;
        branch = static_cast<int>(k);
      }
    }
    if (branch < 0) {
      // Integral: re-solve with binaries pinned so continuous values match exactly.
      std::vector<signed char> fix(ints.size());
      for (std::size_t k = 0; k < ints.size(); ++k) fix[k] = rel.x[ints[k]] > 0.5 ? 1 : 0;
      Solution polished = relax(fix);
      lp_iterations += polished.iterations;
      if (polished.status != Status::optimal) polished = rel;
      for (int j : ints) polished.x[j] = std::round(polished.x[j]);
      polished.objective = lp.objective(polished.x);
      if (best.status != Status::optimal || polished.objective < best.objective) best = polished;
      continue;
    }
    for (signed char v : {0, 1}) {
      detail::BnbNode child{rel.objective, seq++, node.fix};
      child.fix[branch] = v;
      open.push(std::move(child));
    }
  }

  double bound = best.status == Status::optimal ? best.objective : kInf;
  if (!open.empty()) bound = std::min(bound, open.top().bound);
  if (best.status != Status::optimal) {
    Solution out;
    out.status = hit_limit ? Status::iteration_limit : Status::infeasible;
    out.nodes = nodes;
    out.iterations = lp_iterations;
    out.relaxation_bound = root.objective;
    out.best_bound = bound;
    return out;
  }
  best.status = hit_limit ? Status::iteration_limit : Status::optimal;
  best.best_bound = std::min(bound, best.objective);
  best.relaxation_bound = root.objective;
  best.rel_gap = std::max(0.0, detail::relative_gap(best.objective, best.best_bound));
  best.nodes = nodes;
  best.iterations = lp_iterations;
  return best;
}

inline Solution solve_milp(const MixedIntegerProgram& mip, double rel_gap) {
  MilpOptions opt;
  opt.rel_gap = rel_gap;
  return solve_milp(mip, opt);
}

}  // namespace gridcoord::solver
