#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridcoord/errors.hpp"

namespace gridcoord::solver {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// min c'x + offset  s.t.  row_lower <= A x <= row_upper,  col_lower <= x <= col_upper.
/// Equality rows have row_lower == row_upper.
struct LinearProgram {
  std::vector<double> cost;
  std::vector<double> col_lower;
  std::vector<double> col_upper;
  std::vector<std::string> col_names;
  std::vector<double> row_lower;
  std::vector<double> row_upper;
  std::vector<std::string> row_names;
  std::vector<Triplet> entries;
  double objective_offset = 0.0;

  int num_cols() const { return static_cast<int>(cost.size()); }
  int num_rows() const { return static_cast<int>(row_lower.size()); }

  int add_column(std::string name, double lo, double hi, double c = 0.0) {
    cost.push_back(c);
    col_lower.push_back(lo);
    col_upper.push_back(hi);
    col_names.push_back(std::move(name));
    return num_cols() - 1;
  }

  int add_row(std::string name, double lo, double hi, std::initializer_list<std::pair<int, double>> coefs) {
    return add_row(std::move(name), lo, hi, std::vector<std::pair<int, double>>(coefs));
  }

  int add_row(std::string name, double lo, double hi, const std::vector<std::pair<int, double>>& coefs) {
    const int r = num_rows();
    row_lower.push_back(lo);
    row_upper.push_back(hi);
    row_names.push_back(std::move(name));
    for (auto [c, v] : coefs) {
      if (v != 0.0) entries.push_back({r, c, v});
    }
    return r;
  }

  void validate() const {
    const auto n = cost.size();
    if (col_lower.size() != n || col_upper.size() != n) throw DomainError("LinearProgram: column arrays differ in size");
    if (row_upper.size() != row_lower.size()) throw DomainError("LinearProgram: row arrays differ in size");
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(cost[j])) throw DomainError("LinearProgram: non-finite cost on column " + std::to_string(j));
      if (col_lower[j] > col_upper[j]) throw DomainError("LinearProgram: column " + std::to_string(j) + " has lower > upper");
      if (std::isnan(col_lower[j]) || std::isnan(col_upper[j])) throw DomainError("LinearProgram: NaN bound");
    }
    for (std::size_t i = 0; i < row_lower.size(); ++i) {
      if (row_lower[i] > row_upper[i]) throw DomainError("LinearProgram: row " + std::to_string(i) + " has lower > upper");
    }
    for (const auto& t : entries) {
      if (t.row < 0 || t.row >= num_rows() || t.col < 0 || t.col >= num_cols()) {
        throw DomainError("LinearProgram: entry index out of range");
      }
      if (!std::isfinite(t.value)) throw DomainError("LinearProgram: non-finite matrix entry");
    }
  }

  /// Row activities A x.
  std::vector<double> activities(std::span<const double> x) const {
    std::vector<double> ax(row_lower.size(), 0.0);
    for (const auto& t : entries) ax[t.row] += t.value * x[t.col];
    return ax;
  }

  double objective(std::span<const double> x) const {
    double obj = objective_offset;
    for (std::size_t j = 0; j < cost.size(); ++j) obj += cost[j] * x[j];
    return obj;
  }
};

/// LinearProgram plus an integrality mask; integral columns must be binaries.
struct MixedIntegerProgram {
  LinearProgram lp;
  std::vector<bool> integral;

  int add_column(std::string name, double lo, double hi, double c = 0.0) {
    integral.push_back(false);
    return lp.add_column(std::move(name), lo, hi, c);
  }
  int add_binary(std::string name, double c = 0.0) {
    integral.push_back(true);
    return lp.add_column(std::move(name), 0.0, 1.0, c);
  }
  int num_integral() const { return static_cast<int>(std::count(integral.begin(), integral.end(), true)); }

  void validate() const {
    lp.validate();
    if (integral.size() != lp.cost.size()) throw DomainError("MixedIntegerProgram: integrality mask size mismatch");
    for (std::size_t j = 0; j < integral.size(); ++j) {
      if (integral[j] && (lp.col_lower[j] < 0.0 || lp.col_upper[j] > 1.0)) {
        throw DomainError("MixedIntegerProgram: integral column " + std::to_string(j) + " not within [0,1]");
      }
    }
  }
};

/// LinearProgram plus a symmetric PSD quadratic term: objective gains 1/2 x'Qx.
/// Each off-diagonal Triplet (i,j,v) sets Q_ij = Q_ji = v.
struct QuadraticProgram {
  LinearProgram lp;
  std::vector<Triplet> quad;

  void add_quadratic(int i, int j, double v) { quad.push_back({i, j, v}); }

  double objective(std::span<const double> x) const {
    double obj = lp.objective(x);
    for (const auto& t : quad) {
      obj += (t.row == t.col ? 0.5 : 1.0) * t.value * x[t.row] * x[t.col];
    }
    return obj;
  }
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

struct Solution {
  Status status = Status::infeasible;
  std::vector<double> x;
  double objective = kInf;
  std::vector<double> row_duals;  // LP / QP only
  double best_bound = -kInf;      // MILP only
  double relaxation_bound = -kInf;  // MILP root LP relaxation
  double rel_gap = kInf;          // MILP only
  long iterations = 0;
  long nodes = 0;

  bool optimal() const { return status == Status::optimal; }
};

/// Largest scaled violation of rows and column bounds at x. Independent of
/// any solver bookkeeping; used to re-verify returned points.
inline double max_violation(const LinearProgram& lp, std::span<const double> x) {
  double worst = 0.0;
  auto viol = [](double v, double lo, double hi) {
    double e = 0.0;
    if (v < lo) e = (lo - v) / std::max(1.0, std::abs(lo));
    if (v > hi) e = (v - hi) / std::max(1.0, std::abs(hi));
    return e;
  };
  for (int j = 0; j < lp.num_cols(); ++j) worst = std::max(worst, viol(x[j], lp.col_lower[j], lp.col_upper[j]));
  auto ax = lp.activities(x);
  for (int i = 0; i < lp.num_rows(); ++i) worst = std::max(worst, viol(ax[i], lp.row_lower[i], lp.row_upper[i]));
  return worst;
}

/// Writes the problem in CPLEX-LP-like text for manual cross-checks.
inline void write_lp_text(std::ostream& os, const LinearProgram& lp, const std::vector<bool>* integral = nullptr,
                          const std::vector<Triplet>* quad = nullptr) {
  auto name = [&](int j) { return lp.col_names[j].empty() ? "x" + std::to_string(j) : lp.col_names[j]; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  os << "Minimize\n obj:";
  for (int j = 0; j < lp.num_cols(); ++j) {
    if (lp.cost[j] != 0.0) os << (lp.cost[j] < 0 ? " - " : " + ") << num(std::abs(lp.cost[j])) << ' ' << name(j);
  }
  if (quad && !quad->empty()) {
    os << " + [";
    for (const auto& t : *quad) {
      const double coef = t.row == t.col ? t.value : 2.0 * t.value;
      os << (coef < 0 ? " - " : " + ") << num(std::abs(coef)) << ' ' << name(t.row)
         << (t.row == t.col ? " ^ 2" : " * " + name(t.col));
    }
    os << " ] / 2";
  }
  if (lp.objective_offset != 0.0) os << " + " << num(lp.objective_offset) << " constant";
  os << "\nSubject To\n";
  std::vector<std::vector<std::pair<int, double>>> rows(lp.num_rows());
  for (const auto& t : lp.entries) rows[t.row].push_back({t.col, t.value});
  for (int i = 0; i < lp.num_rows(); ++i) {
    const std::string rn = lp.row_names[i].empty() ? "r" + std::to_string(i) : lp.row_names[i];
    auto body = [&] {
      std::string s;
      for (auto [c, v] : rows[i]) s += (v < 0 ? " - " : " + ") + num(std::abs(v)) + " " + name(c);
      return s.empty() ? std::string(" 0 x0") : s;
    };
    const double lo = lp.row_lower[i], hi = lp.row_upper[i];
    if (lo == hi) {
      os << ' ' << rn << ':' << body() << " = " << num(lo) << '\n';
    } else {
      if (lo > -kInf) os << ' ' << rn << "_lo:" << body() << " >= " << num(lo) << '\n';
      if (hi < kInf) os << ' ' << rn << "_hi:" << body() << " <= " << num(hi) << '\n';
    }
  }
  os << "Bounds\n";
  for (int j = 0; j < lp.num_cols(); ++j) {
    const double lo = lp.col_lower[j], hi = lp.col_upper[j];
    if (lo == -kInf && hi == kInf) {
      os << ' ' << name(j) << " free\n";
    } else {
      os << ' ' << (lo == -kInf ? "-inf" : num(lo)) << " <= " << name(j) << " <= " << (hi == kInf ? "+inf" : num(hi))
         << '\n';
    }
  }
  if (integral) {
    os << "Binaries\n";
    for (int j = 0; j < lp.num_cols(); ++j) {
      if ((*integral)[j]) os << ' ' << name(j) << '\n';
    }
  }
  os << "End\n";
}

}  // namespace gridcoord::solver
