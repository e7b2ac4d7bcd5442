#pragma once

// Two-planner build/no-build game over a single shared candidate. The line
// is built only when both planners choose 1; each planner then pays half the
// annualized investment. Dispatch in every cell is the fixed-build optimum.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/centralized.hpp"
#include "gridcoord/netmodel.hpp"

namespace gridcoord {

/// How regional costs are booked in the cells where exactly one planner
/// wants the line.
struct PayoffConvention {
  enum class Kind { plain, bribe };
  Kind kind = Kind::plain;
  std::optional<double> bribe;  // transfer; defaults to one investment share

  static PayoffConvention plain() { return {}; }
  static PayoffConvention with_bribe(std::optional<double> b = std::nullopt) { return {Kind::bribe, b}; }
};

inline std::string to_string(const PayoffConvention& c) {
  if (c.kind == PayoffConvention::Kind::plain) return "plain";
  if (!c.bribe) return "bribe";
  char buf[64];
  std::snprintf(buf, sizeof buf, "bribe(%.12g)", *c.bribe);
  return buf;
}

struct GameCell {
  int a = 0, b = 0;
  bool built = false;
  std::array<double, 2> generation{};  // weighted generation cost per region
  std::array<double, 2> cost{};        // regional cost under the convention
  double investment = 0.0;             // annualized, 0 when not built
  double transfer = 0.0;               // paid by the lone proposer to the other planner
  double social = 0.0;                 // total generation + investment
};

struct GameMatrix {
  std::array<std::string, 2> players{"P1", "P2"};
  std::string candidate;
  std::string convention = "plain";
  std::array<std::array<GameCell, 2>, 2> cells{};  // [a][b]

  const GameCell& at(int a, int b) const { return cells.at(a).at(b); }
};

using Cell = std::pair<int, int>;

namespace detail {

inline void require_game_shape(const Network& net) {
  if (net.regions.size() != 2) {
    throw DomainError("game: expected 2 regions, got " + std::to_string(net.regions.size()));
  }
  if (net.candidate_lines.size() != 1) {
    throw DomainError("game: expected 1 candidate line, got " + std::to_string(net.candidate_lines.size()));
  }
}

inline GameCell evaluate_cell(const Network& net, int a, int b, const PayoffConvention& conv) {
  if ((a != 0 && a != 1) || (b != 0 && b != 1)) throw DomainError("game: decisions must be 0 or 1");
  NetworkIndex idx(net);
  GameCell c;
  c.a = a;
  c.b = b;
  c.built = a == 1 && b == 1;
  const auto plan = fixed_u_dcopf(net, {c.built ? 1 : 0});
  if (!plan.optimal()) throw Error("game: dispatch for cell (" + std::to_string(a) + "," + std::to_string(b) + ") is infeasible");
  for (std::size_t s = 0; s < plan.generation_cost.size(); ++s) {
    for (std::size_t g = 0; g < plan.generation_cost[s].size(); ++g) {
      c.generation[idx.region_of_generator(static_cast<int>(g))] += net.scenarios[s].weight * plan.generation_cost[s][g];
    }
  }
  const double share = 0.5 * annualized_cost(net, net.candidate_lines[0]);
  c.investment = c.built ? 2.0 * share : 0.0;
  c.cost = c.generation;
  if (c.built) {
    c.cost[0] += share;
    c.cost[1] += share;
  }
  if (conv.kind == PayoffConvention::Kind::bribe && a != b) {
    c.transfer = conv.bribe ? *conv.bribe : share;
    const int payer = a == 1 ? 0 : 1;
    c.cost[payer] += c.transfer;
    c.cost[1 - payer] -= c.transfer;
  }
  c.social = c.generation[0] + c.generation[1] + c.investment;
  return c;
}

}  // namespace detail

/// Regional costs for decisions (a, b).
inline std::array<double, 2> regional_cost(const Network& net, int a, int b, const PayoffConvention& conv) {
  detail::require_game_shape(net);
  return detail::evaluate_cell(net, a, b, conv).cost;
}

inline GameMatrix build_game(const Network& net, const PayoffConvention& conv) {
  detail::require_game_shape(net);
  GameMatrix gm;
  gm.players = {net.regions[0], net.regions[1]};
  gm.candidate = net.candidate_lines[0].id;
  gm.convention = to_string(conv);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) gm.cells[a][b] = detail::evaluate_cell(net, a, b, conv);
  }
  return gm;
}

/// Matrix from explicit cost pairs; social cost is their sum.
inline GameMatrix make_game(const std::array<std::array<std::array<double, 2>, 2>, 2>& costs) {
  GameMatrix gm;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      auto& c = gm.cells[a][b];
      c.a = a;
      c.b = b;
      c.built = a == 1 && b == 1;
      c.cost = costs[a][b];
      c.generation = costs[a][b];
      c.social = costs[a][b][0] + costs[a][b][1];
    }
  }
  return gm;
}

namespace detail {
inline bool no_better(double mine, double alt) { return mine <= alt + 1e-9 * std::max(1.0, std::abs(alt)); }
}  // namespace detail

/// Pure-strategy equilibria of the cost-minimizing game: no player lowers
/// its own cost by switching alone.
inline std::vector<Cell> find_nash_equilibria(const GameMatrix& gm) {
  std::vector<Cell> out;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const bool p1 = detail::no_better(gm.at(a, b).cost[0], gm.at(1 - a, b).cost[0]);
      const bool p2 = detail::no_better(gm.at(a, b).cost[1], gm.at(a, 1 - b).cost[1]);
      if (p1 && p2) out.emplace_back(a, b);
    }
  }
  return out;
}

/// Every cell attaining the least social cost.
inline std::vector<Cell> find_social_optimum(const GameMatrix& gm) {
  double best = kInf;
  for (const auto& row : gm.cells) {
    for (const auto& c : row) best = std::min(best, c.social);
  }
  std::vector<Cell> out;
  for (const auto& row : gm.cells) {
    for (const auto& c : row) {
      if (detail::no_better(c.social, best)) out.emplace_back(c.a, c.b);
    }
  }
  return out;
}

inline nlohmann::json to_json(const GameMatrix& gm) {
  nlohmann::json j;
  j["players"] = gm.players;
  j["candidate"] = gm.candidate;
  j["convention"] = gm.convention;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& row : gm.cells) {
    for (const auto& c : row) {
      cells.push_back({{"a", c.a},
                       {"b", c.b},
                       {"built", c.built},
                       {"cost", c.cost},
                       {"generation", c.generation},
                       {"investment", c.investment},
                       {"transfer", c.transfer},
                       {"social", c.social}});
    }
  }
  j["cells"] = cells;
  auto list = [](const std::vector<Cell>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [x, y] : v) a.push_back({x, y});
    return a;
  };
  j["nash_equilibria"] = list(find_nash_equilibria(gm));
  j["social_optimum"] = list(find_social_optimum(gm));
  return j;
}

/// Fixed-width table: rows are the first player's choice, columns the
/// second's; NE cells are marked '*', social optima '+'.
inline std::string render_text(const GameMatrix& gm) {
  const auto ne = find_nash_equilibria(gm);
  const auto so = find_social_optimum(gm);
  auto has = [](const std::vector<Cell>& v, int a, int b) {
    return std::find(v.begin(), v.end(), Cell{a, b}) != v.end();
  };
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "candidate %s, convention %s\n", gm.candidate.c_str(), gm.convention.c_str());
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s | %-30s | %-30s\n", (gm.players[0] + "\\" + gm.players[1]).c_str(), "0", "1");
  out += buf;
  out += std::string(10, '-') + "-+-" + std::string(30, '-') + "-+-" + std::string(30, '-') + "\n";
  for (int a = 0; a < 2; ++a) {
    std::snprintf(buf, sizeof buf, "%-10d", a);
    out += buf;
    for (int b = 0; b < 2; ++b) {
      const auto& c = gm.at(a, b);
      char cell[64];
      std::snprintf(cell, sizeof cell, "(%.2f, %.2f)%s%s", c.cost[0], c.cost[1], has(ne, a, b) ? "*" : "",
                    has(so, a, b) ? "+" : "");
      std::snprintf(buf, sizeof buf, " | %-30s", cell);
      out += buf;
    }
    out += "\n";
  }
  out += "social:";
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      std::snprintf(buf, sizeof buf, " (%d,%d)=%.2f", a, b, gm.at(a, b).social);
      out += buf;
    }
  }
  out += "\n* Nash equilibrium   + social optimum\n";
  return out;
}

}  // namespace gridcoord
