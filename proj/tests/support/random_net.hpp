#pragma once

// Random multi-region networks for property tests. Every loaded node owns a
// local generator large enough for its peak demand, so every build vector is
// feasible; cheaper generators elsewhere make transmission worth building.

#include <algorithm>
#include <random>
#include <string>

#include "gridcoord/netmodel.hpp"

namespace testnet {

struct Options {
  int min_regions = 1, max_regions = 3;
  int min_nodes = 2, max_nodes = 12;
  int max_candidates = 6;
  int max_scenarios = 3;
  bool allow_internal_candidates = true;
};

inline gridcoord::Network random_network(std::mt19937_64& rng, const Options& opt = {}) {
  using namespace gridcoord;
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  Network net;
  const int R = pick(opt.min_regions, opt.max_regions);
  const int N = std::max(pick(std::max(opt.min_nodes, R), opt.max_nodes), R);
  for (int z = 0; z < R; ++z) net.regions.push_back("R" + std::to_string(z + 1));
  for (int n = 0; n < N; ++n) {
    const int z = n < R ? n : pick(0, R - 1);
    char id[16];
    std::snprintf(id, sizeof id, "n%02d", n + 1);
    net.nodes.push_back({id, net.regions[z]});
  }
  int gid = 0, lid = 0;
  for (int n = 0; n < N; ++n) {
    const bool loaded = pick(0, 3) != 0;
    double demand = 0.0;
    if (loaded) {
      demand = std::round(uni(20, 200));
      net.loads.push_back({"d" + std::to_string(++lid), net.nodes[n].id, demand});
      const double cap = std::round(demand * 1.6 + 10);
      const double c1 = std::round(uni(60, 120));
      net.generators.push_back({"g" + std::to_string(++gid), net.nodes[n].id,
                                {{std::round(cap / 2), c1}, {cap, c1 + std::round(uni(5, 60))}}, 0.0, cap});
    }
    if (pick(0, 2) == 0) {
      const double cap = std::round(uni(50, 300));
      const double c = std::round(uni(5, 40));
      net.generators.push_back({"g" + std::to_string(++gid), net.nodes[n].id, {{cap, c}}, 0.0, cap});
    }
  }
  // Spanning tree of existing lines plus a few extra.
  int hid = 0;
  auto add_line = [&](int a, int b) {
    net.existing_lines.push_back({"L" + std::to_string(++hid), net.nodes[a].id, net.nodes[b].id,
                                  std::round(uni(0.05, 0.5) * 100) / 100, std::round(uni(20, 150))});
  };
  for (int n = 1; n < N; ++n) add_line(pick(0, n - 1), n);
  for (int e = pick(0, 2); e > 0 && N > 2; --e) {
    const int a = pick(0, N - 1), b = pick(0, N - 1);
    if (a != b) add_line(a, b);
  }
  const int K = pick(0, opt.max_candidates);
  for (int k = 0; k < K; ++k) {
    int a = pick(0, N - 1), b = pick(0, N - 1);
    if (a == b) b = (a + 1) % N;
    if (!opt.allow_internal_candidates && net.nodes[a].region == net.nodes[b].region) {
      for (int t = 0; t < N; ++t) {
        if (net.nodes[t].region != net.nodes[a].region) {
          b = t;
          break;
        }
      }
    }
    net.candidate_lines.push_back({"C" + std::to_string(k + 1), net.nodes[a].id, net.nodes[b].id,
                                   std::round(uni(0.05, 0.5) * 100) / 100, std::round(uni(50, 250)),
                                   std::round(uni(100, 4000)), pick(1, 30)});
  }
  const int S = pick(1, opt.max_scenarios);
  for (int s = 0; s < S; ++s) {
    Scenario sc{"s" + std::to_string(s + 1), std::round(uni(1, 10)), {}, {}};
    if (s > 0) {
      for (const auto& d : net.loads) sc.demand[d.id] = std::round(d.demand * uni(0.5, 1.0));
    }
    net.scenarios.push_back(std::move(sc));
  }
  net.interest_rate = uni(0.02, 0.1);
  net.angle_bound = pick(0, 1) ? 1000.0 : 30.0;
  return net;
}

}  // namespace testnet
