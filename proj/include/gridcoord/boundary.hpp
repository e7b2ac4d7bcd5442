#pragma once

// Lines that cross region boundaries.

#include <string>
#include <vector>

#include "gridcoord/netmodel.hpp"

namespace gridcoord {

/// A line (existing or candidate) with endpoints in two regions.
struct SharedElement {
  std::string id;
  bool candidate = false;
  int index = -1;  // into existing_lines or candidate_lines
  int from = -1, to = -1;
  double reactance = 0.0, capacity = 0.0;
  int from_region = -1, to_region = -1;

  int node(int end) const { return end == 0 ? from : to; }
  bool touches(int z) const { return from_region == z || to_region == z; }
};

/// Shared existing lines first, then shared candidates, each in input order.
inline std::vector<SharedElement> shared_elements(const Network& net) {
  NetworkIndex idx(net);
  std::vector<SharedElement> out;
  for (std::size_t h = 0; h < idx.existing().size(); ++h) {
    const auto& b = idx.existing()[h];
    if (b.shared()) {
      out.push_back({net.existing_lines[h].id, false, static_cast<int>(h), b.from, b.to, b.reactance, b.capacity,
                     b.from_region, b.to_region});
    }
  }
  for (std::size_t k = 0; k < idx.candidates().size(); ++k) {
    const auto& b = idx.candidates()[k];
    if (b.shared()) {
      out.push_back({net.candidate_lines[k].id, true, static_cast<int>(k), b.from, b.to, b.reactance, b.capacity,
                     b.from_region, b.to_region});
    }
  }
  return out;
}

/// Shared existing lines plus the shared candidates built under u.
inline std::vector<SharedElement> tie_lines(const Network& net, const std::vector<int>& u) {
  std::vector<SharedElement> out;
  for (auto& el : shared_elements(net)) {
    if (!el.candidate || u.at(el.index) == 1) out.push_back(std::move(el));
  }
  return out;
}

}  // namespace gridcoord
