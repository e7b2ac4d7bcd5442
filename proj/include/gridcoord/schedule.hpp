#pragma once

// Participation schedule for the agent rounds.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gridcoord/errors.hpp"

namespace gridcoord {

enum class ScheduleMode { synchronous, asynchronous };

inline const char* to_string(ScheduleMode m) { return m == ScheduleMode::synchronous ? "sync" : "async"; }

inline ScheduleMode schedule_mode_from_string(const std::string& s) {
  if (s == "sync" || s == "synchronous") return ScheduleMode::synchronous;
  if (s == "async" || s == "asynchronous") return ScheduleMode::asynchronous;
  throw DomainError("unknown schedule mode '" + s + "'");
}

struct Schedule {
  ScheduleMode mode = ScheduleMode::synchronous;
  double skip_probability = 0.0;
  std::uint64_t seed = 1;
  int staleness = 3;  // max consecutive skips before a region is forced in

  void validate() const {
    if (!(skip_probability >= 0.0 && skip_probability < 1.0)) throw DomainError("skip probability must be in [0,1)");
    if (staleness < 0) throw DomainError("staleness bound must be >= 0");
  }
};

/// Decides, round by round, which regions take part. Deterministic for a
/// given seed; uniform draws use the top 53 bits of mt19937_64 so the
/// sequence does not depend on the standard library's distributions.
class Participation {
 public:
  Participation(const Schedule& sched, int regions) : sched_(sched), rng_(sched.seed), skipped_(regions, 0) {
    sched_.validate();
  }

  std::vector<bool> next() {
    std::vector<bool> in(skipped_.size(), true);
    if (sched_.mode == ScheduleMode::synchronous) return in;
    for (std::size_t z = 0; z < in.size(); ++z) {
      const double draw = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      const bool skip = draw < sched_.skip_probability && skipped_[z] < sched_.staleness;
      in[z] = !skip;
      skipped_[z] = skip ? skipped_[z] + 1 : 0;
    }
    return in;
  }

 private:
  Schedule sched_;
  std::mt19937_64 rng_;
  std::vector<int> skipped_;
};

}  // namespace gridcoord
