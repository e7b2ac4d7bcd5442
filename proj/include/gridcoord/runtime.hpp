#pragma once

// Simulated coordinator/planner agents exchanging typed messages over an
// in-process bus. The pipeline runs both stages by calling the stage
// engines; every value that crosses an agent boundary is posted to the bus
// and kept in the log.
//
// Log schema (one JSON object per line):
//   seq       position in the log
//   stage     1 or 2
//   round     round index within the stage
//   kind      announce_stage | dual_update | regional_proposal |
//             tpc_decision | bound_report | terminate
//   sender    "TPC" or "TP:<region>"
//   receiver  same, or "*" for a broadcast to every planner
//   payload   kind- and stage-specific object, see payload_to_json
// Per-element arrays follow the element order listed in the announcement
// that opens the stage.

#include <deque>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcoord/canonical.hpp"
#include "gridcoord/schedule.hpp"
#include "gridcoord/stage1.hpp"
#include "gridcoord/stage2.hpp"

namespace gridcoord {

enum class MessageKind { announce_stage, dual_update, regional_proposal, tpc_decision, bound_report, terminate };

inline const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::announce_stage: return "announce_stage";
    case MessageKind::dual_update: return "dual_update";
    case MessageKind::regional_proposal: return "regional_proposal";
    case MessageKind::tpc_decision: return "tpc_decision";
    case MessageKind::bound_report: return "bound_report";
    case MessageKind::terminate: return "terminate";
  }
  return "?";
}

struct StageAnnouncement {
  int stage = 1;
  std::vector<int> build;                 // stage 2 only
  std::vector<std::string> element_ids;  // shared elements (stage 1) or ties (stage 2)
};

/// Multipliers a planner uses in its next Stage I solve.
struct DualUpdateMsg {
  int region = -1;
  long update = 0;    // index of this update for the region
  double step = 0.0;  // alpha / beta used
  DualSet duals;
};

/// A planner's Stage II multipliers and the counterpart beliefs it prices.
struct AppUpdateMsg {
  int region = -1;
  long sigma = 0;
  std::vector<std::vector<std::array<double, 2>>> lambda;        // [s][tie]
  std::vector<std::vector<std::array<double, 2>>> counterpart;  // [s][tie], zero on ties the region does not touch
};

struct AppProgress {
  long sigma = 0;
  double residual = 0.0;
  double objective = 0.0;
};

struct Termination {
  int stage = 1;
  std::string reason;
  long iterations = 0;
  bool converged = false;
};

using Payload = std::variant<StageAnnouncement, RegionalProposal, Stage2Proposal, TpcDecision, BoundReport,
                             DualUpdateMsg, AppUpdateMsg, AppProgress, Termination>;

inline bool payload_matches(MessageKind k, const Payload& p) {
  switch (k) {
    case MessageKind::announce_stage: return std::holds_alternative<StageAnnouncement>(p);
    case MessageKind::dual_update:
      return std::holds_alternative<DualUpdateMsg>(p) || std::holds_alternative<AppUpdateMsg>(p);
    case MessageKind::regional_proposal:
      return std::holds_alternative<RegionalProposal>(p) || std::holds_alternative<Stage2Proposal>(p);
    case MessageKind::tpc_decision: return std::holds_alternative<TpcDecision>(p);
    case MessageKind::bound_report:
      return std::holds_alternative<BoundReport>(p) || std::holds_alternative<AppProgress>(p);
    case MessageKind::terminate: return std::holds_alternative<Termination>(p);
  }
  return false;
}

struct Message {
  long seq = -1;
  int stage = 1;
  long round = 0;
  MessageKind kind = MessageKind::announce_stage;
  std::string sender;
  std::string receiver;
  Payload payload;
};

inline const std::string kCoordinator = "TPC";
inline const std::string kBroadcast = "*";
inline std::string planner_name(const Network& net, int z) { return "TP:" + net.regions.at(z); }

/// Queues per agent plus the full log. A broadcast lands in every queue
/// except the sender's.
class Bus {
 public:
  void attach(const std::string& agent) { queues_[agent]; }

  void send(Message m) {
    if (!payload_matches(m.kind, m.payload)) throw Error(std::string("bus: payload does not match kind ") + to_string(m.kind));
    m.seq = static_cast<long>(log_.size());
    log_.push_back(m);
    if (m.receiver == kBroadcast) {
      for (auto& [who, q] : queues_) {
        if (who != m.sender) q.push_back(m);
      }
    } else {
      auto it = queues_.find(m.receiver);
      if (it == queues_.end()) throw Error("bus: unknown receiver '" + m.receiver + "'");
      it->second.push_back(std::move(m));
    }
  }

  std::vector<Message> drain(const std::string& agent) {
    auto& q = queues_.at(agent);
    std::vector<Message> out(std::make_move_iterator(q.begin()), std::make_move_iterator(q.end()));
    q.clear();
    return out;
  }

  std::size_t pending(const std::string& agent) const { return queues_.at(agent).size(); }
  const std::vector<Message>& log() const { return log_; }

 private:
  std::map<std::string, std::deque<Message>> queues_;
  std::vector<Message> log_;
};

struct PipelineConfig {
  Stage1Config stage1;
  Stage2Config stage2;
};

enum class PipelineStatus { converged, stage1_iteration_limit, stage2_iteration_limit, failed };

inline const char* to_string(PipelineStatus s) {
  switch (s) {
    case PipelineStatus::converged: return "converged";
    case PipelineStatus::stage1_iteration_limit: return "stage1_iteration_limit";
    case PipelineStatus::stage2_iteration_limit: return "stage2_iteration_limit";
    case PipelineStatus::failed: return "failed";
  }
  return "?";
}

struct PipelineResult {
  PipelineStatus status = PipelineStatus::failed;
  std::string error;  // set when status is failed
  Stage1Result stage1;
  std::optional<Stage2Result> stage2;
  std::vector<int> u;
  PlanResult plan;
  std::vector<Message> log;
};

/// Drives Stage I then Stage II one round per step_round call.
class Pipeline {
 public:
  Pipeline(const Network& net, PipelineConfig cfg)
      : net_(net), cfg_(std::move(cfg)), s1_(net_, cfg_.stage1), sched_(cfg_.stage1.schedule, s1_.num_regions()) {
    cfg_.stage2.validate();
    const int R = s1_.num_regions();
    bus_.attach(kCoordinator);
    for (int z = 0; z < R; ++z) {
      bus_.attach(planner_name(net_, z));
      tp_duals_.push_back(s1_.duals(z));
    }
    latest_.resize(R);
  }

  bool done() const { return phase_ == Phase::done; }
  int stage() const { return phase_ == Phase::stage2 ? 2 : 1; }
  const Bus& bus() const { return bus_; }
  const Stage1Engine& stage1_engine() const { return s1_; }

  /// Runs one round of the current stage. Returns false once the pipeline
  /// has finished (including on failure).
  bool step_round() {
    if (phase_ == Phase::done) return false;
    long round = phase_ == Phase::stage1 ? nu_ : (s2_ ? s2_->sigma() : 0);
    try {
      if (phase_ == Phase::stage1) {
        stage1_round();
      } else {
        stage2_round();
      }
    } catch (const Error& e) {
      result_.status = PipelineStatus::failed;
      result_.error = "stage " + std::to_string(stage()) + ", round " + std::to_string(round) + ": " + e.what();
      phase_ = Phase::done;
    }
    return phase_ != Phase::done;
  }

  PipelineResult result() const {
    PipelineResult r = result_;
    r.log = bus_.log();
    return r;
  }

 private:
  enum class Phase { stage1, stage2, done };

  void post(MessageKind k, const std::string& from, const std::string& to, Payload p) {
    bus_.send({-1, stage(), phase_ == Phase::stage1 ? nu_ : (s2_ ? s2_->sigma() : 0), k, from, to, std::move(p)});
  }

  void stage1_round() {
    const int R = s1_.num_regions();
    auto& r = result_.stage1;
    if (nu_ == 0) {
      StageAnnouncement a{1, {}, {}};
      for (const auto& el : s1_.elements()) a.element_ids.push_back(el.id);
      post(MessageKind::announce_stage, kCoordinator, kBroadcast, a);
    }
    std::vector<bool> in = sched_.next();
    if (nu_ == 0) std::fill(in.begin(), in.end(), true);

    for (int z = 0; z < R; ++z) {
      if (!in[z]) continue;
      const std::string me = planner_name(net_, z);
      for (auto& m : bus_.drain(me)) {
        if (auto* d = std::get_if<DualUpdateMsg>(&m.payload)) tp_duals_[z] = d->duals;
      }
      post(MessageKind::regional_proposal, me, kCoordinator, s1_.solve_region(z, tp_duals_[z]));
    }
    for (auto& m : bus_.drain(kCoordinator)) {
      if (auto* p = std::get_if<RegionalProposal>(&m.payload)) latest_[p->region] = std::move(*p);
    }

    tpc_ = s1_.solve_tpc(latest_);
    post(MessageKind::tpc_decision, kCoordinator, kBroadcast, tpc_);
    const BoundReport b = s1_.compute_bounds(latest_, tpc_);
    post(MessageKind::bound_report, kCoordinator, kBroadcast, b);
    for (int z = 0; z < R; ++z) r.trace.push_back(s1_.trace_row(nu_, latest_[z], tpc_));
    const bool agree = s1_.u_consensus(latest_, tpc_);
    if (agree && agree_since_ < 0) agree_since_ = nu_;
    if (!agree) agree_since_ = -1;
    const bool full = s1_.full_consensus(latest_, tpc_);
    for (int z = 0; z < R; ++z) {
      if (!in[z]) continue;
      const double step = s1_.step(z);
      s1_.apply_updates(z, latest_[z], tpc_);
      post(MessageKind::dual_update, kCoordinator, planner_name(net_, z),
           DualUpdateMsg{z, s1_.nu(z) - 1, step, s1_.duals(z)});
    }

    const StopReason why = check_termination(b.lb, b.ub, full, nu_ + 1, cfg_.stage1.epsilon, cfg_.stage1.max_iter);
    if (why == StopReason::none) {
      ++nu_;
      return;
    }
    r.reason = why;
    r.iterations = nu_ + 1;
    r.u_consensus = agree;
    r.full_consensus = full;
    r.u_consensus_round = agree ? agree_since_ + 1 : -1;
    detail::finish_stage1(s1_, r, latest_, tpc_);
    post(MessageKind::terminate, kCoordinator, kBroadcast,
         Termination{1, to_string(why), r.iterations, r.converged()});

    // Publish the build decision and open Stage II on it.
    result_.u = r.u;
    phase_ = Phase::stage2;
    s2_.emplace(net_, r.u, cfg_.stage2);
    StageAnnouncement a{2, r.u, {}};
    for (const auto& el : s2_->ties()) a.element_ids.push_back(el.id);
    post(MessageKind::announce_stage, kCoordinator, kBroadcast, a);
  }

  void stage2_round() {
    const int R = s2_->num_regions();
    std::vector<Stage2Proposal> round;
    for (int z = 0; z < R; ++z) {
      const std::string me = planner_name(net_, z);
      bus_.drain(me);
      post(MessageKind::regional_proposal, me, kCoordinator, s2_->solve_region(z));
    }
    for (auto& m : bus_.drain(kCoordinator)) {
      if (auto* p = std::get_if<Stage2Proposal>(&m.payload)) round.push_back(std::move(*p));
    }
    const long sigma = s2_->sigma();
    const bool conv = s2_->commit(std::move(round));
    const auto& st = s2_->state();
    const auto& ties = s2_->ties();
    for (int z = 0; z < R; ++z) {
      AppUpdateMsg m{z, st.sigma, st.lambda[z], st.belief[z]};
      for (auto& row : m.counterpart) {
        for (auto& v : row) v = {0.0, 0.0};
      }
      for (std::size_t s = 0; s < st.belief[z].size(); ++s) {
        for (std::size_t t = 0; t < ties.size(); ++t) {
          if (!ties[t].touches(z)) continue;
          const int other = ties[t].from_region == z ? ties[t].to_region : ties[t].from_region;
          m.counterpart[s][t] = st.belief[other][s][t];
        }
      }
      bus_.send({-1, 2, sigma, MessageKind::dual_update, kCoordinator, planner_name(net_, z), std::move(m)});
    }
    const auto& res = s2_->result();
    bus_.send({-1, 2, sigma, MessageKind::bound_report, kCoordinator, kBroadcast,
               AppProgress{st.sigma, res.residual, res.plan.objective}});
    if (!conv && st.sigma < cfg_.stage2.max_iter) return;

    bus_.send({-1, 2, sigma, MessageKind::terminate, kCoordinator, kBroadcast,
               Termination{2, conv ? "residual" : "iteration_limit", res.iterations, conv}});
    result_.stage2 = res;
    result_.plan = res.plan;
    if (!result_.stage1.converged()) {
      result_.status = PipelineStatus::stage1_iteration_limit;
    } else {
      result_.status = conv ? PipelineStatus::converged : PipelineStatus::stage2_iteration_limit;
    }
    phase_ = Phase::done;
  }

  const Network& net_;
  PipelineConfig cfg_;
  Stage1Engine s1_;
  Participation sched_;
  std::optional<Stage2Engine> s2_;
  Bus bus_;
  Phase phase_ = Phase::stage1;
  long nu_ = 0;
  long agree_since_ = -1;
  std::vector<DualSet> tp_duals_;
  std::vector<RegionalProposal> latest_;
  TpcDecision tpc_;
  PipelineResult result_;
};

/// Announce, Stage I to termination, publish u, Stage II to termination.
/// A Stage I iteration limit still runs Stage II on the incumbent and is
/// reported in the status.
inline PipelineResult run_pipeline(const Network& net, const PipelineConfig& cfg = {}) {
  Pipeline p(net, cfg);
  while (p.step_round()) {
  }
  return p.result();
}

// ---------------------------------------------------------------------------
// JSON lines export

namespace detail {

inline nlohmann::json named_u(const Network& net, const std::vector<int>& u) {
  nlohmann::json o = nlohmann::json::object();
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (u[k] >= 0) o[net.candidate_lines[k].id] = u[k];
  }
  return o;
}

inline nlohmann::json pairs(const std::vector<std::vector<std::array<double, 2>>>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& row : v) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& p : row) r.push_back({p[0], p[1]});
    a.push_back(r);
  }
  return a;
}

inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

struct PayloadJson {
  const Network& net;

  nlohmann::json operator()(const StageAnnouncement& a) const {
    nlohmann::json j{{"stage", a.stage}, {"elements", a.element_ids}};
    if (a.stage == 2) j["build"] = named_u(net, a.build);
    return j;
  }
  nlohmann::json operator()(const RegionalProposal& p) const {
    return {{"region", net.regions.at(p.region)}, {"u", named_u(net, p.u)},     {"flow", p.flow},
            {"angle", pairs(p.angle)},            {"dispatch", p.dispatch},      {"objective", num(p.objective)},
            {"relaxation_bound", num(p.relaxation_bound)}};
  }
  nlohmann::json operator()(const Stage2Proposal& p) const {
    return {{"region", net.regions.at(p.region)}, {"belief", pairs(p.belief)}};
  }
  nlohmann::json operator()(const TpcDecision& t) const {
    return {{"u", named_u(net, t.copies.u)}, {"flow", t.copies.flow}, {"phi", t.copies.phi},
            {"objective", num(t.objective)}, {"relaxation_bound", num(t.relaxation_bound)}};
  }
  nlohmann::json operator()(const BoundReport& b) const {
    return {{"lb_round", num(b.lb_new)}, {"lb", num(b.lb)},          {"ub", num(b.ub)},
            {"ub_round", num(b.ub_round)}, {"ub_phys", num(b.ub_phys)}, {"ub_split", num(b.ub_split)},
            {"gap", num(b.gap)},           {"incumbent", named_u(net, b.incumbent)}};
  }
  nlohmann::json operator()(const DualUpdateMsg& d) const {
    nlohmann::json pi = nlohmann::json::object();
    for (std::size_t k = 0; k < d.duals.pi.size(); ++k) pi[net.candidate_lines[k].id] = d.duals.pi[k];
    return {{"region", net.regions.at(d.region)}, {"update", d.update}, {"step", d.step},
            {"pi", pi}, {"mu", d.duals.mu}, {"xi", pairs(d.duals.xi)}};
  }
  nlohmann::json operator()(const AppUpdateMsg& m) const {
    return {{"region", net.regions.at(m.region)}, {"sigma", m.sigma}, {"lambda", pairs(m.lambda)},
            {"counterpart", pairs(m.counterpart)}};
  }
  nlohmann::json operator()(const AppProgress& p) const {
    return {{"sigma", p.sigma}, {"max_residual", num(p.residual)}, {"objective", num(p.objective)}};
  }
  nlohmann::json operator()(const Termination& t) const {
    return {{"stage", t.stage}, {"reason", t.reason}, {"iterations", t.iterations}, {"converged", t.converged}};
  }
};

}  // namespace detail

inline nlohmann::json payload_to_json(const Network& net, const Payload& p) {
  return std::visit(detail::PayloadJson{net}, p);
}

inline nlohmann::json to_json(const Network& net, const Message& m) {
  return {{"seq", m.seq},       {"stage", m.stage},         {"round", m.round},
          {"kind", to_string(m.kind)}, {"sender", m.sender}, {"receiver", m.receiver},
          {"payload", payload_to_json(net, m.payload)}};
}

inline void write_jsonl(std::ostream& os, const Network& net, const std::vector<Message>& log) {
  for (const auto& m : log) os << canonical_dump(to_json(net, m)) << '\n';
}

inline nlohmann::json to_json(const Network& net, const PipelineResult& r) {
  nlohmann::json j;
  j["status"] = to_string(r.status);
  if (!r.error.empty()) j["error"] = r.error;
  j["build"] = detail::named_u(net, r.u);
  j["stage1"] = to_json(net, r.stage1);
  if (r.stage2) j["stage2"] = to_json(net, *r.stage2);
  j["plan"] = to_json(net, r.plan);
  j["messages"] = r.log.size();
  return j;
}

}  // namespace gridcoord
