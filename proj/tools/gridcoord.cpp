// gridcoord: command-line front end.
//
//   gridcoord <command> <case.json> [options]
//
// Exit status: 0 success, 1 domain/input error, 2 usage error,
// 3 iteration limit reached (partial outputs are still written).

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridcoord/centralized.hpp"
#include "gridcoord/config.hpp"
#include "gridcoord/gametool.hpp"
#include "gridcoord/netmodel.hpp"
#include "gridcoord/report.hpp"
#include "gridcoord/runtime.hpp"
#include "gridcoord/stage1.hpp"
#include "gridcoord/stage2.hpp"

namespace fs = std::filesystem;
using namespace gridcoord;

namespace {

constexpr int kOk = 0, kDomain = 1, kUsage = 2, kNonconvergence = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flag values as given on the command line; unset flags stay empty.
struct Flags {
  std::optional<std::string> config, out, schedule, flow_mode, angle_residual, u, convention;
  std::optional<double> epsilon, eps_app, consensus_tol, consensus_tol_rad, rel_gap, alpha0, nu0, beta, eta, gamma,
      delta_app, skip_prob, bribe;
  std::optional<long long> max_iter, max_iter_stage1, max_iter_stage2, seed, staleness;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    auto put = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    put("out", out);
    put("schedule", schedule);
    put("flow_mode", flow_mode);
    put("angle_residual", angle_residual);
    put("u", u);
    put("convention", convention);
    put("epsilon", epsilon);
    put("eps_app", eps_app);
    put("consensus_tol", consensus_tol);
    put("consensus_tol_rad", consensus_tol_rad);
    put("rel_gap", rel_gap);
    put("alpha0", alpha0);
    put("nu0", nu0);
    put("beta", beta);
    put("eta", eta);
    put("gamma", gamma);
    put("delta_app", delta_app);
    put("skip_prob", skip_prob);
    put("bribe", bribe);
    put("max_iter", max_iter);
    put("max_iter_stage1", max_iter_stage1);
    put("max_iter_stage2", max_iter_stage2);
    put("seed", seed);
    put("staleness", staleness);
    return j;
  }
};

void add_flags(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "JSON file with default settings (flags override it)");
  app.add_option("--out", f.out, "Output directory (default: current directory)");
  auto* s1 = "Stage I";
  auto* s2 = "Stage II";
  app.add_option("--epsilon", f.epsilon, "Relative duality-gap tolerance (default 1e-3)")->group(s1);
  app.add_option("--consensus-tol", f.consensus_tol, "Flow agreement tolerance, MW (default 1e-4)")->group(s1);
  app.add_option("--consensus-tol-rad", f.consensus_tol_rad, "Angle agreement tolerance, rad (default 1e-6)")->group(s1);
  app.add_option("--rel-gap", f.rel_gap, "MILP relative optimality gap (default 1e-6)")->group(s1);
  app.add_option("--alpha0", f.alpha0, "Initial step size (default 1)")->group(s1);
  app.add_option("--nu0", f.nu0, "Step decay scale (default 10)")->group(s1);
  app.add_option("--beta", f.beta, "Step divisor (default: number of regions)")->group(s1);
  app.add_option("--flow-mode", f.flow_mode, "Flow consensus on signed flows or magnitudes")
      ->check(CLI::IsMember({"signed", "magnitude"}))
      ->group(s1);
  app.add_option("--angle-residual", f.angle_residual, "Angle multiplier residual")
      ->check(CLI::IsMember({"raw", "centered"}))
      ->group(s1);
  app.add_option("--schedule", f.schedule, "Planner participation")
      ->check(CLI::IsMember({"sync", "async"}))
      ->group(s1);
  app.add_option("--skip-prob", f.skip_prob, "Per-round skip probability in async mode, in [0,1)")->group(s1);
  app.add_option("--seed", f.seed, "Seed for the async schedule (default 1)")->group(s1);
  app.add_option("--staleness", f.staleness, "Consecutive skips allowed before a planner is forced in (default 3)")
      ->group(s1);
  app.add_option("--max-iter-stage1", f.max_iter_stage1, "Stage I round limit (default 500)")->group(s1);
  app.add_option("--eps-app", f.eps_app, "Residual tolerance (default 1e-4)")->group(s2);
  app.add_option("--eta", f.eta, "Coupling weight (default 1)")->group(s2);
  app.add_option("--gamma", f.gamma, "Proximal weight (default 2)")->group(s2);
  app.add_option("--delta-app", f.delta_app, "Multiplier step (default 1)")->group(s2);
  app.add_option("--max-iter-stage2", f.max_iter_stage2, "Stage II iteration limit (default 5000)")->group(s2);
  app.add_option("--max-iter", f.max_iter, "Iteration limit for both stages");
  app.add_option("--u", f.u, "Build vector for stage2, comma separated in candidate order, e.g. 1,0");
  app.add_option("--convention", f.convention, "Game payoff convention")->check(CLI::IsMember({"plain", "bribe"}));
  app.add_option("--bribe", f.bribe, "Transfer from a lone proposer (implies --convention bribe)");
}

fs::path output_dir(const RunConfig& rc) {
  fs::path dir(rc.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + rc.out_dir + "': " + ec.message());
  return dir;
}

void write_stage1_files(const fs::path& dir, const Stage1Result& r) {
  auto out = open_output((dir / "stage1_trace.csv").string());
  write_stage1_trace(out, r.trace);
}

void write_stage2_files(const fs::path& dir, const Stage2Result& r) {
  auto out = open_output((dir / "stage2_trace.csv").string());
  write_stage2_trace(out, r.trace);
}

nlohmann::json envelope(const RunConfig& rc, nlohmann::json body) {
  nlohmann::json j;
  j["command"] = rc.command;
  j["case"] = rc.case_path;
  j["config"] = to_json(rc);
  j["result"] = std::move(body);
  return j;
}

int cmd_validate(const RunConfig& rc) {
  nlohmann::json doc = read_json_file(rc.case_path, "case");
  Network net = network_from_json(doc);
  check_references(net);
  const auto rep = validate(net);
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& v : rep.violations) std::cerr << "error: " << v << '\n';
  nlohmann::json body{{"valid", rep.ok()}, {"violations", rep.violations}, {"warnings", rep.warnings},
                      {"regions", net.regions.size()},   {"nodes", net.nodes.size()},
                      {"candidates", net.candidate_lines.size()}, {"scenarios", net.scenarios.size()}};
  write_json_file((output_dir(rc) / "result.json").string(), envelope(rc, body));
  std::cout << (rep.ok() ? "valid" : "invalid") << ": " << rc.case_path << '\n';
  return rep.ok() ? kOk : kDomain;
}

int cmd_plan(const RunConfig& rc, bool exhaustive) {
  Network net = load_case(rc.case_path);
  const PlanResult p = exhaustive ? brute_force_plan(net) : solve_centralized(net, rc.algo.stage1.rel_gap);
  write_json_file((output_dir(rc) / "result.json").string(), envelope(rc, to_json(net, p)));
  if (!p.optimal()) {
    std::cerr << "no optimal plan: " << solver::to_string(p.status) << '\n';
    return p.status == solver::Status::iteration_limit ? kNonconvergence : kDomain;
  }
  std::cout << "objective " << format_number(p.objective) << '\n';
  return kOk;
}

int cmd_stage1(const RunConfig& rc) {
  Network net = load_case(rc.case_path);
  const auto r = run_stage1(net, rc.algo.stage1);
  const auto dir = output_dir(rc);
  write_stage1_files(dir, r);
  write_json_file((dir / "result.json").string(), envelope(rc, to_json(net, r)));
  std::cout << "stage1 " << to_string(r.reason) << " after " << r.iterations << " rounds, objective "
            << format_number(r.plan.objective) << '\n';
  if (!r.converged()) {
    std::cerr << "stage1 reached the iteration limit (" << r.iterations << " rounds)\n";
    return kNonconvergence;
  }
  return kOk;
}

int cmd_stage2(const RunConfig& rc) {
  Network net = load_case(rc.case_path);
  std::vector<int> u;
  if (rc.u) {
    u = *rc.u;
  } else if (!net.candidate_lines.empty()) {
    throw UsageError("stage2 needs a build vector: pass --u");
  }
  if (u.size() != net.candidate_lines.size()) {
    throw DomainError("--u has " + std::to_string(u.size()) + " entries, the case has " +
                      std::to_string(net.candidate_lines.size()) + " candidates");
  }
  const auto r = run_stage2(net, u, rc.algo.stage2);
  const auto dir = output_dir(rc);
  write_stage2_files(dir, r);
  write_json_file((dir / "result.json").string(), envelope(rc, to_json(net, r)));
  std::cout << "stage2 " << (r.converged ? "converged" : "iteration_limit") << " after " << r.iterations
            << " iterations, residual " << format_number(r.residual) << '\n';
  if (!r.converged) {
    std::cerr << "stage2 reached the iteration limit (" << r.iterations << " iterations)\n";
    return kNonconvergence;
  }
  return kOk;
}

int cmd_pipeline(const RunConfig& rc) {
  Network net = load_case(rc.case_path);
  const auto r = run_pipeline(net, rc.algo);
  const auto dir = output_dir(rc);
  write_stage1_files(dir, r.stage1);
  if (r.stage2) write_stage2_files(dir, *r.stage2);
  {
    auto out = open_output((dir / "messages.jsonl").string());
    write_jsonl(out, net, r.log);
  }
  write_json_file((dir / "result.json").string(), envelope(rc, to_json(net, r)));
  std::cout << "pipeline " << to_string(r.status) << ", objective " << format_number(r.plan.objective) << '\n';
  switch (r.status) {
    case PipelineStatus::converged: return kOk;
    case PipelineStatus::failed: std::cerr << r.error << '\n'; return kDomain;
    default: std::cerr << "pipeline: " << to_string(r.status) << '\n'; return kNonconvergence;
  }
}

int cmd_game(const RunConfig& rc) {
  Network net = load_case(rc.case_path);
  const auto gm = build_game(net, rc.convention);
  write_json_file((output_dir(rc) / "result.json").string(), envelope(rc, to_json(gm)));
  std::cout << render_text(gm);
  return kOk;
}

int dispatch(const RunConfig& rc) {
  if (rc.command == "validate") return cmd_validate(rc);
  if (rc.command == "centralized") return cmd_plan(rc, false);
  if (rc.command == "bruteforce") return cmd_plan(rc, true);
  if (rc.command == "stage1") return cmd_stage1(rc);
  if (rc.command == "stage2") return cmd_stage2(rc);
  if (rc.command == "pipeline") return cmd_pipeline(rc);
  if (rc.command == "game") return cmd_game(rc);
  throw UsageError("unknown command '" + rc.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage coordinated transmission expansion planning", "gridcoord"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  add_flags(app, flags);
  std::string case_path;
  const std::pair<const char*, const char*> commands[] = {
      {"validate", "Check a case file and report violations and warnings"},
      {"centralized", "Solve the single-planner benchmark MILP"},
      {"bruteforce", "Enumerate every build vector (small cases only)"},
      {"stage1", "Run the Lagrangian build-decision rounds"},
      {"stage2", "Run the dispatch refinement for a fixed build vector (--u)"},
      {"pipeline", "Run both stages through the agent message bus"},
      {"game", "Two-planner build game for a case with one shared candidate"},
  };
  for (const auto& [name, help] : commands) {
    app.add_subcommand(name, help)->add_option("case", case_path, "Case file (JSON)")->required();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  RunConfig rc;
  rc.command = app.get_subcommands().front()->get_name();
  rc.case_path = case_path;
  try {
    if (flags.config) apply_config(rc, read_json_file(*flags.config));
    apply_config(rc, flags.to_json());
    rc.validate();
    return dispatch(rc);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomain;
  }
}
