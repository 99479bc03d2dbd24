#include "swmpc/config.hpp"
#include "swmpc/outputs.hpp"
#include "swmpc/parallel.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace swmpc;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDesign = 3;
constexpr int kExitRefusal = 4;
constexpr int kExitRuntime = 5;

bool parse_strategy(const std::string& s, Strategy& out) {
  if (s == "dswmpc") out = Strategy::dswmpc;
  else if (s == "cswmpc") out = Strategy::cswmpc;
  else if (s == "deswmpc") out = Strategy::deswmpc;
  else return false;
  return true;
}

// The profile trades set-computation accuracy for speed without touching
// the experiment file: strict tightens the fixed-point and invariant-set
// tolerances, loose relaxes them.
void apply_tolerance_profile(ExperimentSpec& spec) {
  const char* env = std::getenv("SWMPC_TOLERANCE_PROFILE");
  if (!env) return;
  const std::string profile(env);
  if (profile == "default" || profile.empty()) return;
  if (profile == "strict") {
    spec.params.set_tol = 1e-9;
    spec.params.mrpi_eps = std::min(spec.params.mrpi_eps, 1e-5);
  } else if (profile == "loose") {
    spec.params.set_tol = 1e-6;
    spec.params.mrpi_eps = std::max(spec.params.mrpi_eps, 1e-3);
  } else {
    std::cerr << "warning: unknown SWMPC_TOLERANCE_PROFILE '" << profile
              << "' ignored (use default, strict, or loose)\n";
  }
}

bool load_spec(const std::string& path, ExperimentSpec& spec) {
  LoadResult res = load_experiment(path);
  if (!res.ok()) {
    std::cerr << "config error in " << path << ":\n";
    for (const auto& e : res.errors) std::cerr << "  " << e << "\n";
    return false;
  }
  spec = std::move(res.spec);
  apply_tolerance_profile(spec);
  return true;
}

std::string failure_cause(const RunResult& run, bool audit_ok) {
  switch (run.outcome) {
    case RunOutcome::ok: return audit_ok ? "ok" : "audit failure";
    case RunOutcome::refused: return "modes not enumerable";
    case RunOutcome::design_failed: return "design failure";
    case RunOutcome::runtime_infeasible: return "runtime infeasibility";
  }
  return "?";
}

int exit_code(const RunResult& run, bool audit_ok) {
  switch (run.outcome) {
    case RunOutcome::ok: return audit_ok ? kExitOk : kExitRuntime;
    case RunOutcome::refused: return kExitRefusal;
    case RunOutcome::design_failed: return kExitDesign;
    case RunOutcome::runtime_infeasible: return kExitRuntime;
  }
  return kExitRuntime;
}

int cmd_run(const std::string& config, const std::string& strategy,
            const std::string& out_dir) {
  Strategy strat;
  if (!parse_strategy(strategy, strat)) {
    std::cerr << "unknown strategy '" << strategy << "'\n";
    return kExitConfig;
  }
  ExperimentSpec spec;
  if (!load_spec(config, spec)) return kExitConfig;

  RunResult run = run_strategy(spec, strat);
  AuditReport audit;
  if (!run.trace.steps.empty()) {
    audit = audit_trace(run, spec);
    write_text_file(out_dir + "/trace.csv", trace_csv(run.trace));
    write_text_file(out_dir + "/sse.json", sse_json(run.sse));
    write_text_file(out_dir + "/audit.json", audit_json(audit));
  }
  write_text_file(out_dir + "/report.json", run_report_json(run, audit));

  const std::string cause = failure_cause(run, audit.ok);
  if (run.outcome == RunOutcome::ok && audit.ok) {
    std::cout << to_string(strat) << " on " << spec.name << ": ok, sse total "
              << run.sse.total << "\n";
  } else {
    std::cerr << to_string(strat) << " on " << spec.name << ": " << cause;
    if (!run.detail.empty()) std::cerr << " (" << run.detail << ")";
    std::cerr << "\n";
  }
  return exit_code(run, audit.ok);
}

int cmd_sets(const std::string& config, const std::string& strategy,
             const std::string& out_dir) {
  Strategy strat;
  if (!parse_strategy(strategy, strat)) {
    std::cerr << "unknown strategy '" << strategy << "'\n";
    return kExitConfig;
  }
  ExperimentSpec spec;
  if (!load_spec(config, spec)) return kExitConfig;

  RunResult design = design_strategy(spec, strat);
  if (design.outcome != RunOutcome::ok) {
    std::cerr << to_string(strat) << " design on " << spec.name << ": "
              << design.detail << "\n";
    return design.outcome == RunOutcome::refused ? kExitRefusal : kExitDesign;
  }
  const auto files = export_sets(out_dir, design);
  bool all_ok = false;
  write_text_file(out_dir + "/certificates.json",
                  certificates_json(design, spec, &all_ok));
  std::cout << "wrote " << files.size() << " set files to " << out_dir
            << (all_ok ? ", certificates ok" : ", CERTIFICATE FAILURES") << "\n";
  return all_ok ? kExitOk : kExitDesign;
}

int cmd_compare(const std::string& config, const std::string& strategies,
                const std::string& out_dir) {
  ExperimentSpec spec;
  if (!load_spec(config, spec)) return kExitConfig;

  std::vector<Strategy> list;
  std::string token;
  std::istringstream ss(strategies);
  while (std::getline(ss, token, ',')) {
    Strategy s;
    if (!parse_strategy(token, s)) {
      std::cerr << "unknown strategy '" << token << "'\n";
      return kExitConfig;
    }
    list.push_back(s);
  }
  if (list.empty()) {
    std::cerr << "no strategies requested\n";
    return kExitConfig;
  }

  std::vector<RunResult> runs;
  for (Strategy s : list) {
    runs.push_back(run_strategy(spec, s));
    const RunResult& r = runs.back();
    if (r.outcome == RunOutcome::ok)
      std::cout << to_string(s) << ": sse total " << r.sse.total << "\n";
    else
      std::cout << to_string(s) << ": " << to_string(r.outcome)
                << (r.detail.empty() ? "" : " (" + r.detail + ")") << "\n";
  }
  write_text_file(out_dir + "/comparison.csv", comparison_csv(runs));
  write_text_file(out_dir + "/comparison.json", comparison_json(runs));
  return kExitOk;
}

int cmd_validate(const std::string& config, const std::string& dump_path) {
  LoadResult res = load_experiment(config);
  if (!res.ok()) {
    std::cerr << "config error in " << config << ":\n";
    for (const auto& e : res.errors) std::cerr << "  " << e << "\n";
    return kExitConfig;
  }
  const auto modes = res.spec.signal.mode_sequence(res.spec.steps);
  if (auto chk = validate_signal(modes, res.spec.signal.graph); !chk.valid) {
    std::cerr << "switching signal invalid: " << chk.reason << " at t=" << chk.index
              << "\n";
    return kExitConfig;
  }
  if (!dump_path.empty()) write_text_file(dump_path, dump_experiment(res.spec));
  std::cout << config << ": ok (" << res.spec.network.num_subsystems()
            << " subsystems, " << res.spec.network.num_modes() << " modes, "
            << res.spec.steps << " steps)\n";
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Switched-network tube MPC workbench"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "thread cap for the set kernels (0 = default)");

  std::string config, out_dir = "out", strategy = "dswmpc";
  std::string strategies = "dswmpc,cswmpc,deswmpc";
  std::string dump_path;

  auto* run = app.add_subcommand("run", "simulate one strategy and write results");
  run->add_option("config", config, "experiment file")->required();
  run->add_option("--strategy", strategy, "dswmpc, cswmpc, or deswmpc");
  run->add_option("--out", out_dir, "output directory");

  auto* sets = app.add_subcommand("sets", "design the controller and export its sets");
  sets->add_option("config", config, "experiment file")->required();
  sets->add_option("--strategy", strategy, "dswmpc, cswmpc, or deswmpc");
  sets->add_option("--out", out_dir, "output directory");

  auto* compare = app.add_subcommand("compare", "run several strategies side by side");
  compare->add_option("config", config, "experiment file")->required();
  compare->add_option("--strategies", strategies, "comma-separated list");
  compare->add_option("--out", out_dir, "output directory");

  auto* validate = app.add_subcommand("validate", "check an experiment file");
  validate->add_option("config", config, "experiment file")->required();
  validate->add_option("--dump", dump_path, "write the canonical form here");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) swmpc::set_max_threads(threads);

  try {
    if (run->parsed()) return cmd_run(config, strategy, out_dir);
    if (sets->parsed()) return cmd_sets(config, strategy, out_dir);
    if (compare->parsed()) return cmd_compare(config, strategies, out_dir);
    if (validate->parsed()) return cmd_validate(config, dump_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDesign;
  }
  return kExitConfig;
}
