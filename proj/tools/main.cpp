#include <atomic>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "matmon/agent.hpp"
#include "matmon/cli.hpp"
#include "matmon/concentrator.hpp"
#include "matmon/json_io.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

}  // namespace

int main(int argc, char** argv) {
  using namespace matmon;

  std::signal(SIGPIPE, SIG_IGN);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"matmon: wide-area material monitoring toolkit"};
  app.require_subcommand(1);

  cli::ValidateOptions validate_opts;
  auto* validate_cmd = app.add_subcommand("validate", "check network / registry / scenario files");
  validate_cmd->add_option("--network", validate_opts.network_path, "network JSON file");
  validate_cmd->add_option("--registry", validate_opts.registry_path, "composition registry JSON file");
  validate_cmd->add_option("--scenario", validate_opts.scenario_path, "scenario JSON file");

  cli::SimulateOptions simulate_opts;
  auto* simulate_cmd =
      app.add_subcommand("simulate", "run a scenario through the in-process pipeline");
  simulate_cmd->add_option("--scenario", simulate_opts.scenario_path, "scenario JSON file")
      ->required();
  simulate_cmd->add_option("--out", simulate_opts.out_dir, "output directory")->required();
  simulate_cmd->add_option("--seed", simulate_opts.seed, "override the scenario noise seed");

  cli::GenReplayOptions replay_opts;
  auto* replay_cmd =
      app.add_subcommand("gen-replay", "write per-unit replay files for a scenario");
  replay_cmd->add_option("--scenario", replay_opts.scenario_path, "scenario JSON file")->required();
  replay_cmd->add_option("--out", replay_opts.out_dir, "output directory")->required();
  replay_cmd->add_option("--unit", replay_opts.unit, "only this unit (default: all units)");
  replay_cmd->add_option("--seed", replay_opts.seed, "override the scenario noise seed");

  AgentConfig agent_cfg;
  auto* agent_cmd = app.add_subcommand("agent", "stream one unit's reports to the service");
  agent_cmd->add_option("--unit", agent_cfg.unit_id, "unit compartment id")->required();
  agent_cmd->add_option("--scenario", agent_cfg.scenario_path, "derive reports from a scenario");
  agent_cmd->add_option("--replay", agent_cfg.replay_path, "stream reports from a replay file");
  agent_cmd->add_option("--registry", agent_cfg.registry_path,
                        "registry JSON file (required with --replay)");
  agent_cmd->add_option("--host", agent_cfg.connect_host, "service host");
  agent_cmd->add_option("--port", agent_cfg.connect_port, "service port");
  agent_cmd->add_option("--period-ms", agent_cfg.report_period_ms,
                        "wall milliseconds between replay reports");
  agent_cmd->add_option("--tick-scale", agent_cfg.tick_scale,
                        "simulated hours per wall second for scenario sources");
  agent_cmd->add_flag("--single-instance", agent_cfg.single_instance,
                      "clamp every initial stock to one instance");
  agent_cmd->add_option("--seed", agent_cfg.seed_override, "override the scenario noise seed");
  agent_cmd->add_option("--connect-attempts", agent_cfg.max_connect_attempts,
                        "connection attempts before giving up");

  std::string conc_network;
  std::string conc_registry;
  bool serve_forever = false;
  ConcentratorConfig conc_cfg;
  auto* conc_cmd = app.add_subcommand("concentrator", "run the material data concentrator");
  conc_cmd->add_option("--network", conc_network, "network JSON file")->required();
  conc_cmd->add_option("--registry", conc_registry, "registry JSON file")->required();
  conc_cmd->add_option("--host", conc_cfg.listen_host, "listen host");
  conc_cmd->add_option("--port", conc_cfg.listen_port, "listen port (0 picks one)");
  conc_cmd->add_option("--period-ms", conc_cfg.epoch_period_ms, "epoch period in milliseconds");
  conc_cmd->add_option("--grace-ms", conc_cfg.grace_ms, "grace window before closing a gappy epoch");
  conc_cmd->add_option("--max-staleness", conc_cfg.max_staleness,
                       "epochs a held report may cover");
  conc_cmd->add_option("--out", conc_cfg.out_dir, "output directory");
  conc_cmd->add_flag("--serve-forever", serve_forever,
                     "keep serving after every unit disconnects");

  cli::DemoOptions demo_opts;
  demo_opts.cli_path = "/proc/self/exe";
  auto* demo_cmd = app.add_subcommand(
      "demo", "run service plus one agent per unit and check against the in-process pipeline");
  demo_cmd->add_option("--scenario", demo_opts.scenario_path, "scenario JSON file")->required();
  demo_cmd->add_option("--tick-scale", demo_opts.tick_scale,
                       "simulated hours per wall second (default 2.0)");
  demo_cmd->add_option("--out", demo_opts.out_dir, "keep outputs in this directory");
  demo_cmd->add_option("--seed", demo_opts.seed, "override the scenario noise seed");
  demo_cmd->add_option("--cli", demo_opts.cli_path, "binary to run for child processes");

  cli::ReportOptions report_opts;
  auto* report_cmd = app.add_subcommand("report", "summarize and re-check a snapshot history");
  report_cmd->add_option("--in", report_opts.in_dir, "directory holding snapshots.csv/.jsonl")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitValidation;
  }

  try {
    if (*validate_cmd) {
      if (validate_opts.network_path.empty() && validate_opts.registry_path.empty() &&
          validate_opts.scenario_path.empty()) {
        std::cerr << "validate: pass at least one of --network, --registry, --scenario\n";
        return cli::kExitValidation;
      }
      return cli::run_validate(validate_opts, std::cout);
    }
    if (*simulate_cmd) return cli::run_simulate(simulate_opts, std::cout);
    if (*replay_cmd) return cli::run_gen_replay(replay_opts, std::cout);
    if (*agent_cmd) return run_agent(agent_cfg, &g_stop);
    if (*conc_cmd) {
      conc_cfg.net = load_network(conc_network);
      conc_cfg.reg = load_registry(conc_registry);
      conc_cfg.exit_when_drained = !serve_forever;
      return run_concentrator(conc_cfg, &g_stop);
    }
    if (*demo_cmd) return cli::run_demo(demo_opts, std::cout);
    if (*report_cmd) return cli::run_report(report_opts, std::cout);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return cli::exit_code_for(e.code());
  }
  return cli::kExitOk;
}
