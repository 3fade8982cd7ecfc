#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "matmon/concentrator.hpp"
#include "matmon/scenario.hpp"

namespace matmon::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitEquivalence = 3;

struct ValidateOptions {
  std::string network_path;
  std::string registry_path;
  std::string scenario_path;
};

/// Prints n_v, n_a, n_c, |U| and every violation found in the given files.
int run_validate(const ValidateOptions& opts, std::ostream& out);

struct SimulateOptions {
  std::string scenario_path;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
};

/// Ground truth, snapshots, plot data, and per-unit error series for a
/// scenario, via the in-process pipeline.
int run_simulate(const SimulateOptions& opts, std::ostream& out);

struct GenReplayOptions {
  std::string scenario_path;
  std::filesystem::path out_dir;
  std::optional<CompartmentId> unit;  // all units when unset
  std::optional<std::uint64_t> seed;
};

int run_gen_replay(const GenReplayOptions& opts, std::ostream& out);

struct DemoOptions {
  std::string scenario_path;
  double tick_scale = 2.0;
  std::optional<std::filesystem::path> out_dir;  // kept when set, temp otherwise
  std::optional<std::uint64_t> seed;
  std::string cli_path;  // binary to exec for child processes
};

/// Runs concentrator plus one agent per unit over loopback and diffs the
/// emitted snapshots against the in-process pipeline, timestamps excluded.
int run_demo(const DemoOptions& opts, std::ostream& out);

struct ReportOptions {
  std::filesystem::path in_dir;
};

/// Summarizes a persisted snapshot history and re-checks the aggregation
/// identities over the stored rows.
int run_report(const ReportOptions& opts, std::ostream& out);

/// Shared pipeline: simulate -> detections -> aligned epochs -> snapshots.
/// All units fresh; timestamps are simulated milliseconds.
std::vector<SynchroSnapshot> simulate_snapshots(const Scenario& sc);

int exit_code_for(Errc code);

}  // namespace matmon::cli
