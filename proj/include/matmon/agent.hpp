#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "matmon/scenario.hpp"
#include "matmon/units.hpp"

namespace matmon {

/// One replayable detection record: epoch index and detected class counts.
struct ReplayEntry {
  Epoch epoch = 0;
  std::map<ClassId, int> counts;

  bool operator==(const ReplayEntry&) const = default;
};

/// Parses a replay file: one line per epoch, `<epoch> <class>:<count> ...`,
/// `#` comments and blank lines skipped. Epochs must be strictly increasing.
std::vector<ReplayEntry> load_replay(const std::filesystem::path& path);

void write_replay(std::ostream& out, std::span<const ReplayEntry> entries);

/// The unit's full detection series for a scenario (what a live detector
/// would produce, one entry per epoch).
std::vector<ReplayEntry> scenario_detection_series(const Scenario& sc, CompartmentId unit);

struct AgentConfig {
  CompartmentId unit_id = 0;
  std::string scenario_path;  // exactly one of scenario_path / replay_path
  std::string replay_path;
  std::string registry_path;  // hash source for replay agents
  std::string connect_host = "127.0.0.1";
  int connect_port = 7337;
  std::int64_t report_period_ms = 1000;  // pacing for replay sources
  double tick_scale = 1.0;               // simulated hours per wall second
  bool single_instance = false;          // clamp to one instance per class
  std::optional<std::uint64_t> seed_override;
  int max_connect_attempts = 5;
};

/// Streams the unit's reports to the concentrator at the configured cadence:
/// hello first, then one report per source entry, acks drained as they come.
/// Exhausting the source is a clean exit; a raised `stop` flushes the
/// current report and exits. Returns a process exit code.
int run_agent(const AgentConfig& cfg, const std::atomic<bool>* stop = nullptr);

}  // namespace matmon
