#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "matmon/scenario.hpp"
#include "matmon/synchro.hpp"
#include "matmon/tmn.hpp"
#include "matmon/wire.hpp"

namespace matmon {

/// What one unit contributes to a closed epoch: its own report, a held
/// earlier report (stale), or nothing (absent, empty counts).
struct AlignedReport {
  CompartmentId unit = 0;
  std::map<ClassId, int> counts;
  Freshness freshness;
  std::int64_t timestamp_ms = 0;
};

struct AlignedEpoch {
  Epoch epoch = 0;
  std::int64_t close_timestamp_ms = 0;
  std::vector<AlignedReport> reports;  // one per unit, ascending unit id
};

/// Orders incoming unit reports into epochs and closes each epoch exactly
/// once, in order. An epoch closes as soon as every unit has reported at or
/// past it, or when the grace window expires; missing units contribute their
/// most recent report while it is younger than max_staleness epochs, then an
/// empty absent report. Closed epochs are immutable: late arrivals are
/// acknowledged as late and change nothing.
class EpochLedger {
 public:
  EpochLedger(std::vector<CompartmentId> units, int max_staleness, std::int64_t grace_ms);

  wire::AckStatus observe(CompartmentId unit, Epoch epoch, std::map<ClassId, int> counts,
                          std::int64_t report_ts_ms, std::int64_t now_ms);

  /// Closes the next epoch if it is ready at `now_ms`.
  std::optional<AlignedEpoch> try_close(std::int64_t now_ms);

  /// Closes every epoch up to `through` regardless of grace; used once no
  /// more reports can arrive.
  std::vector<AlignedEpoch> drain(Epoch through, std::int64_t now_ms);

  Epoch next_epoch() const { return last_closed_ + 1; }
  Epoch max_seen() const { return max_seen_; }

 private:
  struct Pending {
    std::map<ClassId, int> counts;
    std::int64_t report_ts_ms = 0;
    std::int64_t received_ms = 0;
  };
  struct UnitSlot {
    std::map<Epoch, Pending> pending;  // fresh reports not yet consumed/expired
    Epoch max_epoch = -1;
  };

  AlignedEpoch close_epoch(Epoch n, std::int64_t now_ms);
  bool all_units_reached(Epoch n) const;
  std::optional<std::int64_t> first_activity_at_or_after(Epoch n) const;

  std::map<CompartmentId, UnitSlot> units_;
  int max_staleness_;
  std::int64_t grace_ms_;
  Epoch last_closed_ = -1;
  Epoch max_seen_ = -1;
};

/// Full synchromaterial aggregate for one closed epoch. Reports with classes
/// missing from the registry are quarantined: logged, flagged absent, and
/// excluded from the sums.
SynchroSnapshot compute_snapshot(const AlignedEpoch& aligned, const TmnNetwork& net,
                                 const CompositionRegistry& reg);

/// Appends snapshots to snapshots.csv (flat columns) and snapshots.jsonl
/// (full fidelity including matrices). A failing sink is logged and retried
/// on the next append; the service keeps running.
class SnapshotWriter {
 public:
  SnapshotWriter(std::filesystem::path out_dir, const TmnNetwork& net,
                 const CompositionRegistry& reg);

  void persist(const SynchroSnapshot& snapshot);

  std::filesystem::path csv_path() const { return out_dir_ / "snapshots.csv"; }
  std::filesystem::path jsonl_path() const { return out_dir_ / "snapshots.jsonl"; }

 private:
  bool ensure_open();

  std::filesystem::path out_dir_;
  std::vector<CompartmentId> units_;
  std::vector<MaterialId> materials_;
  std::ofstream csv_;
  std::ofstream jsonl_;
  bool header_written_ = false;
};

/// Writes plot-ready TSV series (time vs each tracked quantity) and
/// latest_bars.tsv with one row per material. No files for empty histories.
void emit_plot_data(std::span<const SynchroSnapshot> history,
                    const std::filesystem::path& out_dir, const TmnNetwork& net,
                    const CompositionRegistry& reg, std::int64_t epoch_period_ms);

struct ConcentratorConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 7337;  // 0 picks an ephemeral port
  TmnNetwork net;
  CompositionRegistry reg;
  std::int64_t epoch_period_ms = 1000;
  std::int64_t grace_ms = 500;
  int max_staleness = 3;
  std::filesystem::path out_dir = "out";
  /// Exit after every connected agent has disconnected (one-shot runs); when
  /// false the service runs until `stop` is raised.
  bool exit_when_drained = true;
  /// Invoked with the bound port once the listener is up.
  std::function<void(int)> on_listening;
};

std::vector<Violation> validate_concentrator_config(const ConcentratorConfig& cfg);

/// Runs the material data concentrator: accepts unit connections, aligns
/// reports into epochs, computes and persists snapshots in epoch order.
/// Returns a process exit code.
int run_concentrator(const ConcentratorConfig& cfg, const std::atomic<bool>* stop = nullptr);

}  // namespace matmon
