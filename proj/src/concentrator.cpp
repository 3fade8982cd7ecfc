#include "matmon/concentrator.hpp"

#include <poll.h>

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <string>
#include <utility>

#include <json.hpp>

#include "matmon/json_io.hpp"
#include "matmon/net.hpp"

namespace matmon {

using nlohmann::json;

EpochLedger::EpochLedger(std::vector<CompartmentId> units, int max_staleness,
                         std::int64_t grace_ms)
    : max_staleness_(max_staleness), grace_ms_(grace_ms) {
  if (max_staleness < 1) fail(Errc::invalid_config, "max staleness must be >= 1");
  if (grace_ms < 0) fail(Errc::invalid_config, "grace window must be >= 0");
  for (CompartmentId u : units) units_[u];
}

wire::AckStatus EpochLedger::observe(CompartmentId unit, Epoch epoch,
                                     std::map<ClassId, int> counts, std::int64_t report_ts_ms,
                                     std::int64_t now_ms) {
  auto slot = units_.find(unit);
  if (slot == units_.end()) {
    fail(Errc::unit_not_in_network, "no unit at compartment " + std::to_string(unit));
  }
  if (epoch <= last_closed_) return wire::AckStatus::late;
  auto [it, inserted] = slot->second.pending.try_emplace(
      epoch, Pending{std::move(counts), report_ts_ms, now_ms});
  (void)it;
  if (!inserted) return wire::AckStatus::duplicate;
  slot->second.max_epoch = std::max(slot->second.max_epoch, epoch);
  max_seen_ = std::max(max_seen_, epoch);
  return wire::AckStatus::accepted;
}

bool EpochLedger::all_units_reached(Epoch n) const {
  for (const auto& [unit, slot] : units_) {
    (void)unit;
    if (slot.max_epoch < n) return false;
  }
  return !units_.empty();
}

std::optional<std::int64_t> EpochLedger::first_activity_at_or_after(Epoch n) const {
  std::optional<std::int64_t> first;
  for (const auto& [unit, slot] : units_) {
    (void)unit;
    for (auto it = slot.pending.lower_bound(n); it != slot.pending.end(); ++it) {
      if (!first || it->second.received_ms < *first) first = it->second.received_ms;
    }
  }
  return first;
}

std::optional<AlignedEpoch> EpochLedger::try_close(std::int64_t now_ms) {
  const Epoch n = next_epoch();
  if (all_units_reached(n)) return close_epoch(n, now_ms);
  auto first = first_activity_at_or_after(n);
  if (first && now_ms - *first >= grace_ms_) return close_epoch(n, now_ms);
  return std::nullopt;
}

std::vector<AlignedEpoch> EpochLedger::drain(Epoch through, std::int64_t now_ms) {
  std::vector<AlignedEpoch> out;
  while (next_epoch() <= through) out.push_back(close_epoch(next_epoch(), now_ms));
  return out;
}

AlignedEpoch EpochLedger::close_epoch(Epoch n, std::int64_t now_ms) {
  AlignedEpoch out;
  out.epoch = n;
  out.close_timestamp_ms = now_ms;
  for (auto& [unit, slot] : units_) {
    AlignedReport r;
    r.unit = unit;
    auto exact = slot.pending.find(n);
    if (exact != slot.pending.end()) {
      r.counts = exact->second.counts;
      r.freshness = {Freshness::State::fresh, 0};
      r.timestamp_ms = exact->second.report_ts_ms;
    } else {
      // Hold the unit's most recent earlier report while it is young enough.
      auto later = slot.pending.lower_bound(n);
      if (later != slot.pending.begin()) {
        auto prev = std::prev(later);
        const int age = static_cast<int>(n - prev->first);
        if (age <= max_staleness_) {
          r.counts = prev->second.counts;
          r.freshness = {Freshness::State::stale, age};
          r.timestamp_ms = prev->second.report_ts_ms;
        } else {
          r.freshness = {Freshness::State::absent, 0};
        }
      } else {
        r.freshness = {Freshness::State::absent, 0};
      }
    }
    out.reports.push_back(std::move(r));
  }
  last_closed_ = n;
  // Entries too old to ever serve as a stale fill again can go.
  const Epoch keep_from = n + 1 - max_staleness_;
  for (auto& [unit, slot] : units_) {
    (void)unit;
    slot.pending.erase(slot.pending.begin(), slot.pending.lower_bound(keep_from));
  }
  return out;
}

SynchroSnapshot compute_snapshot(const AlignedEpoch& aligned, const TmnNetwork& net,
                                 const CompositionRegistry& reg) {
  std::vector<DetectionReport> reports;
  SynchroSnapshot snap;
  snap.epoch = aligned.epoch;
  snap.timestamp_ms = aligned.close_timestamp_ms;

  for (const auto& ar : aligned.reports) {
    DetectionReport r;
    r.unit = ar.unit;
    r.epoch = aligned.epoch;
    r.timestamp_ms = ar.timestamp_ms;
    r.counts = ar.counts;
    Freshness fresh = ar.freshness;
    for (const auto& [cls, count] : ar.counts) {
      (void)count;
      if (!reg.has_class(cls)) {
        std::cerr << "[concentrator] quarantined report from unit " << ar.unit << " at epoch "
                  << aligned.epoch << ": unknown class " << cls << "\n";
        r.counts.clear();
        fresh = {Freshness::State::absent, 0};
        break;
      }
    }
    snap.staleness[ar.unit] = fresh;
    reports.push_back(std::move(r));
  }

  snap.total_mass = total_mass(reports, reg);
  for (const auto& r : reports) {
    snap.per_unit_mass[r.unit] = unit_mass_estimate(r, reg);
    for (MaterialId m : reg.material_ids()) {
      snap.per_unit_material[r.unit][m] = unit_material_mass(r, reg, m);
    }
  }
  Milligrams material_sum = 0;
  for (MaterialId m : reg.material_ids()) {
    snap.total_material[m] = total_material_mass(reports, reg, m);
    snap.material_matrices[m] = assemble_material_matrix(net, reports, reg, m);
    material_sum += snap.total_material[m];
  }

#ifndef NDEBUG
  Milligrams unit_sum = 0;
  for (const auto& [unit, mg] : snap.per_unit_mass) {
    (void)unit;
    unit_sum += mg;
  }
  assert(snap.total_mass == unit_sum);
  assert(snap.total_mass == material_sum);
  for (const auto& [m, matrix] : snap.material_matrices) {
    assert(matrix.sum() == snap.total_material.at(m));
  }
#else
  (void)material_sum;
#endif
  return snap;
}

SnapshotWriter::SnapshotWriter(std::filesystem::path out_dir, const TmnNetwork& net,
                               const CompositionRegistry& reg)
    : out_dir_(std::move(out_dir)) {
  units_.assign(net.mmu_locations().begin(), net.mmu_locations().end());
  materials_ = reg.material_ids();
  ensure_open();
}

bool SnapshotWriter::ensure_open() {
  const bool fresh_files = !header_written_;
  const auto mode = fresh_files ? std::ios::trunc : std::ios::app;
  if (!csv_.is_open()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    csv_.clear();
    csv_.open(csv_path(), mode);
    if (!csv_.is_open()) {
      std::cerr << "[concentrator] cannot open " << csv_path().string() << "; will retry\n";
      return false;
    }
  }
  if (!jsonl_.is_open()) {
    jsonl_.clear();
    jsonl_.open(jsonl_path(), mode);
    if (!jsonl_.is_open()) {
      std::cerr << "[concentrator] cannot open " << jsonl_path().string() << "; will retry\n";
      return false;
    }
  }
  if (!header_written_) {
    csv_ << "epoch,timestamp";
    for (CompartmentId k : units_) csv_ << ",m_hat_" << k;
    for (MaterialId m : materials_) {
      for (CompartmentId k : units_) csv_ << ",F_" << m << "_" << k;
    }
    for (MaterialId m : materials_) csv_ << ",F_" << m << "_total";
    csv_ << ",l_hat";
    for (CompartmentId k : units_) csv_ << ",stale_" << k;
    csv_ << "\n";
    csv_.flush();
    header_written_ = true;
  }
  return true;
}

namespace {

/// ISO-8601 UTC with millisecond precision, e.g. 1970-01-01T00:00:01.500Z.
std::string iso_timestamp(std::int64_t ts_ms) {
  const std::time_t secs = static_cast<std::time_t>(ts_ms / 1000);
  const int millis = static_cast<int>(ts_ms % 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char out[32];
  std::snprintf(out, sizeof out, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, millis);
  return out;
}

int staleness_code(const Freshness& f) {
  switch (f.state) {
    case Freshness::State::fresh:
      return 0;
    case Freshness::State::stale:
      return f.age;
    case Freshness::State::absent:
      return -1;
  }
  return -1;
}

const char* freshness_name(Freshness::State s) {
  switch (s) {
    case Freshness::State::fresh:
      return "fresh";
    case Freshness::State::stale:
      return "stale";
    case Freshness::State::absent:
      return "absent";
  }
  return "absent";
}

json snapshot_to_json(const SynchroSnapshot& snap) {
  json j;
  j["epoch"] = snap.epoch;
  j["ts_ms"] = snap.timestamp_ms;
  json m_hat = json::object();
  for (const auto& [unit, mg] : snap.per_unit_mass) m_hat[std::to_string(unit)] = mg;
  j["m_hat"] = std::move(m_hat);
  json f_hat = json::object();
  for (const auto& [unit, per_mat] : snap.per_unit_material) {
    for (const auto& [mat, mg] : per_mat) f_hat[std::to_string(mat)][std::to_string(unit)] = mg;
  }
  j["F_hat"] = std::move(f_hat);
  json f_total = json::object();
  for (const auto& [mat, mg] : snap.total_material) f_total[std::to_string(mat)] = mg;
  j["F_total"] = std::move(f_total);
  j["l_hat"] = snap.total_mass;
  json matrices = json::object();
  for (const auto& [mat, matrix] : snap.material_matrices) {
    json rows = json::array();
    for (std::size_t r = 0; r < matrix.size(); ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < matrix.size(); ++c) row.push_back(matrix.at(r, c));
      rows.push_back(std::move(row));
    }
    matrices[std::to_string(mat)] = std::move(rows);
  }
  j["matrices"] = std::move(matrices);
  json stale = json::object();
  for (const auto& [unit, f] : snap.staleness) {
    stale[std::to_string(unit)] = json{{"state", freshness_name(f.state)}, {"age", f.age}};
  }
  j["stale"] = std::move(stale);
  return j;
}

}  // namespace

void SnapshotWriter::persist(const SynchroSnapshot& snap) {
  if (!ensure_open()) return;

  csv_ << snap.epoch << "," << iso_timestamp(snap.timestamp_ms);
  for (CompartmentId k : units_) csv_ << "," << snap.per_unit_mass.at(k);
  for (MaterialId m : materials_) {
    for (CompartmentId k : units_) csv_ << "," << snap.per_unit_material.at(k).at(m);
  }
  for (MaterialId m : materials_) csv_ << "," << snap.total_material.at(m);
  csv_ << "," << snap.total_mass;
  for (CompartmentId k : units_) csv_ << "," << staleness_code(snap.staleness.at(k));
  csv_ << "\n";
  csv_.flush();
  if (!csv_) {
    std::cerr << "[concentrator] write to " << csv_path().string() << " failed; will retry\n";
    csv_.close();
  }

  jsonl_ << snapshot_to_json(snap).dump() << "\n";
  jsonl_.flush();
  if (!jsonl_) {
    std::cerr << "[concentrator] write to " << jsonl_path().string() << " failed; will retry\n";
    jsonl_.close();
  }
}

void emit_plot_data(std::span<const SynchroSnapshot> history,
                    const std::filesystem::path& out_dir, const TmnNetwork& net,
                    const CompositionRegistry& reg, std::int64_t epoch_period_ms) {
  if (history.empty()) return;
  const auto plot_dir = out_dir / "plots";
  std::error_code ec;
  std::filesystem::create_directories(plot_dir, ec);
  if (ec) fail(Errc::io_error, "cannot create " + plot_dir.string());

  auto write_series = [&](const std::string& name, auto value_of) {
    std::ofstream out(plot_dir / (name + ".tsv"), std::ios::trunc);
    if (!out) fail(Errc::io_error, "cannot open plot file " + name);
    out << "epoch\ttime_ms\t" << name << "\n";
    for (const auto& snap : history) {
      out << snap.epoch << "\t" << snap.epoch * epoch_period_ms << "\t" << value_of(snap) << "\n";
    }
  };

  for (CompartmentId k : net.mmu_locations()) {
    write_series("m_hat_" + std::to_string(k),
                 [k](const SynchroSnapshot& s) { return s.per_unit_mass.at(k); });
    for (MaterialId m : reg.material_ids()) {
      write_series("F_" + std::to_string(m) + "_" + std::to_string(k),
                   [k, m](const SynchroSnapshot& s) { return s.per_unit_material.at(k).at(m); });
    }
  }
  for (MaterialId m : reg.material_ids()) {
    write_series("F_" + std::to_string(m) + "_total",
                 [m](const SynchroSnapshot& s) { return s.total_material.at(m); });
  }
  write_series("l_hat", [](const SynchroSnapshot& s) { return s.total_mass; });

  const SynchroSnapshot& latest = history.back();
  std::ofstream bars(plot_dir / "latest_bars.tsv", std::ios::trunc);
  if (!bars) fail(Errc::io_error, "cannot open plot file latest_bars.tsv");
  bars << "material_id\tmaterial_name";
  for (CompartmentId k : net.mmu_locations()) bars << "\tunit_" << k;
  bars << "\ttotal\n";
  for (MaterialId m : reg.material_ids()) {
    bars << m << "\t" << reg.material(m).name;
    for (CompartmentId k : net.mmu_locations()) bars << "\t" << latest.per_unit_material.at(k).at(m);
    bars << "\t" << latest.total_material.at(m) << "\n";
  }
}

std::vector<Violation> validate_concentrator_config(const ConcentratorConfig& cfg) {
  std::vector<Violation> out;
  if (cfg.epoch_period_ms < 1) {
    out.push_back({Errc::invalid_config, "epoch period must be >= 1 ms"});
  }
  if (cfg.grace_ms < 0) {
    out.push_back({Errc::invalid_config, "grace window must be >= 0 ms"});
  }
  if (cfg.max_staleness < 1) {
    out.push_back({Errc::invalid_config, "max staleness must be >= 1 epoch"});
  }
  if (cfg.epoch_period_ms >= 1 && cfg.max_staleness >= 1 &&
      cfg.grace_ms >= cfg.epoch_period_ms * cfg.max_staleness) {
    out.push_back({Errc::invalid_config,
                   "grace window must stay below epoch period times max staleness, or held "
                   "reports would expire while an epoch is still open"});
  }
  if (cfg.listen_port < 0 || cfg.listen_port > 65535) {
    out.push_back({Errc::invalid_config, "listen port must lie in 0..65535"});
  }
  return out;
}

namespace {

std::int64_t wall_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct ClientConn {
  net::Socket sock;
  wire::FrameSplitter split;
  CompartmentId unit = -1;  // set once a valid hello arrives
  bool dead = false;
};

}  // namespace

int run_concentrator(const ConcentratorConfig& cfg, const std::atomic<bool>* stop) {
  auto violations = validate_concentrator_config(cfg);
  if (!violations.empty()) {
    for (const auto& v : violations) {
      std::cerr << "[concentrator] " << errc_name(v.code) << ": " << v.detail << "\n";
    }
    return 2;
  }

  SnapshotWriter writer(cfg.out_dir, cfg.net, cfg.reg);
  std::vector<SynchroSnapshot> history;

  // Nothing to listen for without placed units: emit the empty skeleton.
  if (cfg.net.unit_count() == 0) {
    emit_plot_data(history, cfg.out_dir, cfg.net, cfg.reg, cfg.epoch_period_ms);
    return 0;
  }

  net::Listener listener;
  try {
    listener = net::Listener::bind_listen(cfg.listen_host, cfg.listen_port);
  } catch (const Error& e) {
    std::cerr << "[concentrator] " << e.what() << "\n";
    return 1;
  }
  std::cout << "listening on " << cfg.listen_host << ":" << listener.port() << std::endl;
  if (cfg.on_listening) cfg.on_listening(listener.port());

  const std::string our_hash = registry_hash(cfg.reg);
  const std::int64_t origin_ms = wall_ms();
  std::vector<CompartmentId> units(cfg.net.mmu_locations().begin(), cfg.net.mmu_locations().end());
  EpochLedger ledger(units, cfg.max_staleness, cfg.grace_ms);
  std::vector<ClientConn> clients;
  bool any_greeted = false;

  auto persist_ready = [&] {
    while (auto closed = ledger.try_close(wall_ms())) {
      auto snap = compute_snapshot(*closed, cfg.net, cfg.reg);
      writer.persist(snap);
      history.push_back(std::move(snap));
    }
  };

  auto handle_frame = [&](ClientConn& client, const std::string& line) {
    const wire::Message msg = wire::decode(line);
    if (const auto* hello = std::get_if<wire::HelloMessage>(&msg)) {
      if (client.unit != -1) fail(Errc::invalid_message, "second hello on one connection");
      if (!cfg.net.has_unit(hello->unit_id)) {
        fail(Errc::unit_not_in_network,
             "no unit placed at compartment " + std::to_string(hello->unit_id));
      }
      for (const auto& other : clients) {
        if (!other.dead && other.unit == hello->unit_id) {
          fail(Errc::duplicate_unit_report,
               "unit " + std::to_string(hello->unit_id) + " is already connected");
        }
      }
      if (hello->registry_hash != our_hash) {
        fail(Errc::invalid_config, "unit " + std::to_string(hello->unit_id) +
                                       " uses registry " + hello->registry_hash + ", service uses " +
                                       our_hash);
      }
      client.unit = hello->unit_id;
      any_greeted = true;
      wire::HelloMessage reply;
      reply.unit_id = hello->unit_id;
      reply.registry_hash = our_hash;
      reply.epoch_period_ms = cfg.epoch_period_ms;
      reply.session_origin_ms = origin_ms;
      if (!client.sock.send_all(wire::encode(reply))) client.dead = true;
      return;
    }
    if (const auto* report = std::get_if<wire::ReportMessage>(&msg)) {
      if (client.unit == -1) fail(Errc::invalid_message, "report before hello");
      if (report->unit_id != client.unit) {
        fail(Errc::invalid_message, "report claims unit " + std::to_string(report->unit_id) +
                                        " on a connection greeted as " + std::to_string(client.unit));
      }
      const auto status =
          ledger.observe(report->unit_id, report->epoch, report->counts, report->timestamp_ms,
                         wall_ms());
      if (!client.sock.send_all(wire::encode(wire::AckMessage{report->epoch, status}))) {
        client.dead = true;
      }
      return;
    }
    fail(Errc::unknown_type, "unexpected ack from a unit");
  };

  std::vector<pollfd> fds;
  char buf[4096];
  for (;;) {
    if (stop && stop->load()) break;

    fds.clear();
    fds.push_back({listener.fd(), POLLIN, 0});
    for (const auto& c : clients) fds.push_back({c.sock.fd(), POLLIN, 0});
    ::poll(fds.data(), fds.size(), 50);

    if (fds[0].revents & POLLIN) {
      net::Socket conn = listener.accept_conn();
      if (conn.valid()) {
        conn.set_nonblocking(true);
        ClientConn client;
        client.sock = std::move(conn);
        clients.push_back(std::move(client));
      }
    }

    for (std::size_t i = 1; i < fds.size(); ++i) {
      auto& client = clients[i - 1];
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      for (;;) {
        const long n = client.sock.recv_some(buf, sizeof buf);
        if (n == -2) break;
        if (n <= 0) {
          client.dead = true;
          break;
        }
        std::vector<std::string> frames;
        try {
          client.split.feed({buf, static_cast<std::size_t>(n)}, frames);
          for (const auto& line : frames) handle_frame(client, line);
        } catch (const Error& e) {
          std::cerr << "[concentrator] dropping connection"
                    << (client.unit != -1 ? " of unit " + std::to_string(client.unit) : "")
                    << ": " << e.what() << "\n";
          client.dead = true;
          break;
        }
      }
    }

    std::erase_if(clients, [](const ClientConn& c) { return c.dead; });
    persist_ready();
    const bool greeted_client_alive = std::any_of(
        clients.begin(), clients.end(), [](const ClientConn& c) { return c.unit != -1; });
    if (cfg.exit_when_drained && any_greeted && !greeted_client_alive) break;
  }

  for (auto& closed : ledger.drain(ledger.max_seen(), wall_ms())) {
    auto snap = compute_snapshot(closed, cfg.net, cfg.reg);
    writer.persist(snap);
    history.push_back(std::move(snap));
  }
  emit_plot_data(history, cfg.out_dir, cfg.net, cfg.reg, cfg.epoch_period_ms);
  return 0;
}

}  // namespace matmon
