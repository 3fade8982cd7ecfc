#include "matmon/agent.hpp"

#include <poll.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "matmon/cli.hpp"
#include "matmon/json_io.hpp"
#include "matmon/net.hpp"
#include "matmon/wire.hpp"

namespace matmon {

namespace {

int parse_int(std::string_view text, const std::string& context) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail(Errc::parse_error, context + ": '" + std::string(text) + "' is not an integer");
  }
  return value;
}

}  // namespace

std::vector<ReplayEntry> load_replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());

  std::vector<ReplayEntry> out;
  std::string line;
  int lineno = 0;
  Epoch prev = -1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream iss(line);
    long long epoch = 0;
    if (!(iss >> epoch)) {
      std::string rest;
      iss.clear();
      if (iss >> rest) fail(Errc::parse_error, where + ": line must start with an epoch");
      continue;  // blank or comment-only line
    }
    if (epoch < 0) fail(Errc::parse_error, where + ": epoch must be >= 0");
    if (epoch <= prev) fail(Errc::parse_error, where + ": epochs must be strictly increasing");
    prev = epoch;

    ReplayEntry entry;
    entry.epoch = epoch;
    std::string token;
    while (iss >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) {
        fail(Errc::parse_error, where + ": expected <class>:<count>, got '" + token + "'");
      }
      const ClassId cls = parse_int(std::string_view(token).substr(0, colon), where);
      const int count = parse_int(std::string_view(token).substr(colon + 1), where);
      if (count < 1) fail(Errc::parse_error, where + ": counts must be >= 1");
      if (!entry.counts.emplace(cls, count).second) {
        fail(Errc::parse_error, where + ": class " + std::to_string(cls) + " listed twice");
      }
    }
    out.push_back(std::move(entry));
  }
  return out;
}

void write_replay(std::ostream& out, std::span<const ReplayEntry> entries) {
  out << "# one line per epoch: <epoch> <class>:<count> ...\n";
  for (const auto& e : entries) {
    out << e.epoch;
    for (const auto& [cls, count] : e.counts) out << " " << cls << ":" << count;
    out << "\n";
  }
}

std::vector<ReplayEntry> scenario_detection_series(const Scenario& sc, CompartmentId unit) {
  if (!sc.net.has_unit(unit)) {
    fail(Errc::unit_not_in_network, "no unit at compartment " + std::to_string(unit));
  }
  const auto trace = simulate(sc);
  auto detections = generate_detections(trace, sc);
  std::vector<ReplayEntry> out;
  for (const auto& r : detections.at(unit)) out.push_back({r.epoch, r.counts});
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

/// Reads whatever is pending on the socket and decodes it; true while the
/// peer is still up.
bool pump_acks(net::Socket& sock, wire::FrameSplitter& split, int timeout_ms,
               std::vector<wire::Message>& out) {
  pollfd p{sock.fd(), POLLIN, 0};
  if (::poll(&p, 1, timeout_ms) <= 0) return true;
  char buf[4096];
  const long n = sock.recv_some(buf, sizeof buf);
  if (n == 0 || n == -1) return false;
  if (n == -2) return true;
  std::vector<std::string> frames;
  split.feed({buf, static_cast<std::size_t>(n)}, frames);
  for (const auto& line : frames) out.push_back(wire::decode(line));
  return true;
}

struct StreamSource {
  std::vector<ReplayEntry> entries;
  std::string registry_hash_hex;
  std::optional<GeoPoint> location;
  std::int64_t pace_ms = 0;
  Microhours sample_time = 0;  // zero for replay sources
};

StreamSource open_source(const AgentConfig& cfg) {
  const bool from_scenario = !cfg.scenario_path.empty();
  const bool from_replay = !cfg.replay_path.empty();
  if (from_scenario == from_replay) {
    fail(Errc::invalid_config, "need exactly one of a scenario or a replay source");
  }

  StreamSource src;
  if (from_scenario) {
    Scenario sc = load_scenario(cfg.scenario_path);
    if (cfg.seed_override) sc.noise.rng_seed = *cfg.seed_override;
    if (cfg.single_instance) {
      for (auto& [node, stock] : sc.initial_objects) {
        (void)node;
        for (auto& [cls, count] : stock) count = std::min(count, 1);
      }
      auto violations = validate_scenario(sc);
      if (!violations.empty()) fail(violations.front().code, violations.front().detail);
    }
    if (!sc.net.has_unit(cfg.unit_id)) {
      fail(Errc::unit_not_in_network, "no unit at compartment " + std::to_string(cfg.unit_id));
    }
    if (sc.net.has_node(cfg.unit_id)) src.location = sc.net.node(cfg.unit_id).location;
    if (!(cfg.tick_scale > 0.0)) fail(Errc::invalid_config, "tick scale must be positive");
    src.entries = scenario_detection_series(sc, cfg.unit_id);
    src.registry_hash_hex = registry_hash(sc.reg);
    src.sample_time = sc.sample_time;
    src.pace_ms = std::llround(microhours_to_hours(sc.sample_time) / cfg.tick_scale * 1000.0);
  } else {
    if (cfg.registry_path.empty()) {
      fail(Errc::invalid_config, "replay sources need the registry for the handshake");
    }
    src.entries = load_replay(cfg.replay_path);
    src.registry_hash_hex = registry_hash(load_registry(cfg.registry_path));
    src.pace_ms = cfg.report_period_ms;
  }
  return src;
}

}  // namespace

int run_agent(const AgentConfig& cfg, const std::atomic<bool>* stop) {
  const std::string tag = "[agent " + std::to_string(cfg.unit_id) + "] ";
  try {
    StreamSource src = open_source(cfg);

    net::Socket sock;
    for (int attempt = 0;; ++attempt) {
      if (stop && stop->load()) return 0;
      sock = net::tcp_connect(cfg.connect_host, cfg.connect_port);
      if (sock.valid()) break;
      if (attempt + 1 >= cfg.max_connect_attempts) {
        fail(Errc::io_error, "cannot connect to " + cfg.connect_host + ":" +
                                 std::to_string(cfg.connect_port) + " after " +
                                 std::to_string(cfg.max_connect_attempts) + " attempts");
      }
      const int backoff_ms = 100 * (1 << std::min(attempt, 4));
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
    }

    wire::HelloMessage hello;
    hello.unit_id = cfg.unit_id;
    hello.location = src.location;
    hello.registry_hash = src.registry_hash_hex;
    if (!sock.send_all(wire::encode(hello))) fail(Errc::io_error, "peer lost during hello");

    wire::FrameSplitter split;
    std::vector<wire::Message> inbox;
    std::optional<wire::HelloMessage> reply;
    const auto hello_deadline = Clock::now() + std::chrono::seconds(5);
    while (!reply) {
      if (Clock::now() > hello_deadline) fail(Errc::io_error, "no hello reply from the service");
      if (!pump_acks(sock, split, 100, inbox)) {
        fail(Errc::io_error, "service closed the connection during the handshake");
      }
      for (auto& msg : inbox) {
        if (auto* h = std::get_if<wire::HelloMessage>(&msg)) {
          reply = *h;
        } else {
          fail(Errc::invalid_message, "expected a hello reply first");
        }
      }
      inbox.clear();
    }
    const std::int64_t origin_ms = reply->session_origin_ms.value_or(0);
    const std::int64_t period_ms = reply->epoch_period_ms.value_or(cfg.report_period_ms);

    const Epoch final_epoch = src.entries.empty() ? -1 : src.entries.back().epoch;
    bool final_acked = src.entries.empty();
    bool peer_up = true;
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < src.entries.size(); ++i) {
      if (stop && stop->load()) break;
      std::this_thread::sleep_until(t0 + std::chrono::milliseconds(src.pace_ms * static_cast<std::int64_t>(i)));
      const auto& e = src.entries[i];
      wire::ReportMessage r;
      r.unit_id = cfg.unit_id;
      r.epoch = e.epoch;
      r.counts = e.counts;
      r.timestamp_ms = src.sample_time > 0 ? microhours_to_ms(e.epoch * src.sample_time)
                                           : origin_ms + e.epoch * period_ms;
      if (!sock.send_all(wire::encode(r, /*empty_ok=*/true))) {
        fail(Errc::io_error, "peer lost at epoch " + std::to_string(e.epoch));
      }
      peer_up = pump_acks(sock, split, 0, inbox);
      for (auto& msg : inbox) {
        if (auto* a = std::get_if<wire::AckMessage>(&msg)) {
          if (a->epoch == final_epoch) final_acked = true;
        }
      }
      inbox.clear();
      if (!peer_up) fail(Errc::io_error, "service closed the connection mid-stream");
    }

    const auto ack_deadline = Clock::now() + std::chrono::seconds(2);
    while (peer_up && !final_acked && Clock::now() < ack_deadline) {
      peer_up = pump_acks(sock, split, 50, inbox);
      for (auto& msg : inbox) {
        if (auto* a = std::get_if<wire::AckMessage>(&msg)) {
          if (a->epoch == final_epoch) final_acked = true;
        }
      }
      inbox.clear();
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << tag << e.what() << "\n";
    return cli::exit_code_for(e.code());
  }
}

}  // namespace matmon
