#include "matmon/cli.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "matmon/agent.hpp"
#include "matmon/json_io.hpp"

namespace matmon::cli {

using nlohmann::json;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::io_error:
    case Errc::parse_error:
      return kExitIo;
    default:
      return kExitValidation;
  }
}

std::vector<SynchroSnapshot> simulate_snapshots(const Scenario& sc) {
  const auto trace = simulate(sc);
  const auto detections = generate_detections(trace, sc);
  std::vector<CompartmentId> units(sc.net.mmu_locations().begin(), sc.net.mmu_locations().end());

  std::vector<SynchroSnapshot> out;
  if (units.empty()) return out;
  EpochLedger ledger(units, /*max_staleness=*/1, /*grace_ms=*/0);
  const Epoch epochs = sc.epoch_count();
  out.reserve(static_cast<std::size_t>(epochs));
  for (Epoch n = 0; n < epochs; ++n) {
    const std::int64_t ts = microhours_to_ms(n * sc.sample_time);
    for (CompartmentId u : units) {
      const auto& r = detections.at(u)[static_cast<std::size_t>(n)];
      ledger.observe(u, n, r.counts, r.timestamp_ms, ts);
    }
    auto closed = ledger.try_close(ts);
    if (!closed) fail(Errc::epoch_mismatch, "epoch " + std::to_string(n) + " failed to close");
    out.push_back(compute_snapshot(*closed, sc.net, sc.reg));
  }
  return out;
}

namespace {

void print_violations(std::ostream& out, const std::vector<Violation>& violations) {
  for (const auto& v : violations) {
    out << "violation: " << errc_name(v.code) << ": " << v.detail << "\n";
  }
}

}  // namespace

int run_validate(const ValidateOptions& opts, std::ostream& out) {
  bool any_violation = false;
  try {
    if (!opts.network_path.empty()) {
      const auto spec = network_spec_from_json(load_json_file(opts.network_path));
      auto violations = validate_network(spec);
      print_violations(out, violations);
      if (violations.empty()) {
        const auto net = build_network(spec);
        out << "network: " << net.node_count() << " nodes, " << net.arc_count() << " arcs, "
            << net.compartment_count() << " compartments, " << net.unit_count() << " units\n";
      } else {
        any_violation = true;
      }
    }
    if (!opts.registry_path.empty()) {
      const auto reg = load_registry(opts.registry_path);
      out << "registry: " << reg.materials().size() << " materials, " << reg.classes().size()
          << " classes, hash " << registry_hash(reg) << "\n";
    }
    if (!opts.scenario_path.empty()) {
      const auto sc = parse_scenario(load_json_file(opts.scenario_path));
      auto violations = validate_scenario(sc);
      print_violations(out, violations);
      if (violations.empty()) {
        std::size_t objects = 0;
        for (const auto& [node, stock] : sc.initial_objects) {
          (void)node;
          for (const auto& [cls, count] : stock) {
            (void)cls;
            objects += static_cast<std::size_t>(count);
          }
        }
        out << "scenario: " << sc.epoch_count() << " epochs, " << objects << " objects, "
            << sc.itinerary.size() << " transport legs, " << sc.net.unit_count() << " units\n";
      } else {
        any_violation = true;
      }
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code_for(e.code());
  }
  return any_violation ? kExitValidation : kExitOk;
}

namespace {

Scenario load_scenario_with_seed(const std::string& path, std::optional<std::uint64_t> seed) {
  Scenario sc = load_scenario(path);
  if (seed) sc.noise.rng_seed = *seed;
  return sc;
}

void write_truth_and_errors(const std::filesystem::path& out_dir, const Scenario& sc,
                            const GroundTruthTrace& trace,
                            const std::vector<SynchroSnapshot>& snapshots) {
  std::ofstream truth(out_dir / "truth.csv", std::ios::trunc);
  if (!truth) fail(Errc::io_error, "cannot open " + (out_dir / "truth.csv").string());
  truth << "epoch";
  for (const auto& n : sc.net.nodes()) truth << ",m_" << n.id;
  for (const auto& a : sc.net.arcs()) truth << ",m_" << a.id;
  truth << ",total\n";
  for (const auto& st : trace.states) {
    Milligrams total = 0;
    truth << st.epoch;
    for (const auto& n : sc.net.nodes()) {
      truth << "," << st.node_mass.at(n.id);
      total += st.node_mass.at(n.id);
    }
    for (const auto& a : sc.net.arcs()) {
      truth << "," << st.arc_mass.at(a.id);
      total += st.arc_mass.at(a.id);
    }
    truth << "," << total << "\n";
  }

  std::ofstream errs(out_dir / "errors.csv", std::ios::trunc);
  if (!errs) fail(Errc::io_error, "cannot open " + (out_dir / "errors.csv").string());
  errs << "epoch";
  for (CompartmentId u : sc.net.mmu_locations()) errs << ",e_" << u;
  errs << "\n";
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    errs << snapshots[i].epoch;
    for (CompartmentId u : sc.net.mmu_locations()) {
      errs << "," << measurement_error(trace.states[i], snapshots[i], u);
    }
    errs << "\n";
  }
}

}  // namespace

int run_simulate(const SimulateOptions& opts, std::ostream& out) {
  try {
    const Scenario sc = load_scenario_with_seed(opts.scenario_path, opts.seed);
    const auto trace = simulate(sc);
    const auto snapshots = simulate_snapshots(sc);

    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) fail(Errc::io_error, "cannot create " + opts.out_dir.string());

    SnapshotWriter writer(opts.out_dir, sc.net, sc.reg);
    for (const auto& snap : snapshots) writer.persist(snap);
    emit_plot_data(snapshots, opts.out_dir, sc.net, sc.reg, microhours_to_ms(sc.sample_time));
    write_truth_and_errors(opts.out_dir, sc, trace, snapshots);

    out << "simulated " << snapshots.size() << " epochs over " << sc.net.unit_count()
        << " units\n";
    if (!snapshots.empty()) {
      out << "final l_hat: " << snapshots.back().total_mass << " mg\n";
    }
    out << "wrote " << writer.csv_path().string() << "\n";
    out << "wrote " << writer.jsonl_path().string() << "\n";
    out << "wrote " << (opts.out_dir / "truth.csv").string() << "\n";
    out << "wrote " << (opts.out_dir / "errors.csv").string() << "\n";
    out << "wrote " << (opts.out_dir / "plots").string() << "/\n";
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code_for(e.code());
  }
}

int run_gen_replay(const GenReplayOptions& opts, std::ostream& out) {
  try {
    const Scenario sc = load_scenario_with_seed(opts.scenario_path, opts.seed);
    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) fail(Errc::io_error, "cannot create " + opts.out_dir.string());

    std::vector<CompartmentId> units;
    if (opts.unit) {
      units.push_back(*opts.unit);
    } else {
      units.assign(sc.net.mmu_locations().begin(), sc.net.mmu_locations().end());
    }
    for (CompartmentId u : units) {
      const auto series = scenario_detection_series(sc, u);
      const auto path = opts.out_dir / ("replay_unit_" + std::to_string(u) + ".txt");
      std::ofstream file(path, std::ios::trunc);
      if (!file) fail(Errc::io_error, "cannot open " + path.string());
      write_replay(file, series);
      out << "wrote " << path.string() << " (" << series.size() << " epochs)\n";
    }

    // Standalone copies so a replay-driven session can be assembled by hand.
    save_json_file(opts.out_dir / "network.json", network_to_json(sc.net));
    save_json_file(opts.out_dir / "registry.json", registry_to_json(sc.reg));
    out << "wrote " << (opts.out_dir / "network.json").string() << "\n";
    out << "wrote " << (opts.out_dir / "registry.json").string() << "\n";
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code_for(e.code());
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream iss(line);
  while (std::getline(iss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

int run_report(const ReportOptions& opts, std::ostream& out) {
  try {
    const auto jsonl_path = opts.in_dir / "snapshots.jsonl";
    const auto csv_path = opts.in_dir / "snapshots.csv";
    const auto jsonl_lines = read_lines(jsonl_path);
    const auto csv_lines = read_lines(csv_path);

    std::vector<std::string> problems;
    Epoch prev_epoch = -1;
    Milligrams final_l_hat = 0;
    std::map<std::string, Milligrams> final_totals;

    for (std::size_t i = 0; i < jsonl_lines.size(); ++i) {
      const json j = json::parse(jsonl_lines[i], nullptr, false);
      if (j.is_discarded()) {
        problems.push_back("jsonl row " + std::to_string(i) + ": invalid JSON");
        continue;
      }
      const Epoch epoch = j.at("epoch").get<Epoch>();
      if (epoch <= prev_epoch) {
        problems.push_back("jsonl row " + std::to_string(i) + ": epoch " + std::to_string(epoch) +
                           " does not increase");
      }
      prev_epoch = epoch;
      const Milligrams l_hat = j.at("l_hat").get<Milligrams>();

      Milligrams unit_sum = 0;
      for (const auto& [unit, mg] : j.at("m_hat").items()) {
        (void)unit;
        unit_sum += mg.get<Milligrams>();
      }
      if (unit_sum != l_hat) {
        problems.push_back("jsonl epoch " + std::to_string(epoch) +
                           ": unit masses sum to " + std::to_string(unit_sum) + ", l_hat is " +
                           std::to_string(l_hat));
      }

      Milligrams material_sum = 0;
      for (const auto& [mat, mg] : j.at("F_total").items()) {
        const Milligrams total = mg.get<Milligrams>();
        material_sum += total;
        Milligrams per_unit_sum = 0;
        if (j.at("F_hat").contains(mat)) {
          for (const auto& [unit, v] : j.at("F_hat").at(mat).items()) {
            (void)unit;
            per_unit_sum += v.get<Milligrams>();
          }
        }
        if (per_unit_sum != total) {
          problems.push_back("jsonl epoch " + std::to_string(epoch) + ": material " + mat +
                             " per-unit masses sum to " + std::to_string(per_unit_sum) +
                             ", total is " + std::to_string(total));
        }
        Milligrams matrix_sum = 0;
        for (const auto& row : j.at("matrices").at(mat)) {
          for (const auto& cell : row) matrix_sum += cell.get<Milligrams>();
        }
        if (matrix_sum != total) {
          problems.push_back("jsonl epoch " + std::to_string(epoch) + ": material " + mat +
                             " matrix sums to " + std::to_string(matrix_sum) + ", total is " +
                             std::to_string(total));
        }
        final_totals[mat] = total;
      }
      if (material_sum != l_hat) {
        problems.push_back("jsonl epoch " + std::to_string(epoch) + ": material totals sum to " +
                           std::to_string(material_sum) + ", l_hat is " + std::to_string(l_hat));
      }
      final_l_hat = l_hat;
    }

    if (csv_lines.empty()) {
      problems.push_back("csv: missing header");
    } else {
      if (csv_lines.size() - 1 != jsonl_lines.size()) {
        problems.push_back("csv has " + std::to_string(csv_lines.size() - 1) + " rows, jsonl has " +
                           std::to_string(jsonl_lines.size()));
      }
      const auto header = split_csv(csv_lines[0]);
      std::vector<std::size_t> m_hat_cols;
      std::size_t l_hat_col = header.size();
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c].rfind("m_hat_", 0) == 0) m_hat_cols.push_back(c);
        if (header[c] == "l_hat") l_hat_col = c;
      }
      if (l_hat_col == header.size()) {
        problems.push_back("csv: no l_hat column");
      } else {
        for (std::size_t i = 1; i < csv_lines.size(); ++i) {
          const auto cells = split_csv(csv_lines[i]);
          if (cells.size() != header.size()) {
            problems.push_back("csv row " + std::to_string(i) + ": " +
                               std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(header.size()));
            continue;
          }
          Milligrams unit_sum = 0;
          for (std::size_t c : m_hat_cols) unit_sum += std::stoll(cells[c]);
          if (unit_sum != std::stoll(cells[l_hat_col])) {
            problems.push_back("csv row " + std::to_string(i) + ": unit masses sum to " +
                               std::to_string(unit_sum) + ", l_hat is " + cells[l_hat_col]);
          }
        }
      }
    }

    out << "rows: " << jsonl_lines.size() << "\n";
    if (prev_epoch >= 0) out << "last epoch: " << prev_epoch << "\n";
    out << "final l_hat: " << final_l_hat << " mg\n";
    for (const auto& [mat, total] : final_totals) {
      out << "final material " << mat << ": " << total << " mg\n";
    }
    if (!problems.empty()) {
      for (const auto& p : problems) out << "problem: " << p << "\n";
      return kExitValidation;
    }
    out << "history is internally consistent\n";
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "snapshot history is malformed: " << e.what() << "\n";
    return kExitValidation;
  }
}

namespace {

struct ChildProcess {
  pid_t pid = -1;
  int stdout_fd = -1;
};

ChildProcess spawn(const std::vector<std::string>& argv, bool capture_stdout) {
  int pipe_fds[2] = {-1, -1};
  if (capture_stdout && ::pipe(pipe_fds) != 0) {
    fail(Errc::io_error, "cannot create a pipe");
  }
  const pid_t pid = ::fork();
  if (pid < 0) fail(Errc::io_error, "cannot fork");
  if (pid == 0) {
    if (capture_stdout) {
      ::dup2(pipe_fds[1], STDOUT_FILENO);
      ::close(pipe_fds[0]);
      ::close(pipe_fds[1]);
    }
    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    ::execv(cargv[0], cargv.data());
    ::_exit(127);
  }
  ChildProcess child;
  child.pid = pid;
  if (capture_stdout) {
    ::close(pipe_fds[1]);
    child.stdout_fd = pipe_fds[0];
  }
  return child;
}

/// Waits with a deadline; kills the child on timeout. Returns the exit code,
/// or -1 when the child died abnormally.
int wait_exit(pid_t pid, std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    int status = 0;
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) {
      if (WIFEXITED(status)) return WEXITSTATUS(status);
      return -1;
    }
    if (r < 0) return -1;
    if (std::chrono::steady_clock::now() > deadline) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      return -1;
    }
    ::usleep(10'000);
  }
}

void kill_children(std::vector<ChildProcess>& children) {
  for (auto& c : children) {
    if (c.pid > 0) {
      ::kill(c.pid, SIGKILL);
      int status = 0;
      ::waitpid(c.pid, &status, 0);
      c.pid = -1;
    }
    if (c.stdout_fd >= 0) {
      ::close(c.stdout_fd);
      c.stdout_fd = -1;
    }
  }
}

/// Scans the child's stdout for "listening on <host>:<port>".
std::optional<int> scrape_port(int fd, const std::string& host,
                               std::chrono::steady_clock::time_point deadline) {
  const std::string prefix = "listening on " + host + ":";
  std::string seen;
  char buf[512];
  while (std::chrono::steady_clock::now() < deadline) {
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n <= 0) return std::nullopt;
    seen.append(buf, static_cast<std::size_t>(n));
    const auto at = seen.find(prefix);
    if (at == std::string::npos) continue;
    const auto end = seen.find('\n', at);
    if (end == std::string::npos) continue;
    try {
      return std::stoi(seen.substr(at + prefix.size(), end - at - prefix.size()));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::string strip_timestamp_column(const std::string& csv_line) {
  auto cells = split_csv(csv_line);
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i == 1) continue;  // the timestamp column
    if (!out.empty()) out.push_back(',');
    out += cells[i];
  }
  return out;
}

/// First diverging epoch between the two snapshot histories, ignoring wall
/// timestamps; nullopt when equivalent.
std::optional<std::string> diff_outputs(const std::filesystem::path& service_dir,
                                        const std::filesystem::path& reference_dir) {
  const auto svc_csv = read_lines(service_dir / "snapshots.csv");
  const auto ref_csv = read_lines(reference_dir / "snapshots.csv");
  const std::size_t rows = std::min(svc_csv.size(), ref_csv.size());
  for (std::size_t i = 0; i < rows; ++i) {
    if (strip_timestamp_column(svc_csv[i]) != strip_timestamp_column(ref_csv[i])) {
      return "csv line " + std::to_string(i + 1) + " differs (epoch " +
             split_csv(svc_csv[i]).front() + " vs " + split_csv(ref_csv[i]).front() + ")";
    }
  }
  if (svc_csv.size() != ref_csv.size()) {
    return "csv row counts differ: service " + std::to_string(svc_csv.size()) + ", reference " +
           std::to_string(ref_csv.size());
  }

  const auto svc_jsonl = read_lines(service_dir / "snapshots.jsonl");
  const auto ref_jsonl = read_lines(reference_dir / "snapshots.jsonl");
  const std::size_t jrows = std::min(svc_jsonl.size(), ref_jsonl.size());
  for (std::size_t i = 0; i < jrows; ++i) {
    json a = json::parse(svc_jsonl[i], nullptr, false);
    json b = json::parse(ref_jsonl[i], nullptr, false);
    if (a.is_discarded() || b.is_discarded()) {
      return "jsonl row " + std::to_string(i + 1) + " is not valid JSON";
    }
    a.erase("ts_ms");
    b.erase("ts_ms");
    if (a != b) {
      return "jsonl row " + std::to_string(i + 1) + " differs (epoch " +
             std::to_string(a.value("epoch", Epoch{-1})) + ")";
    }
  }
  if (svc_jsonl.size() != ref_jsonl.size()) {
    return "jsonl row counts differ: service " + std::to_string(svc_jsonl.size()) +
           ", reference " + std::to_string(ref_jsonl.size());
  }
  return std::nullopt;
}

}  // namespace

int run_demo(const DemoOptions& opts, std::ostream& out) {
  std::vector<ChildProcess> children;
  try {
    const Scenario sc = load_scenario_with_seed(opts.scenario_path, opts.seed);
    if (sc.net.unit_count() == 0) fail(Errc::invalid_config, "scenario places no units");
    if (!(opts.tick_scale > 0.0)) fail(Errc::invalid_config, "tick scale must be positive");

    const std::filesystem::path out_dir =
        opts.out_dir ? *opts.out_dir
                     : std::filesystem::temp_directory_path() /
                           ("matmon-demo-" + std::to_string(::getpid()));
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail(Errc::io_error, "cannot create " + out_dir.string());

    const auto network_path = out_dir / "network.json";
    const auto registry_path = out_dir / "registry.json";
    save_json_file(network_path, network_to_json(sc.net));
    save_json_file(registry_path, registry_to_json(sc.reg));

    const std::int64_t pace_ms = std::max<std::int64_t>(
        1, std::llround(microhours_to_hours(sc.sample_time) / opts.tick_scale * 1000.0));
    const auto service_dir = out_dir / "service";

    // Generous lag tolerance for loopback agents; grace must stay below
    // period * staleness, so it scales with the pace.
    const int staleness = 50;
    const std::int64_t grace_ms = pace_ms * (staleness / 2);
    std::vector<std::string> svc_argv{
        opts.cli_path,     "concentrator",
        "--network",       network_path.string(),
        "--registry",      registry_path.string(),
        "--host",          "127.0.0.1",
        "--port",          "0",
        "--period-ms",     std::to_string(pace_ms),
        "--grace-ms",      std::to_string(grace_ms),
        "--max-staleness", std::to_string(staleness),
        "--out",           service_dir.string()};
    children.push_back(spawn(svc_argv, /*capture_stdout=*/true));

    const auto port_deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
    const auto port = scrape_port(children[0].stdout_fd, "127.0.0.1", port_deadline);
    if (!port) {
      kill_children(children);
      fail(Errc::io_error, "service never announced its port");
    }
    out << "service listening on 127.0.0.1:" << *port << "\n";

    for (CompartmentId u : sc.net.mmu_locations()) {
      std::vector<std::string> agent_argv{opts.cli_path,
                                          "agent",
                                          "--unit",
                                          std::to_string(u),
                                          "--scenario",
                                          opts.scenario_path,
                                          "--host",
                                          "127.0.0.1",
                                          "--port",
                                          std::to_string(*port),
                                          "--tick-scale",
                                          std::to_string(opts.tick_scale)};
      if (opts.seed) {
        agent_argv.push_back("--seed");
        agent_argv.push_back(std::to_string(*opts.seed));
      }
      children.push_back(spawn(agent_argv, /*capture_stdout=*/false));
    }

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
    bool all_ok = true;
    for (std::size_t i = 1; i < children.size(); ++i) {
      const int code = wait_exit(children[i].pid, deadline);
      children[i].pid = -1;
      if (code != 0) {
        all_ok = false;
        std::cerr << "agent exited with code " << code << "\n";
      }
    }
    const int svc_code = wait_exit(children[0].pid, deadline);
    children[0].pid = -1;
    if (children[0].stdout_fd >= 0) {
      ::close(children[0].stdout_fd);
      children[0].stdout_fd = -1;
    }
    if (svc_code != 0) {
      all_ok = false;
      std::cerr << "service exited with code " << svc_code << "\n";
    }
    if (!all_ok) return kExitIo;

    // The reference: the same scenario through the in-process pipeline.
    const auto reference_dir = out_dir / "reference";
    const auto snapshots = simulate_snapshots(sc);
    SnapshotWriter ref_writer(reference_dir, sc.net, sc.reg);
    for (const auto& snap : snapshots) ref_writer.persist(snap);

    const auto divergence = diff_outputs(service_dir, reference_dir);
    if (divergence) {
      out << "outputs diverge: " << *divergence << "\n";
      out << "kept " << out_dir.string() << " for inspection\n";
      return kExitEquivalence;
    }

    out << "demo ok: " << snapshots.size() << " epochs, service and in-process outputs match\n";
    out << "service outputs: " << service_dir.string() << "\n";
    out << "reference outputs: " << reference_dir.string() << "\n";
    if (!opts.out_dir) {
      std::filesystem::remove_all(out_dir, ec);
    }
    return kExitOk;
  } catch (const Error& e) {
    kill_children(children);
    std::cerr << e.what() << "\n";
    return exit_code_for(e.code());
  }
}

}  // namespace matmon::cli
