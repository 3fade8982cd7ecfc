#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "matmon/error.hpp"
#include "matmon/json_io.hpp"
#include "matmon/scenario.hpp"
#include "matmon/synchro.hpp"
#include "matmon/tmn.hpp"
#include "matmon/wire.hpp"

namespace testsupport {

using namespace matmon;

/// Error code raised by `fn`, or nullopt when it returns normally.
template <typename Fn>
std::optional<Errc> error_code_of(Fn&& fn) {
  try {
    std::forward<Fn>(fn)();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline bool has_violation(const std::vector<Violation>& vs, Errc code) {
  return std::any_of(vs.begin(), vs.end(), [&](const Violation& v) { return v.code == code; });
}

/// Unique scratch directory, removed when the test scope ends.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<unsigned> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("matmon-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// The shipped two-site round-trip example: one small and one large widget
// start at site 1, another large widget starts at site 2, and the large
// widget from site 1 visits site 2 and returns.
inline constexpr ClassId kSmall = 2;
inline constexpr ClassId kLarge = 3;
inline constexpr MaterialId kRubber = 4;
inline constexpr MaterialId kPlastic = 7;

// Independent bill-of-materials table; tests derive expected masses from
// these four numbers instead of trusting registry arithmetic.
inline constexpr Milligrams kRubberInSmall = 15000;
inline constexpr Milligrams kPlasticInSmall = 5000;
inline constexpr Milligrams kRubberInLarge = 40000;
inline constexpr Milligrams kPlasticInLarge = 40000;

inline NetworkSpec two_site_spec() {
  NetworkSpec spec;
  spec.nodes = {{1, "site-a", {}}, {2, "site-b", {}}};
  spec.arcs = {{3, 1, 2, "haul a to b"}, {4, 2, 1, "haul b to a"}};
  spec.mmus = {1, 2};
  return spec;
}

inline TmnNetwork two_site_network() { return build_network(two_site_spec()); }

inline CompositionRegistry widget_registry() {
  return CompositionRegistry::build(
      {{kRubber, "rubber"}, {kPlastic, "plastic"}},
      {{kSmall, "widget-small", {{kRubber, kRubberInSmall}, {kPlastic, kPlasticInSmall}}},
       {kLarge, "widget-large", {{kRubber, kRubberInLarge}, {kPlastic, kPlasticInLarge}}}});
}

inline constexpr MaterialId kPaper = 9;  // registered but used by no class

inline CompositionRegistry widget_registry_with_paper() {
  return CompositionRegistry::build(
      {{kRubber, "rubber"}, {kPlastic, "plastic"}, {kPaper, "paper"}},
      {{kSmall, "widget-small", {{kRubber, kRubberInSmall}, {kPlastic, kPlasticInSmall}}},
       {kLarge, "widget-large", {{kRubber, kRubberInLarge}, {kPlastic, kPlasticInLarge}}}});
}

/// T = 0.1 h, horizon 70 h, large widget 0 away from 10 h to 30 h and back
/// from 40 h to 60 h.
inline Scenario round_trip_scenario() {
  Scenario sc;
  sc.net = two_site_network();
  sc.reg = widget_registry();
  sc.initial_objects = {{1, {{kSmall, 1}, {kLarge, 1}}}, {2, {{kLarge, 1}}}};
  sc.itinerary = {
      {kLarge, 0, 3, hours_to_microhours(10), hours_to_microhours(30)},
      {kLarge, 0, 4, hours_to_microhours(40), hours_to_microhours(60)},
  };
  sc.sample_time = hours_to_microhours(0.1);
  sc.horizon = hours_to_microhours(70);
  sc.pulse_width = hours_to_microhours(0.05);
  sc.noise.rng_seed = 1;
  return sc;
}

inline std::string source_dir() { return MATMON_SOURCE_DIR; }
inline std::string round_trip_path() { return source_dir() + "/data/paper_fig5.json"; }
inline std::string nine_node_network_path() { return source_dir() + "/data/nine_node_network.json"; }
inline std::string inhalers_registry_path() { return source_dir() + "/data/inhalers_registry.json"; }

inline DetectionReport make_report(CompartmentId unit, Epoch epoch,
                                   std::map<ClassId, int> counts, std::int64_t ts_ms = 0) {
  DetectionReport r;
  r.unit = unit;
  r.epoch = epoch;
  r.counts = std::move(counts);
  r.timestamp_ms = ts_ms;
  return r;
}

/// Encoded hello frame announcing `unit` with the hash of `reg`.
inline std::string hello_frame_bytes(CompartmentId unit, const CompositionRegistry& reg) {
  wire::HelloMessage hello;
  hello.unit_id = unit;
  hello.registry_hash = registry_hash(reg);
  return wire::encode(hello);
}

/// Encoded report frame for `unit` at `epoch`; timestamp is epoch * 10 ms.
inline std::string report_frame_bytes(CompartmentId unit, Epoch epoch,
                                      std::map<ClassId, int> counts) {
  wire::ReportMessage r;
  r.unit_id = unit;
  r.epoch = epoch;
  r.timestamp_ms = epoch * 10;
  r.counts = std::move(counts);
  return wire::encode(r, /*empty_ok=*/true);
}

using Rng = std::mt19937_64;

inline int rand_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline CompositionRegistry random_registry(Rng& rng) {
  const int n_materials = rand_int(rng, 1, 4);
  std::vector<Material> materials;
  for (int i = 1; i <= n_materials; ++i) materials.push_back({i, "mat-" + std::to_string(i)});
  const int n_classes = rand_int(rng, 1, 5);
  std::vector<ObjectClassDef> classes;
  for (int c = 1; c <= n_classes; ++c) {
    ObjectClassDef def;
    def.id = c;
    def.name = "class-" + std::to_string(c);
    const int picks = rand_int(rng, 1, n_materials);
    while (static_cast<int>(def.composition.size()) < picks) {
      def.composition[rand_int(rng, 1, n_materials)] =
          static_cast<Milligrams>(rand_int(rng, 1, 100000));
    }
    classes.push_back(std::move(def));
  }
  return CompositionRegistry::build(std::move(materials), std::move(classes));
}

/// Random connected-enough digraph: node ids 1..N, arc ids N+1..N+A with
/// random distinct endpoints; units on a random nonempty compartment subset.
inline TmnNetwork random_network(Rng& rng) {
  NetworkSpec spec;
  const int n_nodes = rand_int(rng, 2, 6);
  for (int i = 1; i <= n_nodes; ++i) {
    spec.nodes.push_back({i, "node-" + std::to_string(i), {}});
  }
  const int n_arcs = rand_int(rng, 1, 8);
  for (int a = 0; a < n_arcs; ++a) {
    const int from = rand_int(rng, 1, n_nodes);
    int to = rand_int(rng, 1, n_nodes);
    while (to == from) to = rand_int(rng, 1, n_nodes);
    spec.arcs.push_back({n_nodes + 1 + a, from, to, "arc-" + std::to_string(a)});
  }
  const int n_c = n_nodes + n_arcs;
  while (spec.mmus.empty()) {
    for (int id = 1; id <= n_c; ++id) {
      if (rand_int(rng, 0, 2) == 0) spec.mmus.push_back(id);
    }
  }
  return build_network(spec);
}

inline std::map<ClassId, int> random_counts(Rng& rng, const CompositionRegistry& reg) {
  std::map<ClassId, int> counts;
  for (const auto& cls : reg.classes()) {
    if (rand_int(rng, 0, 1) == 0) counts[cls.id] = rand_int(rng, 1, 5);
  }
  return counts;
}

/// Closed random world: random initial stocks plus a leg-consistent itinerary
/// on a 0.5 h event grid (every gap far above T = 0.1 h).
inline Scenario random_closed_scenario(Rng& rng) {
  Scenario sc;
  NetworkSpec spec;
  const int n_nodes = rand_int(rng, 2, 5);
  for (int i = 1; i <= n_nodes; ++i) {
    spec.nodes.push_back({i, "node-" + std::to_string(i), {}});
  }
  const int n_arcs = rand_int(rng, 2, 6);
  for (int a = 0; a < n_arcs; ++a) {
    const int from = rand_int(rng, 1, n_nodes);
    int to = rand_int(rng, 1, n_nodes);
    while (to == from) to = rand_int(rng, 1, n_nodes);
    spec.arcs.push_back({n_nodes + 1 + a, from, to, "arc-" + std::to_string(a)});
  }
  for (int id = 1; id <= n_nodes + n_arcs; ++id) {
    if (rand_int(rng, 0, 1) == 0) spec.mmus.push_back(id);
  }
  if (spec.mmus.empty()) spec.mmus.push_back(1);
  sc.net = build_network(spec);
  sc.reg = random_registry(rng);

  struct Obj {
    ClassId cls;
    int instance;
    CompartmentId at;
    Microhours last_arrive = -1;
  };
  std::vector<Obj> objects;
  std::map<ClassId, int> next_instance;
  const int n_objects = rand_int(rng, 1, 6);
  for (int i = 0; i < n_objects; ++i) {
    const ClassId cls = sc.reg.classes()[static_cast<std::size_t>(
                            rand_int(rng, 0, static_cast<int>(sc.reg.classes().size()) - 1))]
                            .id;
    const CompartmentId node = rand_int(rng, 1, n_nodes);
    sc.initial_objects[node][cls] += 1;
  }
  // Instance numbering walks nodes in ascending id order.
  for (const auto& [node, stock] : sc.initial_objects) {
    for (const auto& [cls, count] : stock) {
      for (int i = 0; i < count; ++i) objects.push_back({cls, next_instance[cls]++, node, -1});
    }
  }

  sc.sample_time = hours_to_microhours(0.1);
  sc.pulse_width = hours_to_microhours(0.05);
  const Microhours slot = hours_to_microhours(0.5);
  Microhours t = 0;
  const int n_legs = rand_int(rng, 0, 8);
  for (int leg = 0; leg < n_legs; ++leg) {
    auto& obj = objects[static_cast<std::size_t>(
        rand_int(rng, 0, static_cast<int>(objects.size()) - 1))];
    std::vector<const ArcCompartment*> outgoing;
    for (const auto& arc : sc.net.arcs()) {
      if (arc.from == obj.at) outgoing.push_back(&arc);
    }
    if (outgoing.empty()) continue;
    const auto* arc = outgoing[static_cast<std::size_t>(
        rand_int(rng, 0, static_cast<int>(outgoing.size()) - 1))];
    const Microhours depart = t + slot;
    const Microhours arrive = depart + slot;
    t = arrive;
    sc.itinerary.push_back({obj.cls, obj.instance, arc->id, depart, arrive});
    obj.at = arc->to;
    obj.last_arrive = arrive;
  }
  sc.horizon = t + hours_to_microhours(2);
  return sc;
}

}  // namespace testsupport
