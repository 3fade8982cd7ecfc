#include "matmon/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <tuple>

namespace matmon {

namespace {

std::string time_str(Microhours t) { return std::to_string(microhours_to_hours(t)) + "h"; }

}  // namespace

std::vector<Violation> validate_scenario(const Scenario& sc) {
  std::vector<Violation> out;

  if (sc.sample_time <= 0) {
    out.push_back({Errc::invalid_scenario, "sample time must be positive"});
  }
  if (sc.horizon <= 0) {
    out.push_back({Errc::invalid_scenario, "horizon must be positive"});
  }
  if (sc.pulse_width <= 0 || sc.pulse_width >= sc.sample_time) {
    out.push_back({Errc::invalid_scenario, "pulse width must lie strictly between 0 and the sample time"});
  }
  if (sc.noise.miss_probability < 0.0 || sc.noise.miss_probability > 1.0) {
    out.push_back({Errc::invalid_scenario, "miss probability must lie in [0, 1]"});
  }
  for (const auto& [cls, row] : sc.noise.confusion) {
    if (!sc.reg.has_class(cls)) {
      out.push_back({Errc::unknown_class, "confusion row for unknown class " + std::to_string(cls)});
    }
    double row_sum = 0.0;
    for (const auto& [reported, p] : row) {
      if (!sc.reg.has_class(reported)) {
        out.push_back({Errc::unknown_class,
                       "confusion target is unknown class " + std::to_string(reported)});
      }
      if (p < 0.0 || p > 1.0) {
        out.push_back({Errc::invalid_scenario, "confusion probability outside [0, 1]"});
      }
      row_sum += p;
    }
    if (row_sum > 1.0 + 1e-12) {
      out.push_back({Errc::invalid_scenario,
                     "confusion row for class " + std::to_string(cls) + " sums past 1"});
    }
  }

  // Initial stocks live on known nodes and known classes, one or more each.
  std::map<ClassId, int> class_totals;
  for (const auto& [node, stock] : sc.initial_objects) {
    if (!sc.net.has_node(node)) {
      out.push_back({Errc::invalid_scenario,
                     "initial stock at " + std::to_string(node) + " which is not a node"});
    }
    for (const auto& [cls, count] : stock) {
      if (!sc.reg.has_class(cls)) {
        out.push_back({Errc::unknown_class, "initial stock of unknown class " + std::to_string(cls)});
      }
      if (count < 1) {
        out.push_back({Errc::invalid_scenario,
                       "initial count for class " + std::to_string(cls) + " must be >= 1"});
      } else {
        class_totals[cls] += count;
      }
    }
  }

  // Per-leg sanity, then per-object chronology and connectivity.
  std::vector<Microhours> event_times;
  std::map<std::pair<ClassId, int>, std::vector<const TransportEvent*>> legs_by_object;
  for (const auto& ev : sc.itinerary) {
    if (!sc.reg.has_class(ev.object_class)) {
      out.push_back({Errc::unknown_class, "transport of unknown class " + std::to_string(ev.object_class)});
      continue;
    }
    if (!sc.net.has_arc(ev.via_arc)) {
      out.push_back({Errc::invalid_scenario,
                     "transport via " + std::to_string(ev.via_arc) + " which is not an arc"});
      continue;
    }
    if (ev.depart < 0 || ev.arrive > sc.horizon) {
      out.push_back({Errc::invalid_scenario, "transport at " + time_str(ev.depart) +
                                                 " lies outside [0, horizon]"});
    }
    if (ev.arrive <= ev.depart) {
      out.push_back({Errc::invalid_scenario, "arrival " + time_str(ev.arrive) +
                                                 " must come after departure " + time_str(ev.depart)});
    }
    auto total = class_totals.find(ev.object_class);
    const int have = total == class_totals.end() ? 0 : total->second;
    if (ev.instance < 0 || ev.instance >= have) {
      out.push_back({Errc::inconsistent_itinerary,
                     "class " + std::to_string(ev.object_class) + " has no instance " +
                         std::to_string(ev.instance)});
      continue;
    }
    event_times.push_back(ev.depart);
    event_times.push_back(ev.arrive);
    legs_by_object[{ev.object_class, ev.instance}].push_back(&ev);
  }

  // Distinct event times must be farther apart than one sample interval, so
  // every event lands on its own sample.
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());
  for (std::size_t i = 1; i < event_times.size(); ++i) {
    if (event_times[i] - event_times[i - 1] <= sc.sample_time) {
      out.push_back({Errc::invalid_scenario,
                     "event times " + time_str(event_times[i - 1]) + " and " +
                         time_str(event_times[i]) + " are not separated by more than the sample time"});
    }
  }

  // Where each instance starts: instances of a class are numbered by walking
  // nodes in ascending id order.
  std::map<std::pair<ClassId, int>, CompartmentId> start_node;
  {
    std::map<ClassId, int> next_instance;
    for (const auto& n : sc.net.nodes()) {
      auto stock = sc.initial_objects.find(n.id);
      if (stock == sc.initial_objects.end()) continue;
      for (const auto& [cls, count] : stock->second) {
        for (int i = 0; i < count; ++i) start_node[{cls, next_instance[cls]++}] = n.id;
      }
    }
  }

  for (auto& [key, legs] : legs_by_object) {
    std::sort(legs.begin(), legs.end(),
              [](const TransportEvent* a, const TransportEvent* b) { return a->depart < b->depart; });
    auto at = start_node.find(key);
    if (at == start_node.end()) continue;  // instance range already reported
    CompartmentId here = at->second;
    Microhours prev_arrive = -1;
    for (const TransportEvent* ev : legs) {
      const auto& arc = sc.net.arc(ev->via_arc);
      if (arc.from != here) {
        out.push_back({Errc::inconsistent_itinerary,
                       "class " + std::to_string(key.first) + " instance " +
                           std::to_string(key.second) + " departs arc " + std::to_string(ev->via_arc) +
                           " from node " + std::to_string(arc.from) + " but sits at node " +
                           std::to_string(here)});
        break;
      }
      if (ev->depart <= prev_arrive) {
        out.push_back({Errc::inconsistent_itinerary,
                       "class " + std::to_string(key.first) + " instance " +
                           std::to_string(key.second) + " departs at " + time_str(ev->depart) +
                           " before arriving at " + time_str(prev_arrive)});
        break;
      }
      here = arc.to;
      prev_arrive = ev->arrive;
    }
  }

  return out;
}

double rect(double sigma) {
  const double a = std::fabs(sigma);
  if (a < 0.5) return 1.0;
  if (a == 0.5) return 0.5;
  return 0.0;
}

namespace {

std::vector<ObjectInstance> enumerate_objects(const Scenario& sc) {
  std::vector<ObjectInstance> out;
  std::map<ClassId, int> next_instance;
  for (const auto& n : sc.net.nodes()) {
    auto stock = sc.initial_objects.find(n.id);
    if (stock == sc.initial_objects.end()) continue;
    for (const auto& [cls, count] : stock->second) {
      for (int i = 0; i < count; ++i) {
        out.push_back({cls, next_instance[cls]++, n.id, sc.reg.class_mass(cls)});
      }
    }
  }
  return out;
}

}  // namespace

GroundTruthTrace simulate(const Scenario& sc) {
  auto violations = validate_scenario(sc);
  if (!violations.empty()) fail(violations.front().code, violations.front().detail);

  GroundTruthTrace trace;
  trace.objects = enumerate_objects(sc);
  const Epoch epochs = sc.epoch_count();
  const std::size_t n_obj = trace.objects.size();

  // A transfer at time t* fires at the first sample n with nT >= t*; the new
  // compartment shows from sample n+1, so a sample taken exactly at t* still
  // sees the old state.
  trace.positions.assign(static_cast<std::size_t>(epochs),
                         std::vector<CompartmentId>(n_obj, 0));
  for (std::size_t i = 0; i < n_obj; ++i) {
    for (Epoch n = 0; n < epochs; ++n) trace.positions[n][i] = trace.objects[i].initial_node;
  }
  for (const auto& ev : sc.itinerary) {
    std::size_t idx = n_obj;
    for (std::size_t i = 0; i < n_obj; ++i) {
      if (trace.objects[i].object_class == ev.object_class &&
          trace.objects[i].instance == ev.instance) {
        idx = i;
        break;
      }
    }
    const Epoch d = first_epoch_at_or_after(ev.depart, sc.sample_time);
    const Epoch a = first_epoch_at_or_after(ev.arrive, sc.sample_time);
    const CompartmentId dest = sc.net.arc(ev.via_arc).to;
    for (Epoch n = d + 1; n < epochs && n <= a; ++n) trace.positions[n][idx] = ev.via_arc;
    for (Epoch n = a + 1; n < epochs; ++n) trace.positions[n][idx] = dest;
  }

  trace.states.reserve(static_cast<std::size_t>(epochs));
  for (Epoch n = 0; n < epochs; ++n) {
    StockState st;
    st.epoch = n;
    for (const auto& node : sc.net.nodes()) st.node_mass[node.id] = 0;
    for (const auto& arc : sc.net.arcs()) st.arc_mass[arc.id] = 0;
    for (std::size_t i = 0; i < n_obj; ++i) {
      const CompartmentId c = trace.positions[n][i];
      if (sc.net.has_node(c)) {
        st.node_mass[c] += trace.objects[i].mass;
      } else {
        st.arc_mass[c] += trace.objects[i].mass;
      }
    }
    trace.states.push_back(std::move(st));
  }
  return trace;
}

namespace {

/// Uniform in [0, 1) from the top 53 bits, identical across platforms.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

std::map<CompartmentId, std::vector<DetectionReport>> generate_detections(
    const GroundTruthTrace& trace, const Scenario& sc) {
  std::map<CompartmentId, std::vector<DetectionReport>> out;
  for (CompartmentId u : sc.net.mmu_locations()) out[u] = {};

  std::mt19937_64 rng(sc.noise.rng_seed);
  const Epoch epochs = static_cast<Epoch>(trace.positions.size());

  for (Epoch n = 0; n < epochs; ++n) {
    std::map<CompartmentId, std::map<ClassId, int>> counts;
    for (std::size_t i = 0; i < trace.objects.size(); ++i) {
      const ClassId true_class = trace.objects[i].object_class;

      // The draw schedule per object and epoch is fixed (one miss draw, plus
      // one confusion draw whenever the class has a confusion row), so the
      // stream never shifts with unit placement or with earlier outcomes.
      const double u_miss = uniform01(rng);
      ClassId reported = true_class;
      auto row = sc.noise.confusion.find(true_class);
      if (row != sc.noise.confusion.end() && !row->second.empty()) {
        const double u_conf = uniform01(rng);
        double cum = 0.0;
        for (const auto& [other, p] : row->second) {
          cum += p;
          if (u_conf < cum) {
            reported = other;
            break;
          }
        }
      }
      if (u_miss < sc.noise.miss_probability) continue;

      const CompartmentId c = trace.positions[n][i];
      if (sc.net.has_unit(c)) counts[c][reported] += 1;
    }

    const std::int64_t ts = microhours_to_ms(n * sc.sample_time);
    for (CompartmentId u : sc.net.mmu_locations()) {
      DetectionReport r;
      r.unit = u;
      r.epoch = n;
      r.timestamp_ms = ts;
      auto it = counts.find(u);
      if (it != counts.end()) r.counts = std::move(it->second);
      out[u].push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace matmon
