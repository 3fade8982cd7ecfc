#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "matmon/synchro.hpp"
#include "matmon/tmn.hpp"
#include "matmon/units.hpp"

namespace matmon {

/// One transport leg of one object instance: it leaves the source node of
/// `via_arc` at `depart` and reaches the destination node at `arrive`. The
/// departure and the matching arrival are one event pair by construction.
struct TransportEvent {
  ClassId object_class = 0;
  int instance = 0;  // instance index within the class, in node-id order
  CompartmentId via_arc = 0;
  Microhours depart = 0;
  Microhours arrive = 0;
};

/// Detection corruption applied per object instance per epoch, driven by a
/// seeded generator so runs are reproducible.
struct NoiseModel {
  double miss_probability = 0.0;
  std::map<ClassId, std::map<ClassId, double>> confusion;  // true -> reported -> p
  std::uint64_t rng_seed = 0;

  bool is_identity() const { return miss_probability == 0.0 && confusion.empty(); }
};

/// Ground-truth world: initial stocks, transport itinerary, sampling grid,
/// and the detection noise model.
struct Scenario {
  TmnNetwork net;
  CompositionRegistry reg;
  std::map<CompartmentId, std::map<ClassId, int>> initial_objects;  // node -> class -> count
  std::vector<TransportEvent> itinerary;
  Microhours sample_time = 0;  // T
  Microhours horizon = 0;
  Microhours pulse_width = 0;  // epsilon, must stay below T
  NoiseModel noise;

  /// Samples n = 0 .. floor(horizon / T).
  Epoch epoch_count() const { return horizon / sample_time + 1; }
};

/// All scenario invariant violations; empty means valid.
std::vector<Violation> validate_scenario(const Scenario& sc);

/// Rectangular function: 1 inside |sigma| < 1/2, 1/2 on the boundary, else 0.
double rect(double sigma);

struct ObjectInstance {
  ClassId object_class = 0;
  int instance = 0;
  CompartmentId initial_node = 0;
  Milligrams mass = 0;
};

/// Per-epoch ground truth. `positions[n][i]` is the compartment holding
/// object i at epoch n; total mass over all compartments is epoch-invariant.
struct GroundTruthTrace {
  std::vector<ObjectInstance> objects;
  std::vector<StockState> states;
  std::vector<std::vector<CompartmentId>> positions;
};

/// Runs the impulse-transfer stock recursion. A transfer scheduled at time t*
/// fires at the first sample n with nT >= t*, so the state change is visible
/// from sample n+1 onward; samples at exactly t* still see the old state.
GroundTruthTrace simulate(const Scenario& sc);

/// Per-unit detection streams derived from the trace, passed through the
/// noise model. Identity noise yields the exact class multiset per epoch.
std::map<CompartmentId, std::vector<DetectionReport>> generate_detections(
    const GroundTruthTrace& trace, const Scenario& sc);

}  // namespace matmon
