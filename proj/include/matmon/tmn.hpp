#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "matmon/error.hpp"
#include "matmon/units.hpp"

namespace matmon {

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Compartment that stores, transforms, or uses material; a digraph node.
struct NodeCompartment {
  CompartmentId id = 0;
  std::string label;
  std::optional<GeoPoint> location;
};

/// Compartment that moves material from node `from` to node `to`; a digraph arc.
struct ArcCompartment {
  CompartmentId id = 0;
  CompartmentId from = 0;
  CompartmentId to = 0;
  std::string label;
};

/// Unvalidated network description as read from config.
struct NetworkSpec {
  std::vector<NodeCompartment> nodes;
  std::vector<ArcCompartment> arcs;
  std::vector<CompartmentId> mmus;
};

struct Violation {
  Errc code;
  std::string detail;
};

/// Validated material network. Compartment ids are distinct and cover
/// 1..n_c where n_c = node count + arc count. Immutable after construction.
class TmnNetwork {
 public:
  /// The empty network; populated instances come from build_network.
  TmnNetwork() = default;

  const std::vector<NodeCompartment>& nodes() const { return nodes_; }
  const std::vector<ArcCompartment>& arcs() const { return arcs_; }
  const std::set<CompartmentId>& mmu_locations() const { return mmus_; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t arc_count() const { return arcs_.size(); }
  std::size_t compartment_count() const { return nodes_.size() + arcs_.size(); }
  std::size_t unit_count() const { return mmus_.size(); }

  bool has_node(CompartmentId id) const { return node_index_.count(id) != 0; }
  bool has_arc(CompartmentId id) const { return arc_index_.count(id) != 0; }
  bool has_compartment(CompartmentId id) const { return has_node(id) || has_arc(id); }
  bool has_unit(CompartmentId id) const { return mmus_.count(id) != 0; }

  /// Rank of a node id among all node ids in ascending order; the row/column
  /// the node occupies in material matrices.
  std::size_t node_rank(CompartmentId id) const;

  const NodeCompartment& node(CompartmentId id) const;
  const ArcCompartment& arc(CompartmentId id) const;

 private:
  friend TmnNetwork build_network(const NetworkSpec& spec);

  std::vector<NodeCompartment> nodes_;  // ascending id
  std::vector<ArcCompartment> arcs_;    // ascending id
  std::set<CompartmentId> mmus_;
  std::map<CompartmentId, std::size_t> node_index_;
  std::map<CompartmentId, std::size_t> arc_index_;
};

/// All invariant violations in the description; empty means it is valid.
std::vector<Violation> validate_network(const NetworkSpec& spec);

/// Validates and freezes a network; throws the first violation.
TmnNetwork build_network(const NetworkSpec& spec);

/// Node ids plus directed (from, to) pairs, both ordered by compartment id.
struct MassFlowDigraph {
  std::vector<CompartmentId> nodes;
  std::vector<std::pair<CompartmentId, CompartmentId>> edges;
};

MassFlowDigraph mass_flow_digraph(const TmnNetwork& net);

/// Ground-truth stock per compartment at one epoch. In-transit mass is housed
/// per arc; keys match the network's node/arc ids exactly.
struct StockState {
  Epoch epoch = 0;
  std::map<CompartmentId, Milligrams> node_mass;
  std::map<CompartmentId, Milligrams> arc_mass;
};

}  // namespace matmon
