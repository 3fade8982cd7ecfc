#include "matmon/tmn.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace matmon {

namespace {

std::string id_str(CompartmentId id) { return std::to_string(id); }

}  // namespace

std::vector<Violation> validate_network(const NetworkSpec& spec) {
  std::vector<Violation> out;

  const std::size_t n_c = spec.nodes.size() + spec.arcs.size();
  std::set<CompartmentId> seen;
  std::set<CompartmentId> node_ids;

  auto check_id = [&](CompartmentId id, const char* kind) {
    if (id < 1 || static_cast<std::size_t>(id) > n_c) {
      out.push_back({Errc::invalid_compartment_id,
                     std::string(kind) + " id " + id_str(id) + " outside 1.." + id_str(static_cast<CompartmentId>(n_c))});
    }
    if (!seen.insert(id).second) {
      out.push_back({Errc::duplicate_id, std::string(kind) + " id " + id_str(id) + " already used"});
    }
  };

  for (const auto& n : spec.nodes) {
    check_id(n.id, "node");
    node_ids.insert(n.id);
  }
  for (const auto& a : spec.arcs) {
    check_id(a.id, "arc");
    if (a.from == a.to) {
      out.push_back({Errc::self_loop_arc, "arc " + id_str(a.id) + " loops on node " + id_str(a.from)});
    }
    if (node_ids.count(a.from) == 0) {
      out.push_back({Errc::dangling_arc,
                     "arc " + id_str(a.id) + " source " + id_str(a.from) + " is not a node"});
    }
    if (node_ids.count(a.to) == 0) {
      out.push_back({Errc::dangling_arc,
                     "arc " + id_str(a.id) + " target " + id_str(a.to) + " is not a node"});
    }
  }

  std::set<CompartmentId> mmu_seen;
  for (CompartmentId u : spec.mmus) {
    if (seen.count(u) == 0) {
      out.push_back({Errc::unknown_mmu_location,
                     "unit placed at " + id_str(u) + " which is not a compartment"});
    }
    if (!mmu_seen.insert(u).second) {
      out.push_back({Errc::duplicate_id, "unit location " + id_str(u) + " listed twice"});
    }
  }

  return out;
}

TmnNetwork build_network(const NetworkSpec& spec) {
  auto violations = validate_network(spec);
  if (!violations.empty()) fail(violations.front().code, violations.front().detail);

  TmnNetwork net;
  net.nodes_ = spec.nodes;
  net.arcs_ = spec.arcs;
  std::sort(net.nodes_.begin(), net.nodes_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(net.arcs_.begin(), net.arcs_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < net.nodes_.size(); ++i) net.node_index_[net.nodes_[i].id] = i;
  for (std::size_t i = 0; i < net.arcs_.size(); ++i) net.arc_index_[net.arcs_[i].id] = i;
  net.mmus_.insert(spec.mmus.begin(), spec.mmus.end());
  return net;
}

std::size_t TmnNetwork::node_rank(CompartmentId id) const {
  auto it = node_index_.find(id);
  if (it == node_index_.end()) fail(Errc::unknown_mmu_location, "no node with id " + id_str(id));
  return it->second;
}

const NodeCompartment& TmnNetwork::node(CompartmentId id) const { return nodes_[node_rank(id)]; }

const ArcCompartment& TmnNetwork::arc(CompartmentId id) const {
  auto it = arc_index_.find(id);
  if (it == arc_index_.end()) fail(Errc::unknown_mmu_location, "no arc with id " + id_str(id));
  return arcs_[it->second];
}

MassFlowDigraph mass_flow_digraph(const TmnNetwork& net) {
  MassFlowDigraph g;
  g.nodes.reserve(net.node_count());
  for (const auto& n : net.nodes()) g.nodes.push_back(n.id);
  g.edges.reserve(net.arc_count());
  for (const auto& a : net.arcs()) g.edges.emplace_back(a.from, a.to);
  return g;
}

}  // namespace matmon
