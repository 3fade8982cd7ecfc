#include "matmon/synchro.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace matmon {

CompositionRegistry CompositionRegistry::build(std::vector<Material> materials,
                                               std::vector<ObjectClassDef> classes) {
  CompositionRegistry reg;
  reg.materials_ = std::move(materials);
  reg.classes_ = std::move(classes);
  std::sort(reg.materials_.begin(), reg.materials_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(reg.classes_.begin(), reg.classes_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  for (std::size_t i = 0; i < reg.materials_.size(); ++i) {
    const auto& m = reg.materials_[i];
    if (m.id <= 0) fail(Errc::invalid_registry, "material id " + std::to_string(m.id) + " must be positive");
    if (!reg.material_index_.emplace(m.id, i).second) {
      fail(Errc::duplicate_id, "material id " + std::to_string(m.id) + " already used");
    }
  }
  for (std::size_t i = 0; i < reg.classes_.size(); ++i) {
    const auto& c = reg.classes_[i];
    if (c.id <= 0) fail(Errc::invalid_registry, "class id " + std::to_string(c.id) + " must be positive");
    if (!reg.class_index_.emplace(c.id, i).second) {
      fail(Errc::duplicate_id, "class id " + std::to_string(c.id) + " already used");
    }
    if (c.composition.empty()) {
      fail(Errc::invalid_registry, "class " + std::to_string(c.id) + " has an empty composition");
    }
    for (const auto& [mat, mg] : c.composition) {
      if (reg.material_index_.count(mat) == 0) {
        fail(Errc::invalid_registry, "class " + std::to_string(c.id) + " references unknown material " +
                                         std::to_string(mat));
      }
      if (mg <= 0) {
        fail(Errc::invalid_registry, "class " + std::to_string(c.id) + " material " +
                                         std::to_string(mat) + " mass must be positive");
      }
    }
  }
  return reg;
}

const ObjectClassDef& CompositionRegistry::object_class(ClassId id) const {
  auto it = class_index_.find(id);
  if (it == class_index_.end()) fail(Errc::unknown_class, "no class with id " + std::to_string(id));
  return classes_[it->second];
}

const Material& CompositionRegistry::material(MaterialId id) const {
  auto it = material_index_.find(id);
  if (it == material_index_.end()) {
    fail(Errc::invalid_registry, "no material with id " + std::to_string(id));
  }
  return materials_[it->second];
}

Milligrams CompositionRegistry::class_mass(ClassId id) const {
  const auto& c = object_class(id);
  Milligrams total = 0;
  for (const auto& [mat, mg] : c.composition) total += mg;
  return total;
}

Milligrams CompositionRegistry::material_in_class(ClassId cls, MaterialId material) const {
  const auto& c = object_class(cls);
  auto it = c.composition.find(material);
  return it == c.composition.end() ? 0 : it->second;
}

std::vector<MaterialId> CompositionRegistry::material_ids() const {
  std::vector<MaterialId> out;
  out.reserve(materials_.size());
  for (const auto& m : materials_) out.push_back(m.id);
  return out;
}

int detection_count(const DetectionReport& report) {
  int q = 0;
  for (const auto& [cls, count] : report.counts) q += count;
  return q;
}

std::set<MaterialId> detected_materials(const DetectionReport& report,
                                        const CompositionRegistry& reg) {
  std::set<MaterialId> out;
  for (const auto& [cls, count] : report.counts) {
    (void)count;
    for (const auto& [mat, mg] : reg.object_class(cls).composition) {
      (void)mg;
      out.insert(mat);
    }
  }
  return out;
}

Milligrams MassMatrix::sum() const {
  return std::accumulate(cells_.begin(), cells_.end(), Milligrams{0});
}

Milligrams unit_mass_estimate(const DetectionReport& report, const CompositionRegistry& reg) {
  Milligrams total = 0;
  for (const auto& [cls, count] : report.counts) {
    if (count < 0) fail(Errc::invalid_message, "negative count for class " + std::to_string(cls));
    total += reg.class_mass(cls) * count;
  }
  return total;
}

Milligrams unit_material_mass(const DetectionReport& report, const CompositionRegistry& reg,
                              MaterialId material) {
  Milligrams total = 0;
  for (const auto& [cls, count] : report.counts) {
    if (count < 0) fail(Errc::invalid_message, "negative count for class " + std::to_string(cls));
    total += reg.material_in_class(cls, material) * count;
  }
  return total;
}

namespace {

/// Rejects mixed epochs and more than one report per unit.
void check_aligned(std::span<const DetectionReport> reports) {
  std::set<CompartmentId> units;
  for (const auto& r : reports) {
    if (!units.insert(r.unit).second) {
      fail(Errc::duplicate_unit_report, "unit " + std::to_string(r.unit) + " reported twice");
    }
    if (r.epoch != reports.front().epoch) {
      fail(Errc::epoch_mismatch, "reports span epochs " + std::to_string(reports.front().epoch) +
                                     " and " + std::to_string(r.epoch));
    }
  }
}

}  // namespace

Milligrams total_mass(std::span<const DetectionReport> reports, const CompositionRegistry& reg) {
  check_aligned(reports);
  Milligrams total = 0;
  for (const auto& r : reports) total += unit_mass_estimate(r, reg);
  return total;
}

Milligrams total_material_mass(std::span<const DetectionReport> reports,
                               const CompositionRegistry& reg, MaterialId material) {
  check_aligned(reports);
  Milligrams total = 0;
  for (const auto& r : reports) total += unit_material_mass(r, reg, material);
  return total;
}

MassMatrix assemble_material_matrix(const TmnNetwork& net,
                                    std::span<const DetectionReport> reports,
                                    const CompositionRegistry& reg, MaterialId material) {
  check_aligned(reports);
  MassMatrix f(net.node_count());
  for (const auto& r : reports) {
    if (!net.has_unit(r.unit)) {
      fail(Errc::unit_not_in_network, "no unit at compartment " + std::to_string(r.unit));
    }
    const Milligrams mg = unit_material_mass(r, reg, material);
    if (net.has_node(r.unit)) {
      const std::size_t k = net.node_rank(r.unit);
      f.at(k, k) += mg;
    } else {
      const auto& arc = net.arc(r.unit);
      f.at(net.node_rank(arc.from), net.node_rank(arc.to)) += mg;
    }
  }
  return f;
}

Milligrams measurement_error(const StockState& truth, const SynchroSnapshot& snapshot,
                             CompartmentId unit) {
  if (truth.epoch != snapshot.epoch) {
    fail(Errc::epoch_mismatch, "truth epoch " + std::to_string(truth.epoch) +
                                   " vs snapshot epoch " + std::to_string(snapshot.epoch));
  }
  auto est = snapshot.per_unit_mass.find(unit);
  if (est == snapshot.per_unit_mass.end()) {
    fail(Errc::unit_not_in_network, "snapshot has no unit " + std::to_string(unit));
  }
  Milligrams actual = 0;
  if (auto it = truth.node_mass.find(unit); it != truth.node_mass.end()) {
    actual = it->second;
  } else if (auto at = truth.arc_mass.find(unit); at != truth.arc_mass.end()) {
    actual = at->second;
  } else {
    fail(Errc::unit_not_in_network, "truth has no compartment " + std::to_string(unit));
  }
  return actual - est->second;
}

}  // namespace matmon
