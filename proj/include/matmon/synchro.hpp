#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "matmon/tmn.hpp"
#include "matmon/units.hpp"

namespace matmon {

struct Material {
  MaterialId id = 0;
  std::string name;
};

/// One detectable object class and its bill of materials: the mass of each
/// constituent material contained in a single instance.
struct ObjectClassDef {
  ClassId id = 0;
  std::string name;
  std::map<MaterialId, Milligrams> composition;  // material id -> mg per instance
};

/// Per-class constituent-material masses shared by every unit. A class total
/// is the sum of its material masses by construction.
class CompositionRegistry {
 public:
  /// The empty registry; populated instances come from build.
  CompositionRegistry() = default;

  static CompositionRegistry build(std::vector<Material> materials,
                                   std::vector<ObjectClassDef> classes);

  const std::vector<Material>& materials() const { return materials_; }
  const std::vector<ObjectClassDef>& classes() const { return classes_; }

  bool has_class(ClassId id) const { return class_index_.count(id) != 0; }
  bool has_material(MaterialId id) const { return material_index_.count(id) != 0; }

  const ObjectClassDef& object_class(ClassId id) const;  // throws unknown_class
  const Material& material(MaterialId id) const;

  /// Total mass of one instance of the class.
  Milligrams class_mass(ClassId id) const;

  /// Mass of `material` in one instance of `cls`; zero when absent.
  Milligrams material_in_class(ClassId cls, MaterialId material) const;

  /// Ascending material ids.
  std::vector<MaterialId> material_ids() const;

 private:
  std::vector<Material> materials_;      // ascending id
  std::vector<ObjectClassDef> classes_;  // ascending id
  std::map<MaterialId, std::size_t> material_index_;
  std::map<ClassId, std::size_t> class_index_;
};

/// One unit's detections for one epoch: the detected class multiset with
/// multiplicities. Every present count is >= 1; an empty map means nothing
/// was detected.
struct DetectionReport {
  CompartmentId unit = 0;
  Epoch epoch = 0;
  std::map<ClassId, int> counts;
  std::int64_t timestamp_ms = 0;
};

/// Multiset cardinality Q: total detected instances.
int detection_count(const DetectionReport& report);

/// Constituent materials of the detected classes (union over classes).
std::set<MaterialId> detected_materials(const DetectionReport& report,
                                        const CompositionRegistry& reg);

/// Dense node-indexed material matrix; row/column r is the node with rank r
/// (ascending node id). Integer milligrams per cell.
class MassMatrix {
 public:
  MassMatrix() = default;
  explicit MassMatrix(std::size_t n) : n_(n), cells_(n * n, 0) {}

  std::size_t size() const { return n_; }
  Milligrams at(std::size_t row, std::size_t col) const { return cells_[row * n_ + col]; }
  Milligrams& at(std::size_t row, std::size_t col) { return cells_[row * n_ + col]; }

  /// 1^T F 1: sum of every cell.
  Milligrams sum() const;

  bool operator==(const MassMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<Milligrams> cells_;
};

struct Freshness {
  enum class State { fresh, stale, absent };
  State state = State::fresh;
  int age = 0;  // epochs since the unit's last fresh report
};

/// Per-epoch aggregate computed from synchronized unit reports.
struct SynchroSnapshot {
  Epoch epoch = 0;
  std::int64_t timestamp_ms = 0;
  std::map<CompartmentId, Milligrams> per_unit_mass;                        // m_hat_k
  std::map<CompartmentId, std::map<MaterialId, Milligrams>> per_unit_material;  // F_hat^psi_k
  std::map<MaterialId, Milligrams> total_material;                          // F_hat^psi
  Milligrams total_mass = 0;                                                // l_hat
  std::map<MaterialId, MassMatrix> material_matrices;
  std::map<CompartmentId, Freshness> staleness;
};

/// Mass estimate m_hat for one report: sum over detected instances of the
/// instance's total composition mass.
Milligrams unit_mass_estimate(const DetectionReport& report, const CompositionRegistry& reg);

/// Mass of one material detected by one unit (F_hat^psi_k).
Milligrams unit_material_mass(const DetectionReport& report, const CompositionRegistry& reg,
                              MaterialId material);

/// Total mass over an epoch-aligned report set (l_hat). At most one report
/// per unit.
Milligrams total_mass(std::span<const DetectionReport> reports, const CompositionRegistry& reg);

/// Total mass of one material over an epoch-aligned report set (F_hat^psi).
Milligrams total_material_mass(std::span<const DetectionReport> reports,
                               const CompositionRegistry& reg, MaterialId material);

/// Distribution matrix of one material: diagonal entry (r, r) for a reporting
/// node unit of rank r, entry (i, j) for a reporting arc unit on i -> j, zero
/// elsewhere. Reports must come from units placed in the network.
MassMatrix assemble_material_matrix(const TmnNetwork& net,
                                    std::span<const DetectionReport> reports,
                                    const CompositionRegistry& reg, MaterialId material);

/// Signed estimation error e_k = m_k - m_hat_k for a node unit.
Milligrams measurement_error(const StockState& truth, const SynchroSnapshot& snapshot,
                             CompartmentId unit);

}  // namespace matmon
