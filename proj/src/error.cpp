#include "matmon/error.hpp"

namespace matmon {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::duplicate_id:
      return "duplicate_id";
    case Errc::dangling_arc:
      return "dangling_arc";
    case Errc::self_loop_arc:
      return "self_loop_arc";
    case Errc::unknown_mmu_location:
      return "unknown_mmu_location";
    case Errc::invalid_compartment_id:
      return "invalid_compartment_id";
    case Errc::invalid_registry:
      return "invalid_registry";
    case Errc::unknown_class:
      return "unknown_class";
    case Errc::duplicate_unit_report:
      return "duplicate_unit_report";
    case Errc::unit_not_in_network:
      return "unit_not_in_network";
    case Errc::epoch_mismatch:
      return "epoch_mismatch";
    case Errc::invalid_scenario:
      return "invalid_scenario";
    case Errc::inconsistent_itinerary:
      return "inconsistent_itinerary";
    case Errc::malformed_frame:
      return "malformed_frame";
    case Errc::unknown_type:
      return "unknown_type";
    case Errc::version_mismatch:
      return "version_mismatch";
    case Errc::invalid_message:
      return "invalid_message";
    case Errc::parse_error:
      return "parse_error";
    case Errc::invalid_config:
      return "invalid_config";
    case Errc::io_error:
      return "io_error";
  }
  return "unknown_error";
}

}  // namespace matmon
