#pragma once

#include <stdexcept>
#include <string>

namespace matmon {

enum class Errc {
  // network construction
  duplicate_id,
  dangling_arc,
  self_loop_arc,
  unknown_mmu_location,
  invalid_compartment_id,
  // registry / estimation
  invalid_registry,
  unknown_class,
  duplicate_unit_report,
  unit_not_in_network,
  epoch_mismatch,
  // scenario
  invalid_scenario,
  inconsistent_itinerary,
  // wire protocol
  malformed_frame,
  unknown_type,
  version_mismatch,
  invalid_message,
  // files and config
  parse_error,
  invalid_config,
  io_error,
};

const char* errc_name(Errc code) noexcept;

/// Exception carrying a machine-checkable error kind next to the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace matmon
