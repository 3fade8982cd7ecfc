#include "matmon/units.hpp"

#include <cmath>

#include "matmon/error.hpp"

namespace matmon {

Microhours hours_to_microhours(double hours) {
  if (!std::isfinite(hours)) fail(Errc::parse_error, "non-finite time value");
  return static_cast<Microhours>(std::llround(hours * 1e6));
}

double microhours_to_hours(Microhours t) { return static_cast<double>(t) * 1e-6; }

std::int64_t microhours_to_ms(Microhours t) {
  // 1 h = 3'600'000 ms and 1 h = 1'000'000 microhours: ms = t * 3.6 exactly
  // via integer split (t * 18 / 5 never overflows for realistic horizons).
  return t * 18 / 5;
}

Epoch first_epoch_at_or_after(Microhours t, Microhours sample_time) {
  if (t <= 0) return 0;
  return static_cast<Epoch>((t + sample_time - 1) / sample_time);
}

}  // namespace matmon
