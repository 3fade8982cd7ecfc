#pragma once

#include <cstdint>

namespace matmon {

/// All masses are integer milligrams so aggregation identities hold exactly.
using Milligrams = std::int64_t;

/// Simulated time lives on a fixed 1e-6 hour grid; arithmetic on it is exact.
using Microhours = std::int64_t;

/// Sample index n; simulated time of a sample is n * T.
using Epoch = std::int64_t;

using CompartmentId = int;
using ClassId = int;
using MaterialId = int;

Microhours hours_to_microhours(double hours);
double microhours_to_hours(Microhours t);

/// Simulated milliseconds elapsed at time t (1 h = 3'600'000 ms).
std::int64_t microhours_to_ms(Microhours t);

/// Smallest n >= 0 with n * sample_time >= t.
Epoch first_epoch_at_or_after(Microhours t, Microhours sample_time);

}  // namespace matmon
