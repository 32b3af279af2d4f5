#pragma once

#include <cstdint>

#include "ezquant/types.hpp"

namespace ezquant {

/// Outcome of the finite-difference gradient suite.
struct GradcheckResult {
    int trials = 0;
    int failures = 0;       // trials with relative error >= 1e-3
    double max_rel_err = 0.0;
    int resampled = 0;      // scales redrawn for landing near a rounding edge
};

/// Compares the analytic range gradient against central finite differences
/// (h = 1e-6 * s) on random Gaussian channels at random scales. Scales that
/// put any x_i/s within 1e-4 of a half-integer are redrawn: the gradient is
/// a step function across those points, so finite differences are undefined
/// there. A trial passes when the relative error is below 1e-3 (absolute
/// below 1e-9 when the gradient is near zero).
GradcheckResult run_gradcheck(int trials, uint64_t seed, const QuantConfig& cfg,
                              int channel_len = 256);

}  // namespace ezquant
