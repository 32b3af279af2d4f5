#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ezquant/types.hpp"

namespace ezquant {

/// First/second moment state for one scalar Adam parameter.
struct AdamState {
    double m = 0.0;
    double v = 0.0;
    int64_t t = 0;  // completed steps, drives bias correction
};

/// One Adam update of a scalar. Increments `st.t`, applies bias correction,
/// and returns the updated value clamped below at 1e-12 to keep it positive.
double adam_step(AdamState& st, double scale, double grad, const QuantConfig& cfg);

/// Squared reconstruction error of one channel at scale `s`:
/// sum_i (s*q_i - x_i)^2 with q_i the rounded, clamped level of x_i/s.
/// Entries whose index appears in `mask` (sorted ascending) are skipped.
/// Double precision throughout; the summation order is fixed (ascending i),
/// so results are independent of thread count.
double channel_error(std::span<const float> x, std::span<const uint32_t> mask,
                     double s, const QuantConfig& cfg);

/// Analytic gradient d(error)/d(scale) = 2 * sum_i (s*q_i - x_i) * q_i over
/// non-masked entries. q_i is the clamped level; at clipped elements that is
/// exactly dQ/ds since Q = s*l there. Rejects s <= 0.
double range_gradient(std::span<const float> x, std::span<const uint32_t> mask,
                      double s, const QuantConfig& cfg);

/// Error and gradient from a single pass over the channel.
struct ChannelEval {
    double error = 0.0;
    double gradient = 0.0;
};

ChannelEval channel_eval(std::span<const float> x, std::span<const uint32_t> mask,
                         double s, const QuantConfig& cfg);

/// One recorded point of an optimization run. Step 0 is the initial scale.
struct TracePoint {
    int step = 0;
    double scale = 0.0;
    double error = 0.0;
};

struct OptimizeTrace {
    std::vector<TracePoint> points;  // filled only when requested
    int best_step = 0;
    double best_scale = 0.0;
    double best_error = 0.0;  // min over all visited errors; <= error at step 0
};

struct OptimizeResult {
    float scale = 1.0f;          // selected scale, in storage precision
    double initial_error = 0.0;  // error at the (storage-precision) initial scale
    double final_error = 0.0;    // error at the selected scale
    OptimizeTrace trace;
};

/// Optimizes one channel's scale by Adam on the masked reconstruction error,
/// starting from initial_scale over the non-masked entries. Every candidate
/// scale is snapped to float before evaluation so the stored scale reproduces
/// the recorded error exactly. Selection follows cfg.select: best-so-far, or
/// the scale at cfg.select_step (falling back to the initial scale if that
/// step is worse). Guarantees final_error <= initial_error. If every entry is
/// masked, returns scale 1.0 with an empty trace.
OptimizeResult optimize_channel_range(std::span<const float> x,
                                      std::span<const uint32_t> mask,
                                      const QuantConfig& cfg,
                                      bool keep_trace = false);

/// Exhaustive grid-search oracle for the tests.
struct BruteForceResult {
    double scale = 1.0;
    double error = 0.0;
};

/// Evaluates the masked error at `grid_points` scales uniformly spanning
/// [s0/8, s0*1.25], plus s0 itself, and returns the argmin; ties break toward
/// the smaller scale.
BruteForceResult brute_force_optimal_scale(std::span<const float> x,
                                           std::span<const uint32_t> mask,
                                           const QuantConfig& cfg,
                                           int grid_points = 2000);

namespace serial {
double channel_error(std::span<const float> x, std::span<const uint32_t> mask,
                     double s, const QuantConfig& cfg);
}  // namespace serial

}  // namespace ezquant
