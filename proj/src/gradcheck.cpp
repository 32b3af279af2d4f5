#include "ezquant/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ezquant/optimize.hpp"
#include "ezquant/rng.hpp"
#include "ezquant/rtn.hpp"

namespace ezquant {

namespace {

// True when some x_i/s sits within `margin` of a rounding discontinuity
// (a half-integer). The gradient jumps there, so finite differences cannot
// be compared against it.
bool near_rounding_edge(const std::vector<float>& x, double s, double margin) {
    const double inv = 1.0 / s;
    for (float v : x) {
        const double u = std::fabs(static_cast<double>(v) * inv);
        const double frac = u - std::floor(u);
        if (std::fabs(frac - 0.5) < margin) return true;
    }
    return false;
}

}  // namespace

GradcheckResult run_gradcheck(int trials, uint64_t seed, const QuantConfig& cfg,
                              int channel_len) {
    cfg.validate();
    Rng rng(seed);
    GradcheckResult res;
    res.trials = trials;

    std::vector<float> x(static_cast<size_t>(channel_len));
    for (int trial = 0; trial < trials; ++trial) {
        for (auto& v : x) v = static_cast<float>(rng.gaussian());
        const double s0 = initial_scale(x, cfg);

        double s = 0.0;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            s = s0 * rng.uniform(0.3, 1.2);
            if (!near_rounding_edge(x, s, 1e-4)) break;
            ++res.resampled;
        }

        const double h = 1e-6 * s;
        const double analytic = range_gradient(x, {}, s, cfg);
        const double fd = (channel_error(x, {}, s + h, cfg) - channel_error(x, {}, s - h, cfg)) /
                          (2.0 * h);

        const double denom = std::max(std::fabs(analytic), std::fabs(fd));
        double rel = 0.0;
        if (denom >= 1e-12) rel = std::fabs(analytic - fd) / denom;
        res.max_rel_err = std::max(res.max_rel_err, rel);
        if (rel >= 1e-3) ++res.failures;
    }
    return res;
}

}  // namespace ezquant
