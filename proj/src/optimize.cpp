#include "ezquant/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ezquant/outliers.hpp"
#include "ezquant/rtn.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ezquant {

namespace {

constexpr double kScaleFloor = 1e-12;

inline void check_scale(double s) {
    if (!(s > 0.0) || !std::isfinite(s))
        throw std::invalid_argument("scale must be finite and > 0, got " + std::to_string(s));
}

// Error and gradient of one dense (unmasked) channel at scale s, one pass.
// Everything accumulates in double, ascending index, so the result does not
// depend on thread count or call site.
ChannelEval eval_dense(const float* x, size_t n, double s, int lmin, int lmax) {
    const double inv = 1.0 / s;
    const double dmax = static_cast<double>(lmax);
    const double dmin = static_cast<double>(lmin);
    double err = 0.0;
    double grad = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        const double u = xi * inv;
        double q;
        if (u >= dmax)
            q = dmax;
        else if (u <= dmin)
            q = dmin;
        else
            q = static_cast<double>(std::llround(u));
        const double d = s * q - xi;
        err += d * d;
        grad += d * q;
    }
    return {err, 2.0 * grad};
}

// Gathers the non-masked entries of x. mask must be sorted ascending.
std::vector<float> gather_normals(std::span<const float> x, std::span<const uint32_t> mask) {
    std::vector<float> out;
    out.reserve(x.size() - std::min(x.size(), mask.size()));
    size_t next = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (next < mask.size() && mask[next] == i) {
            ++next;
            continue;
        }
        out.push_back(x[i]);
    }
    return out;
}

ChannelEval eval_masked(std::span<const float> x, std::span<const uint32_t> mask, double s,
                        const QuantConfig& cfg) {
    check_scale(s);
    const int lmin = cfg.level_min();
    const int lmax = cfg.level_max();
    if (mask.empty()) return eval_dense(x.data(), x.size(), s, lmin, lmax);
    const std::vector<float> normals = gather_normals(x, mask);
    return eval_dense(normals.data(), normals.size(), s, lmin, lmax);
}

// Round a candidate scale to storage precision, keeping it positive.
inline double snap(double s) {
    const double snapped = static_cast<double>(static_cast<float>(s));
    return std::max(snapped, kScaleFloor);
}

}  // namespace

double adam_step(AdamState& st, double scale, double grad, const QuantConfig& cfg) {
    st.t += 1;
    st.m = cfg.adam_beta1 * st.m + (1.0 - cfg.adam_beta1) * grad;
    st.v = cfg.adam_beta2 * st.v + (1.0 - cfg.adam_beta2) * grad * grad;
    const double m_hat = st.m / (1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.t)));
    const double v_hat = st.v / (1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.t)));
    const double updated = scale - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    return std::max(updated, kScaleFloor);
}

double channel_error(std::span<const float> x, std::span<const uint32_t> mask, double s,
                     const QuantConfig& cfg) {
    return eval_masked(x, mask, s, cfg).error;
}

double range_gradient(std::span<const float> x, std::span<const uint32_t> mask, double s,
                      const QuantConfig& cfg) {
    return eval_masked(x, mask, s, cfg).gradient;
}

ChannelEval channel_eval(std::span<const float> x, std::span<const uint32_t> mask, double s,
                         const QuantConfig& cfg) {
    return eval_masked(x, mask, s, cfg);
}

namespace serial {
double channel_error(std::span<const float> x, std::span<const uint32_t> mask, double s,
                     const QuantConfig& cfg) {
    return eval_masked(x, mask, s, cfg).error;
}
}  // namespace serial

OptimizeResult optimize_channel_range(std::span<const float> x, std::span<const uint32_t> mask,
                                      const QuantConfig& cfg, bool keep_trace) {
    std::vector<float> gathered;
    std::span<const float> v = x;
    if (!mask.empty()) {
        gathered = gather_normals(x, mask);
        v = gathered;
    }

    OptimizeResult res;
    if (v.empty()) {
        // Every entry masked out: nothing to fit. Scale 1.0 by convention.
        res.scale = 1.0f;
        res.trace.best_scale = 1.0;
        return res;
    }

    const int lmin = cfg.level_min();
    const int lmax = cfg.level_max();

    double s = snap(initial_scale(v, cfg));
    ChannelEval ev = eval_dense(v.data(), v.size(), s, lmin, lmax);

    res.initial_error = ev.error;
    res.trace.best_step = 0;
    res.trace.best_scale = s;
    res.trace.best_error = ev.error;
    if (keep_trace) res.trace.points.push_back({0, s, ev.error});

    const double s0 = s;
    const double e0 = ev.error;
    double fixed_scale = s;
    double fixed_error = ev.error;
    const int fixed_at = std::min(cfg.select_step, cfg.steps);

    AdamState adam;
    for (int t = 1; t <= cfg.steps; ++t) {
        s = snap(adam_step(adam, s, ev.gradient, cfg));
        ev = eval_dense(v.data(), v.size(), s, lmin, lmax);
        if (keep_trace) res.trace.points.push_back({t, s, ev.error});
        if (ev.error < res.trace.best_error) {
            res.trace.best_error = ev.error;
            res.trace.best_scale = s;
            res.trace.best_step = t;
        }
        if (t == fixed_at) {
            fixed_scale = s;
            fixed_error = ev.error;
        }
    }

    if (cfg.select == SelectPolicy::FixedStep) {
        // Keep the never-worse-than-start guarantee even under fixed-step
        // selection: fall back to the initial scale if the chosen step lost.
        if (fixed_error <= e0) {
            res.scale = static_cast<float>(fixed_scale);
            res.final_error = fixed_error;
        } else {
            res.scale = static_cast<float>(s0);
            res.final_error = e0;
        }
    } else {
        res.scale = static_cast<float>(res.trace.best_scale);
        res.final_error = res.trace.best_error;
    }
    return res;
}

BruteForceResult brute_force_optimal_scale(std::span<const float> x,
                                           std::span<const uint32_t> mask,
                                           const QuantConfig& cfg, int grid_points) {
    if (grid_points < 2) throw std::invalid_argument("grid_points must be >= 2");

    std::vector<float> gathered;
    std::span<const float> v = x;
    if (!mask.empty()) {
        gathered = gather_normals(x, mask);
        v = gathered;
    }
    if (v.empty()) return {1.0, 0.0};

    const double s0 = initial_scale(v, cfg);
    const double lo = s0 / 8.0;
    const double hi = s0 * 1.25;

    std::vector<double> grid;
    grid.reserve(static_cast<size_t>(grid_points) + 1);
    for (int i = 0; i < grid_points; ++i)
        grid.push_back(lo + (hi - lo) * static_cast<double>(i) /
                                static_cast<double>(grid_points - 1));
    // s0 itself is evaluated too, so an exactly-representable channel scores 0.
    grid.push_back(s0);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    const int lmin = cfg.level_min();
    const int lmax = cfg.level_max();
    const int64_t n = static_cast<int64_t>(grid.size());
    std::vector<double> err(grid.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (!omp_in_parallel() && n > 8)
#endif
    for (int64_t i = 0; i < n; ++i)
        err[static_cast<size_t>(i)] =
            eval_dense(v.data(), v.size(), grid[static_cast<size_t>(i)], lmin, lmax).error;

    // Ascending scan with strict improvement keeps ties at the smaller scale.
    size_t best = 0;
    for (size_t i = 1; i < grid.size(); ++i)
        if (err[i] < err[best]) best = i;
    return {grid[best], err[best]};
}

}  // namespace ezquant
