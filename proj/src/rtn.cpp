#include "ezquant/rtn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ezquant/outliers.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ezquant {

namespace {

void check_scale(double s) {
    if (!(s > 0.0) || !std::isfinite(s))
        throw std::invalid_argument("scale must be finite and > 0, got " + std::to_string(s));
}

// Level of one element: clamp(x/s) in the real domain, then round half away
// from zero. Clamping before the round keeps llround in a safe range and maps
// every input to the same level as round-then-clamp would.
inline int level_of(double x, double inv_s, int lmin, int lmax) {
    const double u = x * inv_s;
    if (u >= static_cast<double>(lmax)) return lmax;
    if (u <= static_cast<double>(lmin)) return lmin;
    return static_cast<int>(std::llround(u));
}

double column_sq_diff(const DenseMatrix& a, const DenseMatrix& b, int64_t j,
                      const std::vector<uint32_t>* skip_rows) {
    double acc = 0.0;
    const uint32_t* sk = nullptr;
    size_t sk_n = 0, sk_i = 0;
    if (skip_rows) {
        sk = skip_rows->data();
        sk_n = skip_rows->size();
    }
    for (int64_t i = 0; i < a.rows; ++i) {
        if (sk && sk_i < sk_n && sk[sk_i] == static_cast<uint32_t>(i)) {
            ++sk_i;
            continue;
        }
        const double d = static_cast<double>(a.at(i, j)) - static_cast<double>(b.at(i, j));
        acc += d * d;
    }
    return acc;
}

double reconstruction_error_impl(const DenseMatrix& a, const DenseMatrix& b,
                                 const OutlierSet* skip, bool parallel) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("shape mismatch: " + std::to_string(a.rows) + "x" +
                                    std::to_string(a.cols) + " vs " + std::to_string(b.rows) +
                                    "x" + std::to_string(b.cols));

    std::vector<std::vector<uint32_t>> by_col;
    if (skip && !skip->empty()) by_col = outlier_rows_by_column(*skip, a.cols);

    std::vector<double> col_sum(static_cast<size_t>(a.cols));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel && !omp_in_parallel() && a.cols > 1)
#endif
    for (int64_t j = 0; j < a.cols; ++j) {
        const std::vector<uint32_t>* rows =
            by_col.empty() ? nullptr : &by_col[static_cast<size_t>(j)];
        col_sum[static_cast<size_t>(j)] = column_sq_diff(a, b, j, rows);
    }

    double total = 0.0;
    for (double v : col_sum) total += v;
    return total;
}

}  // namespace

double initial_scale(std::span<const float> x, const QuantConfig& cfg) {
    double max_abs = 0.0;
    for (float v : x) max_abs = std::max(max_abs, std::fabs(static_cast<double>(v)));
    if (max_abs == 0.0) return 1.0;
    return max_abs / static_cast<double>(cfg.level_max());
}

LevelVector quantize_channel(std::span<const float> x, double scale, const QuantConfig& cfg) {
    check_scale(scale);
    const int lmin = cfg.level_min();
    const int lmax = cfg.level_max();
    const double inv = 1.0 / scale;
    LevelVector lv;
    lv.bits = cfg.bits;
    lv.levels.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i)
        lv.levels[i] = static_cast<int16_t>(level_of(x[i], inv, lmin, lmax));
    return lv;
}

std::vector<float> dequantize_channel(const LevelVector& levels, double scale) {
    check_scale(scale);
    std::vector<float> out(levels.levels.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(scale * static_cast<double>(levels.levels[i]));
    return out;
}

double reconstruction_error(const DenseMatrix& a, const DenseMatrix& b, const OutlierSet* skip) {
    return reconstruction_error_impl(a, b, skip, true);
}

namespace serial {
double reconstruction_error(const DenseMatrix& a, const DenseMatrix& b, const OutlierSet* skip) {
    return reconstruction_error_impl(a, b, skip, false);
}
}  // namespace serial

int64_t packed_size(int64_t count, int bits) {
    return bits == 4 ? (count + 1) / 2 : count;
}

std::vector<uint8_t> pack_levels(const LevelVector& lv) {
    const QuantConfig probe{.bits = lv.bits};
    const int lmin = probe.level_min();
    const int lmax = probe.level_max();
    for (int16_t l : lv.levels) {
        if (l < lmin || l > lmax)
            throw std::invalid_argument("level " + std::to_string(l) + " outside [" +
                                        std::to_string(lmin) + ", " + std::to_string(lmax) + "]");
    }

    const int64_t n = lv.size();
    std::vector<uint8_t> out(static_cast<size_t>(packed_size(n, lv.bits)), 0);
    if (lv.bits == 4) {
        for (int64_t i = 0; i < n; ++i) {
            const uint8_t nib = static_cast<uint8_t>(lv.levels[static_cast<size_t>(i)] - lmin);
            if (i % 2 == 0)
                out[static_cast<size_t>(i / 2)] = nib;  // earlier element, low nibble
            else
                out[static_cast<size_t>(i / 2)] |= static_cast<uint8_t>(nib << 4);
        }
    } else {
        for (int64_t i = 0; i < n; ++i)
            out[static_cast<size_t>(i)] =
                static_cast<uint8_t>(lv.levels[static_cast<size_t>(i)] - lmin);
    }
    return out;
}

LevelVector unpack_levels(std::span<const uint8_t> bytes, int64_t count, int bits) {
    if (count < 0) throw std::invalid_argument("negative level count");
    const int64_t need = packed_size(count, bits);
    if (static_cast<int64_t>(bytes.size()) < need)
        throw std::invalid_argument("packed buffer holds " + std::to_string(bytes.size()) +
                                    " bytes, need " + std::to_string(need) + " for " +
                                    std::to_string(count) + " levels");

    const QuantConfig probe{.bits = bits};
    const int lmin = probe.level_min();
    const int span = probe.level_max() - lmin;  // max offset value

    LevelVector lv;
    lv.bits = bits;
    lv.levels.resize(static_cast<size_t>(count));
    if (bits == 4) {
        for (int64_t i = 0; i < count; ++i) {
            const uint8_t b = bytes[static_cast<size_t>(i / 2)];
            const uint8_t nib = (i % 2 == 0) ? (b & 0x0f) : (b >> 4);
            lv.levels[static_cast<size_t>(i)] = static_cast<int16_t>(lmin + nib);
        }
    } else {
        for (int64_t i = 0; i < count; ++i) {
            const uint8_t b = bytes[static_cast<size_t>(i)];
            if (b > span)
                throw std::invalid_argument("packed byte " + std::to_string(b) +
                                            " exceeds level span " + std::to_string(span));
            lv.levels[static_cast<size_t>(i)] = static_cast<int16_t>(lmin + b);
        }
    }
    return lv;
}

}  // namespace ezquant
