#include "ezquant/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ezquant {

namespace {

// Chunk width for the fixed-order partial sums. The merge walks chunks in
// index order, so the grand totals are the same no matter how many threads
// computed the partials.
constexpr int64_t kChunk = 8192;

struct ChunkSums {
    double sum = 0.0;
    double max_abs = 0.0;
    float mn = 0.0f;
    float mx = 0.0f;
};

ChunkSums sum_chunk(const float* d, int64_t n) {
    ChunkSums c;
    c.mn = d[0];
    c.mx = d[0];
    for (int64_t i = 0; i < n; ++i) {
        const double v = d[i];
        c.sum += v;
        c.max_abs = std::max(c.max_abs, std::fabs(v));
        c.mn = std::min(c.mn, d[i]);
        c.mx = std::max(c.mx, d[i]);
    }
    return c;
}

double dev_chunk(const float* d, int64_t n, double mean) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double dv = static_cast<double>(d[i]) - mean;
        acc += dv * dv;
    }
    return acc;
}

TensorStats stats_impl(const DenseMatrix& W, bool parallel) {
    const int64_t n = W.size();
    if (n <= 0) return {};
    const int64_t chunks = (n + kChunk - 1) / kChunk;
    const float* d = W.data.data();

    std::vector<ChunkSums> partial(static_cast<size_t>(chunks));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel && !omp_in_parallel() && chunks > 1)
#endif
    for (int64_t c = 0; c < chunks; ++c) {
        const int64_t lo = c * kChunk;
        partial[static_cast<size_t>(c)] = sum_chunk(d + lo, std::min(kChunk, n - lo));
    }

    TensorStats st;
    st.count = n;
    double sum = 0.0;
    float mn = partial[0].mn;
    float mx = partial[0].mx;
    for (const auto& p : partial) {
        sum += p.sum;
        st.max_abs = std::max(st.max_abs, p.max_abs);
        mn = std::min(mn, p.mn);
        mx = std::max(mx, p.mx);
    }

    if (mn == mx) {
        // Constant tensor: the deviations are exactly zero by construction,
        // which the outlier rule downstream depends on.
        st.mean = mn;
        st.stddev = 0.0;
        return st;
    }

    st.mean = sum / static_cast<double>(n);

    std::vector<double> dev(static_cast<size_t>(chunks));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel && !omp_in_parallel() && chunks > 1)
#endif
    for (int64_t c = 0; c < chunks; ++c) {
        const int64_t lo = c * kChunk;
        dev[static_cast<size_t>(c)] = dev_chunk(d + lo, std::min(kChunk, n - lo), st.mean);
    }

    double ss = 0.0;
    for (double v : dev) ss += v;
    st.stddev = std::sqrt(ss / static_cast<double>(n));
    return st;
}

}  // namespace

TensorStats tensor_stats(const DenseMatrix& W) { return stats_impl(W, true); }

namespace serial {
TensorStats tensor_stats(const DenseMatrix& W) { return stats_impl(W, false); }
}  // namespace serial

}  // namespace ezquant
