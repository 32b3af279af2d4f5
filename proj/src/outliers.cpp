#include "ezquant/outliers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ezquant/stats.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ezquant {

namespace {

// Collects the outliers of rows [row_lo, row_hi) in row-major order.
void detect_rows(const DenseMatrix& W, double mean, double threshold, int64_t row_lo,
                 int64_t row_hi, std::vector<OutlierEntry>& out) {
    for (int64_t i = row_lo; i < row_hi; ++i) {
        for (int64_t j = 0; j < W.cols; ++j) {
            const float v = W.at(i, j);
            if (std::fabs(static_cast<double>(v) - mean) >= threshold)
                out.push_back({static_cast<uint32_t>(i), static_cast<uint32_t>(j), v});
        }
    }
}

OutlierSet detect_impl(const DenseMatrix& W, const QuantConfig& cfg, bool parallel) {
    if (W.rows > UINT32_MAX || W.cols > UINT32_MAX)
        throw std::invalid_argument("matrix dimensions exceed 32-bit coordinate range");

    const TensorStats st = parallel ? tensor_stats(W) : serial::tensor_stats(W);
    OutlierSet set;
    set.mean = st.mean;
    set.stddev = st.stddev;
    set.sigma_n = cfg.sigma_n;
    if (st.stddev == 0.0) return set;  // constant tensor: nothing sticks out

    const double threshold = static_cast<double>(cfg.sigma_n) * st.stddev;

    constexpr int64_t kRowBlock = 64;
    const int64_t blocks = (W.rows + kRowBlock - 1) / kRowBlock;
    std::vector<std::vector<OutlierEntry>> per_block(static_cast<size_t>(blocks));
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel && !omp_in_parallel() && blocks > 1)
#endif
    for (int64_t b = 0; b < blocks; ++b) {
        const int64_t lo = b * kRowBlock;
        detect_rows(W, st.mean, threshold, lo, std::min(lo + kRowBlock, W.rows),
                    per_block[static_cast<size_t>(b)]);
    }

    size_t total = 0;
    for (const auto& v : per_block) total += v.size();
    set.entries.reserve(total);
    // Blocks cover ascending row ranges and each block is scanned row-major,
    // so concatenation is already sorted by (row, col).
    for (const auto& v : per_block) set.entries.insert(set.entries.end(), v.begin(), v.end());
    return set;
}

}  // namespace

OutlierSet detect_outliers(const DenseMatrix& W, const QuantConfig& cfg) {
    return detect_impl(W, cfg, true);
}

namespace serial {
OutlierSet detect_outliers(const DenseMatrix& W, const QuantConfig& cfg) {
    return detect_impl(W, cfg, false);
}
}  // namespace serial

std::vector<std::vector<uint32_t>> outlier_rows_by_column(const OutlierSet& outliers,
                                                          int64_t cols) {
    std::vector<std::vector<uint32_t>> by_col(static_cast<size_t>(cols));
    for (const auto& e : outliers.entries) {
        if (e.col >= static_cast<uint64_t>(cols))
            throw std::invalid_argument("outlier column " + std::to_string(e.col) +
                                        " out of range for " + std::to_string(cols) + " columns");
        by_col[e.col].push_back(e.row);
    }
    // Entries are sorted by (row, col), so each per-column list is already
    // ascending in row.
    return by_col;
}

MaskedChannel normal_mask_apply(std::span<const float> x,
                                std::span<const uint32_t> outlier_rows) {
    MaskedChannel out;
    out.values.reserve(x.size() - std::min(x.size(), outlier_rows.size()));
    out.rows.reserve(out.values.capacity());
    size_t next = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (next < outlier_rows.size() && outlier_rows[next] == i) {
            ++next;
            continue;
        }
        out.values.push_back(x[i]);
        out.rows.push_back(static_cast<uint32_t>(i));
    }
    return out;
}

void scatter_outliers(DenseMatrix& m, const OutlierSet& outliers) {
    for (const auto& e : outliers.entries) {
        if (e.row >= static_cast<uint64_t>(m.rows) || e.col >= static_cast<uint64_t>(m.cols))
            throw std::invalid_argument("outlier coordinate (" + std::to_string(e.row) + ", " +
                                        std::to_string(e.col) + ") outside " +
                                        std::to_string(m.rows) + "x" + std::to_string(m.cols));
        m.at(e.row, e.col) = e.value;
    }
}

}  // namespace ezquant
