#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ezquant/types.hpp"

namespace ezquant {

/// Finds every element with |W_ij - mean(W)| >= sigma_n * std(W), statistics
/// taken over the whole tensor. Ties count as outliers. A tensor with zero
/// standard deviation yields the empty set. Entries come back sorted by
/// (row, col).
OutlierSet detect_outliers(const DenseMatrix& W, const QuantConfig& cfg);

/// Outlier row indices grouped per column, each list ascending.
std::vector<std::vector<uint32_t>> outlier_rows_by_column(const OutlierSet& outliers,
                                                          int64_t cols);

/// A channel with its outlier positions removed. `rows` keeps the original
/// index of each surviving value so levels can be written back in place.
struct MaskedChannel {
    std::vector<float> values;
    std::vector<uint32_t> rows;
};

/// Drops the entries of `x` listed in `outlier_rows` (sorted, in bounds).
MaskedChannel normal_mask_apply(std::span<const float> x,
                                std::span<const uint32_t> outlier_rows);

/// Writes the stored full-precision outlier values back into `m`, bit-exactly.
/// Throws std::invalid_argument on an out-of-bounds coordinate.
void scatter_outliers(DenseMatrix& m, const OutlierSet& outliers);

namespace serial {
OutlierSet detect_outliers(const DenseMatrix& W, const QuantConfig& cfg);
}  // namespace serial

}  // namespace ezquant
