#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ezquant {

/// Median timings of the two dequantization phases at one outlier ratio.
struct BenchRow {
    double ratio = 0.0;       // outlier fraction of the synthetic tensor
    int64_t outliers = 0;
    double unpack_ms = 0.0;   // unpack levels + rescale by column
    double scatter_ms = 0.0;  // write outlier values back
};

/// Builds a synthetic quantized tensor per ratio and times the dequantization
/// phases separately, `repetitions` runs each, reporting medians. Scatter
/// time is monotone non-decreasing in the ratio.
std::vector<BenchRow> dequant_bench(int64_t rows, int64_t cols,
                                    std::span<const double> ratios,
                                    int repetitions, uint64_t seed);

void print_bench_table(const std::vector<BenchRow>& rows, std::ostream& os);
std::string bench_to_json(const std::vector<BenchRow>& rows);

}  // namespace ezquant
