#include "ezquant/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "ezquant/outliers.hpp"
#include "ezquant/pipeline.hpp"
#include "ezquant/rng.hpp"
#include "ezquant/rtn.hpp"
#include "ezquant/types.hpp"

namespace ezquant {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// A synthetic quantized tensor with `target` outliers at distinct random
// coordinates, sorted by (row, col).
QuantizedWeight synthetic_quantized(int64_t rows, int64_t cols, int64_t target, Rng& rng) {
    QuantizedWeight q;
    q.rows = rows;
    q.cols = cols;
    q.bits = 4;

    const QuantConfig cfg;
    LevelVector lv;
    lv.bits = 4;
    lv.levels.resize(static_cast<size_t>(rows * cols));
    for (auto& l : lv.levels)
        l = static_cast<int16_t>(rng.uniform_int(cfg.level_min(), cfg.level_max()));
    q.packed_levels = pack_levels(lv);

    q.scales.scales.resize(static_cast<size_t>(cols));
    for (auto& s : q.scales.scales) s = static_cast<float>(rng.uniform(0.02, 0.1));

    q.outliers.sigma_n = cfg.sigma_n;
    q.outliers.stddev = 1.0;
    std::vector<uint64_t> flat;
    flat.reserve(static_cast<size_t>(target));
    while (static_cast<int64_t>(flat.size()) < target) {
        const int64_t missing = target - static_cast<int64_t>(flat.size());
        for (int64_t i = 0; i < missing; ++i)
            flat.push_back(static_cast<uint64_t>(rng.uniform_int(0, rows * cols - 1)));
        std::sort(flat.begin(), flat.end());
        flat.erase(std::unique(flat.begin(), flat.end()), flat.end());
    }
    q.outliers.entries.reserve(flat.size());
    for (uint64_t f : flat) {
        OutlierEntry e;
        e.row = static_cast<uint32_t>(f / static_cast<uint64_t>(cols));
        e.col = static_cast<uint32_t>(f % static_cast<uint64_t>(cols));
        e.value = static_cast<float>(rng.gaussian() * 30.0);
        q.outliers.entries.push_back(e);
    }
    return q;
}

}  // namespace

std::vector<BenchRow> dequant_bench(int64_t rows, int64_t cols, std::span<const double> ratios,
                                    int repetitions, uint64_t seed) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("bench shape must be positive");
    if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    for (double r : ratios) {
        if (!(r >= 0.0 && r <= 1.0))
            throw std::invalid_argument("outlier ratios must lie in [0, 1]");
    }

    Rng rng(seed);
    std::vector<BenchRow> out;
    for (double ratio : ratios) {
        const int64_t target = std::min(
            rows * cols,
            static_cast<int64_t>(std::llround(ratio * static_cast<double>(rows * cols))));
        QuantizedWeight q = synthetic_quantized(rows, cols, target, rng);

        QuantizedWeight dense_only = q;
        dense_only.outliers.entries.clear();

        std::vector<double> unpack_times, scatter_times;
        DenseMatrix w;
        for (int rep = 0; rep < repetitions; ++rep) {
            auto t0 = std::chrono::steady_clock::now();
            w = dequantize_tensor(dense_only);
            unpack_times.push_back(ms_since(t0));

            t0 = std::chrono::steady_clock::now();
            scatter_outliers(w, q.outliers);
            scatter_times.push_back(ms_since(t0));
        }

        BenchRow row;
        row.ratio = ratio;
        row.outliers = target;
        row.unpack_ms = median(unpack_times);
        row.scatter_ms = median(scatter_times);
        out.push_back(row);
    }
    return out;
}

void print_bench_table(const std::vector<BenchRow>& rows, std::ostream& os) {
    char buf[160];
    snprintf(buf, sizeof buf, "%10s %12s %14s %14s %10s\n", "ratio%", "outliers", "unpack_ms",
             "scatter_ms", "scatter%");
    os << buf;
    for (const auto& r : rows) {
        const double total = r.unpack_ms + r.scatter_ms;
        snprintf(buf, sizeof buf, "%10.4g %12lld %14.4f %14.4f %10.2f\n", 100.0 * r.ratio,
                 static_cast<long long>(r.outliers), r.unpack_ms, r.scatter_ms,
                 total > 0 ? 100.0 * r.scatter_ms / total : 0.0);
        os << buf;
    }
}

std::string bench_to_json(const std::vector<BenchRow>& rows) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json e;
        e["ratio"] = r.ratio;
        e["outliers"] = r.outliers;
        e["unpack_ms"] = r.unpack_ms;
        e["scatter_ms"] = r.scatter_ms;
        j.push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

}  // namespace ezquant
