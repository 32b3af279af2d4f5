#include "ezquant/pipeline.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ezquant/error.hpp"
#include "ezquant/optimize.hpp"
#include "ezquant/outliers.hpp"
#include "ezquant/rtn.hpp"
#include "ezquant/stats.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ezquant {

namespace {

struct ColumnOutcome {
    float scale = 1.0f;
    double rtn_error = 0.0;
    double final_error = 0.0;
};

// Quantizes column j into the shared level grid and reports its scale and
// errors. `outlier_rows` lists the masked rows of this column, ascending.
ColumnOutcome quantize_column(const DenseMatrix& W, int64_t j,
                              const std::vector<uint32_t>& outlier_rows,
                              const QuantConfig& cfg, QuantMode mode,
                              std::vector<int16_t>& grid) {
    std::vector<float> col(static_cast<size_t>(W.rows));
    for (int64_t i = 0; i < W.rows; ++i) col[static_cast<size_t>(i)] = W.at(i, j);

    const MaskedChannel masked = normal_mask_apply(col, outlier_rows);

    ColumnOutcome out;
    if (masked.values.empty()) {
        // Column fully masked: nothing to quantize, slots stay level 0.
        out.scale = 1.0f;
        return out;
    }

    if (mode == QuantMode::Easyquant) {
        const OptimizeResult r = optimize_channel_range(masked.values, {}, cfg);
        out.scale = r.scale;
        out.rtn_error = r.initial_error;
        out.final_error = r.final_error;
    } else {
        const float s = static_cast<float>(initial_scale(masked.values, cfg));
        out.scale = s;
        out.rtn_error = channel_error(masked.values, {}, static_cast<double>(s), cfg);
        out.final_error = out.rtn_error;
    }

    const LevelVector lv =
        quantize_channel(masked.values, static_cast<double>(out.scale), cfg);
    for (size_t k = 0; k < masked.rows.size(); ++k)
        grid[static_cast<size_t>(masked.rows[k]) * static_cast<size_t>(W.cols) +
             static_cast<size_t>(j)] = lv.levels[k];
    return out;
}

QuantizedWeight quantize_impl(const DenseMatrix& W, const QuantConfig& cfg, QuantMode mode,
                              bool parallel) {
    W.validate();
    cfg.validate();

    QuantizedWeight q;
    q.rows = W.rows;
    q.cols = W.cols;
    q.bits = cfg.bits;

    if (mode == QuantMode::Rtn) {
        const TensorStats st = parallel ? tensor_stats(W) : serial::tensor_stats(W);
        q.outliers.mean = st.mean;
        q.outliers.stddev = st.stddev;
        q.outliers.sigma_n = cfg.sigma_n;
    } else {
        q.outliers = parallel ? detect_outliers(W, cfg) : serial::detect_outliers(W, cfg);
    }

    const std::vector<std::vector<uint32_t>> by_col = outlier_rows_by_column(q.outliers, W.cols);

    std::vector<int16_t> grid(static_cast<size_t>(W.size()), 0);
    std::vector<ColumnOutcome> cols(static_cast<size_t>(W.cols));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel && !omp_in_parallel() && W.cols > 1)
#endif
    for (int64_t j = 0; j < W.cols; ++j)
        cols[static_cast<size_t>(j)] =
            quantize_column(W, j, by_col[static_cast<size_t>(j)], cfg, mode, grid);

    q.scales.scales.resize(static_cast<size_t>(W.cols));
    double rtn = 0.0;
    double fin = 0.0;
    for (int64_t j = 0; j < W.cols; ++j) {
        const auto& c = cols[static_cast<size_t>(j)];
        q.scales.scales[static_cast<size_t>(j)] = c.scale;
        rtn += c.rtn_error;
        fin += c.final_error;
    }
    q.rtn_error = rtn;
    q.final_error = fin;

    if (fin > rtn)
        throw invariant_error("optimized error exceeds round-to-nearest error");

    LevelVector all;
    all.bits = cfg.bits;
    all.levels = std::move(grid);
    q.packed_levels = pack_levels(all);
    return q;
}

DenseMatrix dequantize_impl(const QuantizedWeight& q, bool parallel) {
    if (q.rows <= 0 || q.cols <= 0)
        throw io_error(IoErrorKind::FormatViolation, 0, "quantized tensor has empty shape");
    if (q.scales.size() != q.cols)
        throw io_error(IoErrorKind::FormatViolation, 0, "scale count does not match columns");

    const LevelVector all = unpack_levels(q.packed_levels, q.rows * q.cols, q.bits);

    std::vector<double> s(static_cast<size_t>(q.cols));
    for (int64_t j = 0; j < q.cols; ++j) s[static_cast<size_t>(j)] = q.scales[j];

    DenseMatrix out(q.rows, q.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (parallel && !omp_in_parallel() && q.rows > 1)
#endif
    for (int64_t i = 0; i < q.rows; ++i) {
        const size_t base = static_cast<size_t>(i) * static_cast<size_t>(q.cols);
        for (int64_t j = 0; j < q.cols; ++j)
            out.data[base + static_cast<size_t>(j)] = static_cast<float>(
                s[static_cast<size_t>(j)] *
                static_cast<double>(all.levels[base + static_cast<size_t>(j)]));
    }

    scatter_outliers(out, q.outliers);
    return out;
}

}  // namespace

QuantMode parse_quant_mode(const std::string& s) {
    if (s == "easyquant") return QuantMode::Easyquant;
    if (s == "rtn") return QuantMode::Rtn;
    if (s == "outliers-only") return QuantMode::OutliersOnly;
    throw std::invalid_argument("unknown mode '" + s +
                                "' (expected easyquant, rtn, or outliers-only)");
}

const char* quant_mode_name(QuantMode m) {
    switch (m) {
        case QuantMode::Easyquant: return "easyquant";
        case QuantMode::Rtn: return "rtn";
        case QuantMode::OutliersOnly: return "outliers-only";
    }
    return "?";
}

QuantizedWeight quantize_tensor(const DenseMatrix& W, const QuantConfig& cfg, QuantMode mode) {
    return quantize_impl(W, cfg, mode, true);
}

QuantizedWeight easyquant_tensor(const DenseMatrix& W, const QuantConfig& cfg) {
    return quantize_impl(W, cfg, QuantMode::Easyquant, true);
}

QuantizedWeight rtn_tensor(const DenseMatrix& W, const QuantConfig& cfg) {
    return quantize_impl(W, cfg, QuantMode::Rtn, true);
}

DenseMatrix dequantize_tensor(const QuantizedWeight& q) { return dequantize_impl(q, true); }

namespace serial {
QuantizedWeight quantize_tensor(const DenseMatrix& W, const QuantConfig& cfg, QuantMode mode) {
    return quantize_impl(W, cfg, mode, false);
}

DenseMatrix dequantize_tensor(const QuantizedWeight& q) { return dequantize_impl(q, false); }
}  // namespace serial

}  // namespace ezquant
