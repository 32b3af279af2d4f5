#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ezquant/types.hpp"

namespace ezquant {

/// What the quantizer does beyond plain rounding.
enum class QuantMode {
    Easyquant,     // outlier isolation + per-channel scale optimization
    Rtn,           // round-to-nearest at the initial scale, no outliers
    OutliersOnly,  // outlier isolation, initial scales, no optimization
};

QuantMode parse_quant_mode(const std::string& s);  // throws std::invalid_argument
const char* quant_mode_name(QuantMode m);

/// Full quantization of one tensor under `mode`. Deterministic for a given
/// (W, cfg, mode) regardless of thread count.
///
/// Easyquant: detect outliers, optimize each column's scale over its
/// non-outlier entries, pack levels (outlier slots as level 0). rtn_error is
/// the masked error at the initial scales, final_error the masked error at
/// the optimized scales; final_error <= rtn_error always.
///
/// Rtn: no outliers, initial scales, full-column error; rtn_error == final_error.
///
/// OutliersOnly: outliers isolated, initial scales on the remaining entries,
/// no optimization; rtn_error == final_error (masked).
QuantizedWeight quantize_tensor(const DenseMatrix& W, const QuantConfig& cfg,
                                QuantMode mode = QuantMode::Easyquant);

/// quantize_tensor with QuantMode::Easyquant.
QuantizedWeight easyquant_tensor(const DenseMatrix& W, const QuantConfig& cfg);
/// quantize_tensor with QuantMode::Rtn.
QuantizedWeight rtn_tensor(const DenseMatrix& W, const QuantConfig& cfg);

/// Reconstructs the dense tensor: dequantize every column at its scale, then
/// scatter the stored outlier values back bit-exactly.
DenseMatrix dequantize_tensor(const QuantizedWeight& q);

namespace serial {
QuantizedWeight quantize_tensor(const DenseMatrix& W, const QuantConfig& cfg,
                                QuantMode mode = QuantMode::Easyquant);
DenseMatrix dequantize_tensor(const QuantizedWeight& q);
}  // namespace serial

}  // namespace ezquant
