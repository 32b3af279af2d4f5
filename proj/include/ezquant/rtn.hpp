#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ezquant/types.hpp"

namespace ezquant {

/// Initial quantization scale for one channel: max|x_i| / level_max, so the
/// largest magnitude lands exactly on the top level. An all-zero (degenerate)
/// channel gets scale 1.0.
double initial_scale(std::span<const float> x, const QuantConfig& cfg);

/// RTN levels: clamp(x_i / s, level_min, level_max) rounded half away from
/// zero. Rejects s <= 0 or non-finite s.
LevelVector quantize_channel(std::span<const float> x, double scale, const QuantConfig& cfg);

/// Reconstruction s * level_i, narrowed to f32.
std::vector<float> dequantize_channel(const LevelVector& levels, double scale);

/// Sum of squared elementwise differences, skipping coordinates listed in
/// `skip` when given. Summed per column sequentially, columns merged in order,
/// double accumulators throughout.
double reconstruction_error(const DenseMatrix& a, const DenseMatrix& b,
                            const OutlierSet* skip = nullptr);

/// Packs levels for storage. k=4: offset-encoded nibbles (level - level_min),
/// two per byte, earlier element in the low nibble, odd tail padded with a
/// zero nibble. Other k: one offset-encoded byte per level.
std::vector<uint8_t> pack_levels(const LevelVector& lv);

/// Inverse of pack_levels. Rejects buffers shorter than the packed size for
/// `count` elements and, for k != 4, byte values outside the level range.
LevelVector unpack_levels(std::span<const uint8_t> bytes, int64_t count, int bits);

/// Packed byte count for `count` levels at width `bits`.
int64_t packed_size(int64_t count, int bits);

namespace serial {
double reconstruction_error(const DenseMatrix& a, const DenseMatrix& b,
                            const OutlierSet* skip = nullptr);
}  // namespace serial

}  // namespace ezquant
