#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ezquant {

// Row-major 2-D weight matrix with f32 storage. All accumulation over its
// elements happens in double; the storage type stays f32 end to end.
struct DenseMatrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<float> data;  // length rows*cols, row-major

    DenseMatrix() = default;
    DenseMatrix(int64_t r, int64_t c)
        : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0f) {}
    DenseMatrix(int64_t r, int64_t c, std::vector<float> d)
        : rows(r), cols(c), data(std::move(d)) {}

    float& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
    const float& at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols + j)]; }
    int64_t size() const { return rows * cols; }

    // Throws std::invalid_argument on non-positive shape, length mismatch, or
    // non-finite elements.
    void validate() const;
};

enum class SelectPolicy {
    BestError,  // return the scale with the minimum recorded error
    FixedStep,  // return the scale at step `select_step`
};

struct QuantConfig {
    int bits = 4;            // k, in [2, 8]
    float sigma_n = 3.0f;    // outlier threshold multiplier, >= 0
    double lr = 1e-3;        // Adam learning rate
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int steps = 200;         // range-optimization iterations, >= 0
    SelectPolicy select = SelectPolicy::BestError;
    int select_step = 100;   // step to pick under FixedStep
    uint64_t seed = 0;       // consumed only by randomized utilities (bench, gradcheck)

    // Clamp bounds are derived from `bits`, never stored independently.
    int level_min() const { return -(1 << (bits - 1)) + 1; }
    int level_max() const { return 1 << (bits - 1); }

    void validate() const;  // throws std::invalid_argument
};

// Whole-tensor statistics. `stddev` is the population standard deviation
// (divide by count, not count-1).
struct TensorStats {
    double mean = 0.0;
    double stddev = 0.0;
    double max_abs = 0.0;
    int64_t count = 0;
};

// One positive quantization scale per matrix column. Stored as f32 to match
// the on-disk artifact; everything downstream widens to double to compute.
struct ChannelScales {
    std::vector<float> scales;

    int64_t size() const { return static_cast<int64_t>(scales.size()); }
    float operator[](int64_t j) const { return scales[static_cast<size_t>(j)]; }
};

struct OutlierEntry {
    uint32_t row = 0;
    uint32_t col = 0;
    float value = 0.0f;

    friend bool operator==(const OutlierEntry&, const OutlierEntry&) = default;
};

// Sparse full-precision values excluded from quantization, sorted by
// (row, col) with no duplicates. `mean`/`stddev`/`sigma_n` record the
// detection-time statistics so the criterion can be re-verified on reload.
struct OutlierSet {
    std::vector<OutlierEntry> entries;
    double mean = 0.0;
    double stddev = 0.0;
    float sigma_n = 0.0f;

    bool empty() const { return entries.empty(); }
    int64_t size() const { return static_cast<int64_t>(entries.size()); }
};

// Integer quantization levels for one channel, each within
// [level_min, level_max] for `bits`.
struct LevelVector {
    std::vector<int16_t> levels;
    int bits = 4;

    int64_t size() const { return static_cast<int64_t>(levels.size()); }
};

// The serializable quantization artifact for one tensor: packed k-bit levels,
// per-channel scales, isolated outliers, and detection stats. The two error
// fields are run provenance; they live in the model-level manifest rather than
// the per-tensor binary, so they are absent on a tensor loaded from disk.
struct QuantizedWeight {
    int64_t rows = 0;
    int64_t cols = 0;
    int bits = 4;
    std::vector<uint8_t> packed_levels;
    ChannelScales scales;
    OutlierSet outliers;
    std::optional<double> rtn_error;    // masked error at the initial scales
    std::optional<double> final_error;  // masked error at the stored scales
};

}  // namespace ezquant
