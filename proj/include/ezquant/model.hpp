#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ezquant/io.hpp"
#include "ezquant/pipeline.hpp"
#include "ezquant/types.hpp"

namespace ezquant {

/// One row of the quantized-model manifest (quantized_manifest.json).
struct TensorRecord {
    std::string name;
    int64_t rows = 0;
    int64_t cols = 0;
    std::string file;         // relative path inside the model directory
    bool passthrough = false; // 1-D tensors are copied verbatim, not quantized
    std::string role;
    std::optional<int64_t> layer;
    int64_t outlier_count = 0;
    double rtn_error = 0.0;
    double final_error = 0.0;
};

struct QuantizedModelManifest {
    int version = 1;
    int bits = 4;
    float sigma_n = 3.0f;
    std::string mode;    // easyquant | rtn | outliers-only
    std::string select;  // best | step:N
    double lr = 1e-3;
    int steps = 200;
    std::vector<TensorRecord> tensors;
};

QuantizedModelManifest load_quantized_manifest(const std::filesystem::path& dir);
void save_quantized_manifest(const QuantizedModelManifest& m,
                             const std::filesystem::path& dir);

/// Outcome of one tensor inside a model run. Timing stays in memory and on
/// the console; it is never serialized, so output files depend only on the
/// inputs and the config.
struct TensorRunStatus {
    std::string name;
    bool ok = false;
    std::string error;  // set when !ok
    double seconds = 0.0;
    TensorRecord record;  // valid when ok
};

struct ModelRunResult {
    std::vector<TensorRunStatus> tensors;  // manifest order
    int failures = 0;
};

/// Quantizes every tensor of `manifest` into `out_dir`: 2-D tensors through
/// quantize_tensor, 1-D tensors copied as raw f32. Tensors are processed by a
/// pool of `workers` threads (>= 1), one tensor per task; per-tensor work is
/// deterministic and files are distinct, so the output directory is
/// byte-identical for any worker count. The quantized manifest is written
/// last, listing the successful tensors in manifest order. A missing or
/// corrupt tensor file is recorded as a per-tensor failure, not a throw.
ModelRunResult quantize_model(const ModelManifest& manifest, const QuantConfig& cfg,
                              QuantMode mode, int workers,
                              const std::filesystem::path& out_dir);

/// Reverses quantize_model: reconstructs raw f32 tensors plus a model
/// manifest ("manifest.json") in `out_dir`, so the result is itself a valid
/// quantize input.
ModelRunResult dequantize_model(const std::filesystem::path& in_dir, int workers,
                                const std::filesystem::path& out_dir);

}  // namespace ezquant
