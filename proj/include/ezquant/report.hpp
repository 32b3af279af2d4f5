#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ezquant/io.hpp"
#include "ezquant/model.hpp"

namespace ezquant {

struct ReportRow {
    std::string name;
    int64_t rows = 0;
    int64_t cols = 0;
    bool passthrough = false;
    std::string role;
    std::optional<int64_t> layer;
    int64_t outlier_count = 0;
    double outlier_fraction = 0.0;
    double rtn_error = 0.0;
    double final_error = 0.0;
    double reduction_pct = 0.0;  // 100 * (rtn - final) / rtn, 0 when rtn == 0
};

/// Aggregation of rows sharing a role or a layer index.
struct ReportGroup {
    std::string key;
    int64_t tensors = 0;
    int64_t params = 0;
    int64_t outliers = 0;
    double outlier_fraction = 0.0;
    double rtn_error = 0.0;
    double final_error = 0.0;
    double reduction_pct = 0.0;
};

struct ModelReport {
    std::vector<ReportRow> rows;       // manifest order
    std::vector<ReportGroup> by_role;  // sorted by key; present roles only
    std::vector<ReportGroup> by_layer; // sorted numerically; present layers only
    int64_t total_params = 0;
    int64_t total_outliers = 0;
    double total_fraction = 0.0;
    double total_rtn_error = 0.0;
    double total_final_error = 0.0;
};

/// Builds the per-tensor and grouped statistics for a quantized model
/// directory (errors come from its manifest; outlier counts from the tensor
/// files).
ModelReport model_report(const std::filesystem::path& model_dir);

/// Summary of a single quantized tensor file, for inspecting fixtures and
/// individual outputs. Errors are not stored in the file, so none appear.
struct TensorFileReport {
    int bits = 0;
    float sigma_n = 0.0f;
    double mean = 0.0;
    double stddev = 0.0;
    int64_t rows = 0;
    int64_t cols = 0;
    int64_t outlier_count = 0;
    double outlier_fraction = 0.0;
    float scale_min = 0.0f;
    float scale_max = 0.0f;
    int64_t packed_bytes = 0;
};

TensorFileReport tensor_file_report(const std::filesystem::path& file);

/// Renderers. JSON output is schema-stable: fields may be added, never
/// removed or renamed, without a version bump.
void print_report_table(const ModelReport& r, std::ostream& os);
std::string report_to_json(const ModelReport& r);
void print_tensor_report(const TensorFileReport& r, std::ostream& os);
std::string tensor_report_to_json(const TensorFileReport& r);

/// One sigma value of a threshold sweep over a model.
struct SweepRow {
    float sigma_n = 0.0f;
    int64_t outliers = 0;
    double outlier_fraction = 0.0;
    double rtn_error = 0.0;    // summed over tensors, at initial scales
    double final_error = 0.0;  // summed over tensors, at optimized scales
};

/// Quantizes the whole model once per sigma (in memory, nothing written) and
/// reports aggregate outlier fractions and reconstruction errors.
std::vector<SweepRow> sigma_sweep(const ModelManifest& manifest,
                                  const QuantConfig& base,
                                  const std::vector<float>& sigmas, int workers);

void print_sweep_table(const std::vector<SweepRow>& rows, std::ostream& os);
std::string sweep_to_json(const std::vector<SweepRow>& rows);

}  // namespace ezquant
