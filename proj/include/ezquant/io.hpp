#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ezquant/error.hpp"
#include "ezquant/types.hpp"

namespace ezquant {

/// One tensor entry of a model manifest.
struct ManifestTensor {
    std::string name;
    int64_t rows = 0;
    int64_t cols = 0;
    std::string dtype = "f32";
    std::string file;  // path relative to the manifest's directory
    std::string role;  // optional grouping key for reports ("" if absent)
    std::optional<int64_t> layer;
};

/// Input model description: a JSON file listing raw f32 tensors.
struct ModelManifest {
    int version = 1;
    std::vector<ManifestTensor> tensors;
    std::filesystem::path base_dir;  // directory the manifest was loaded from
};

/// Loads and validates a manifest: version 1, unique names, dtype "f32",
/// positive shapes. Referenced files are checked when the tensor is read,
/// not here. Throws io_error.
ModelManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const ModelManifest& m, const std::filesystem::path& path);

/// Raw tensor payload: rows*cols little-endian f32, row-major, no header.
/// The shape lives in the manifest. Throws io_error on missing file or size
/// mismatch.
DenseMatrix read_tensor_f32(const std::filesystem::path& path, int64_t rows,
                            int64_t cols);
void write_tensor_f32(const DenseMatrix& m, const std::filesystem::path& path);

/// Quantized tensor container, little-endian throughout:
///   magic "EZQT" | version u32 = 1 | k u8 | pad u8[3] | sigma_n f32
///   | mean f64 | std f64 | rows u64 | cols u64
///   | scales: cols x f32
///   | outlier_count u64 | outliers: count x (row u32, col u32, value f32),
///     sorted by (row, col)
///   | packed levels (k=4: two per byte; otherwise one offset byte per level)
/// Readers reject wrong magic, wrong version, truncated payloads, unsorted
/// or out-of-bounds outliers, and non-positive scales, each with the
/// matching IoErrorKind and byte offset. read_quantized(write_quantized(q))
/// reproduces every field bit-exactly; rtn_error/final_error are run
/// provenance and are not part of the file.
void write_quantized(const QuantizedWeight& q, const std::filesystem::path& path);
QuantizedWeight read_quantized(const std::filesystem::path& path);

/// Serializes to/from an in-memory buffer (the file ops wrap these; the
/// golden-fixture test checks bytes directly).
std::vector<uint8_t> encode_quantized(const QuantizedWeight& q);
QuantizedWeight decode_quantized(std::span<const uint8_t> bytes);

/// Maps a tensor name to a safe file stem: characters outside [A-Za-z0-9._-]
/// become '_'. Collisions between distinct names are a format violation.
std::string tensor_file_stem(const std::string& name);

}  // namespace ezquant
