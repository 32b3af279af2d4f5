#include "ezquant/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "ezquant/rtn.hpp"

namespace ezquant {

namespace {

using ordered_json = nlohmann::ordered_json;

// ---- little-endian primitives ------------------------------------------------

void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    out.insert(out.end(), b, b + n);
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }
void put_f64(std::vector<uint8_t>& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

// Bounds-checked little-endian reader that reports the byte offset of the
// first missing or malformed datum.
struct Cursor {
    std::span<const uint8_t> buf;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > buf.size())
            throw io_error(IoErrorKind::FormatViolation, pos,
                           std::string("file truncated in ") + what);
    }

    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }

    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }

    uint8_t u8(const char* what) {
        need(1, what);
        return buf[pos++];
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

constexpr char kMagic[4] = {'E', 'Z', 'Q', 'T'};
constexpr uint32_t kVersion = 1;

// ---- JSON field helpers ------------------------------------------------------

[[noreturn]] void bad_manifest(const std::string& msg) {
    throw io_error(IoErrorKind::FormatViolation, 0, "manifest: " + msg);
}

int64_t require_count(const ordered_json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_number_integer())
        bad_manifest(ctx + " needs integer field '" + key + "'");
    const int64_t v = j[key].get<int64_t>();
    if (v <= 0) bad_manifest(ctx + " field '" + key + "' must be positive");
    return v;
}

std::string require_string(const ordered_json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_string())
        bad_manifest(ctx + " needs string field '" + key + "'");
    return j[key].get<std::string>();
}

}  // namespace

// ---- model manifest ------------------------------------------------------------

ModelManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error(IoErrorKind::IoFailure, 0, "cannot open " + path.string());

    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        bad_manifest(std::string("invalid JSON: ") + e.what());
    }

    if (!j.is_object()) bad_manifest("top level must be an object");
    if (!j.contains("version") || !j["version"].is_number_integer())
        bad_manifest("missing integer 'version'");
    const int version = j["version"].get<int>();
    if (version != 1)
        throw io_error(IoErrorKind::VersionMismatch, 0,
                       "manifest version " + std::to_string(version) + ", expected 1");
    if (!j.contains("tensors") || !j["tensors"].is_array())
        bad_manifest("missing 'tensors' array");

    ModelManifest m;
    m.version = version;
    m.base_dir = path.parent_path();

    std::set<std::string> names;
    for (const auto& t : j["tensors"]) {
        if (!t.is_object()) bad_manifest("tensor entries must be objects");
        ManifestTensor mt;
        mt.name = require_string(t, "name", "tensor");
        const std::string ctx = "tensor '" + mt.name + "'";
        if (!names.insert(mt.name).second) bad_manifest("duplicate tensor name '" + mt.name + "'");
        mt.rows = require_count(t, "rows", ctx);
        mt.cols = require_count(t, "cols", ctx);
        mt.dtype = require_string(t, "dtype", ctx);
        if (mt.dtype != "f32") bad_manifest(ctx + " has dtype '" + mt.dtype + "', only f32 in v1");
        mt.file = require_string(t, "file", ctx);
        if (t.contains("role")) {
            if (!t["role"].is_string()) bad_manifest(ctx + " field 'role' must be a string");
            mt.role = t["role"].get<std::string>();
        }
        if (t.contains("layer")) {
            if (!t["layer"].is_number_integer())
                bad_manifest(ctx + " field 'layer' must be an integer");
            mt.layer = t["layer"].get<int64_t>();
        }
        m.tensors.push_back(std::move(mt));
    }
    return m;
}

void save_manifest(const ModelManifest& m, const std::filesystem::path& path) {
    ordered_json j;
    j["version"] = m.version;
    j["tensors"] = ordered_json::array();
    for (const auto& t : m.tensors) {
        ordered_json e;
        e["name"] = t.name;
        e["rows"] = t.rows;
        e["cols"] = t.cols;
        e["dtype"] = t.dtype;
        e["file"] = t.file;
        if (!t.role.empty()) e["role"] = t.role;
        if (t.layer) e["layer"] = *t.layer;
        j["tensors"].push_back(std::move(e));
    }

    std::ofstream out(path);
    if (!out) throw io_error(IoErrorKind::IoFailure, 0, "cannot open " + path.string());
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw io_error(IoErrorKind::IoFailure, 0, "short write to " + path.string());
}

// ---- raw tensors -----------------------------------------------------------------

DenseMatrix read_tensor_f32(const std::filesystem::path& path, int64_t rows, int64_t cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(IoErrorKind::IoFailure, 0, "cannot open " + path.string());

    const size_t count = static_cast<size_t>(rows) * static_cast<size_t>(cols);
    DenseMatrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != count * sizeof(float))
        throw io_error(IoErrorKind::FormatViolation, static_cast<uint64_t>(in.gcount()),
                       path.string() + ": raw tensor shorter than rows*cols*4");
    in.peek();
    if (!in.eof())
        throw io_error(IoErrorKind::FormatViolation, count * sizeof(float),
                       path.string() + ": trailing bytes after rows*cols*4");
    if constexpr (std::endian::native != std::endian::little) {
        for (auto& f : m.data) {
            uint32_t u = std::bit_cast<uint32_t>(f);
            u = __builtin_bswap32(u);
            f = std::bit_cast<float>(u);
        }
    }
    return m;
}

void write_tensor_f32(const DenseMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(IoErrorKind::IoFailure, 0, "cannot open " + path.string());
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(m.data.data()),
                  static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    } else {
        for (float f : m.data) {
            uint32_t u = __builtin_bswap32(std::bit_cast<uint32_t>(f));
            out.write(reinterpret_cast<const char*>(&u), 4);
        }
    }
    out.flush();
    if (!out) throw io_error(IoErrorKind::IoFailure, 0, "short write to " + path.string());
}

// ---- quantized container ---------------------------------------------------------

std::vector<uint8_t> encode_quantized(const QuantizedWeight& q) {
    if (q.rows <= 0 || q.cols <= 0)
        throw std::invalid_argument("cannot encode empty tensor shape");
    if (q.rows > UINT32_MAX || q.cols > UINT32_MAX)
        throw std::invalid_argument("tensor dimensions exceed the 32-bit coordinate range");
    if (q.bits < 2 || q.bits > 8)
        throw std::invalid_argument("bit width " + std::to_string(q.bits) + " outside [2, 8]");
    if (q.scales.size() != q.cols)
        throw std::invalid_argument("scale count does not match column count");
    if (static_cast<int64_t>(q.packed_levels.size()) != packed_size(q.rows * q.cols, q.bits))
        throw std::invalid_argument("packed level payload has the wrong length");

    std::vector<uint8_t> out;
    out.reserve(48 + q.scales.scales.size() * 4 + 8 + q.outliers.entries.size() * 12 +
                q.packed_levels.size());

    put_bytes(out, kMagic, 4);
    put_u32(out, kVersion);
    out.push_back(static_cast<uint8_t>(q.bits));
    out.push_back(0);
    out.push_back(0);
    out.push_back(0);
    put_f32(out, q.outliers.sigma_n);
    put_f64(out, q.outliers.mean);
    put_f64(out, q.outliers.stddev);
    put_u64(out, static_cast<uint64_t>(q.rows));
    put_u64(out, static_cast<uint64_t>(q.cols));

    for (float s : q.scales.scales) {
        if (!(s > 0.0f) || !std::isfinite(s))
            throw std::invalid_argument("scales must be positive and finite");
        put_f32(out, s);
    }

    put_u64(out, static_cast<uint64_t>(q.outliers.entries.size()));
    const OutlierEntry* prev = nullptr;
    for (const auto& e : q.outliers.entries) {
        if (e.row >= static_cast<uint64_t>(q.rows) || e.col >= static_cast<uint64_t>(q.cols))
            throw std::invalid_argument("outlier coordinate out of range");
        if (prev && !(prev->row < e.row || (prev->row == e.row && prev->col < e.col)))
            throw std::invalid_argument("outliers must be strictly sorted by (row, col)");
        prev = &e;
        put_u32(out, e.row);
        put_u32(out, e.col);
        put_f32(out, e.value);
    }

    put_bytes(out, q.packed_levels.data(), q.packed_levels.size());
    return out;
}

QuantizedWeight decode_quantized(std::span<const uint8_t> bytes) {
    Cursor c{bytes};

    c.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw io_error(IoErrorKind::FormatViolation, 0, "bad magic, not a quantized tensor file");
    c.pos = 4;

    const uint32_t version = c.u32("version");
    if (version != kVersion)
        throw io_error(IoErrorKind::VersionMismatch, 4,
                       "file version " + std::to_string(version) + ", reader supports 1");

    QuantizedWeight q;
    const size_t bits_off = c.pos;
    q.bits = c.u8("bits");
    if (q.bits < 2 || q.bits > 8)
        throw io_error(IoErrorKind::FormatViolation, bits_off,
                       "bit width " + std::to_string(q.bits) + " outside [2, 8]");
    c.u8("padding");
    c.u8("padding");
    c.u8("padding");
    q.outliers.sigma_n = c.f32("sigma_n");
    q.outliers.mean = c.f64("mean");
    q.outliers.stddev = c.f64("std");

    const size_t shape_off = c.pos;
    const uint64_t rows = c.u64("rows");
    const uint64_t cols = c.u64("cols");
    if (rows == 0 || cols == 0 || rows > UINT32_MAX || cols > UINT32_MAX)
        throw io_error(IoErrorKind::FormatViolation, shape_off,
                       "shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                           " outside the supported range");
    q.rows = static_cast<int64_t>(rows);
    q.cols = static_cast<int64_t>(cols);

    q.scales.scales.resize(static_cast<size_t>(cols));
    for (uint64_t j = 0; j < cols; ++j) {
        const size_t off = c.pos;
        const float s = c.f32("scales");
        if (!(s > 0.0f) || !std::isfinite(s))
            throw io_error(IoErrorKind::FormatViolation, off,
                           "scale " + std::to_string(j) + " is not positive and finite");
        q.scales.scales[static_cast<size_t>(j)] = s;
    }

    const uint64_t count = c.u64("outlier count");
    if (count > rows * cols)
        throw io_error(IoErrorKind::FormatViolation, c.pos - 8,
                       "outlier count exceeds element count");
    q.outliers.entries.resize(static_cast<size_t>(count));
    for (uint64_t i = 0; i < count; ++i) {
        const size_t off = c.pos;
        OutlierEntry e;
        e.row = c.u32("outliers");
        e.col = c.u32("outliers");
        e.value = c.f32("outliers");
        if (e.row >= rows || e.col >= cols)
            throw io_error(IoErrorKind::FormatViolation, off, "outlier coordinate out of range");
        if (i > 0) {
            const OutlierEntry& p = q.outliers.entries[static_cast<size_t>(i - 1)];
            if (!(p.row < e.row || (p.row == e.row && p.col < e.col)))
                throw io_error(IoErrorKind::FormatViolation, off,
                               "outliers not strictly sorted by (row, col)");
        }
        q.outliers.entries[static_cast<size_t>(i)] = e;
    }

    const int64_t packed = packed_size(q.rows * q.cols, q.bits);
    c.need(static_cast<size_t>(packed), "packed levels");
    q.packed_levels.assign(bytes.begin() + static_cast<int64_t>(c.pos),
                           bytes.begin() + static_cast<int64_t>(c.pos) + packed);
    c.pos += static_cast<size_t>(packed);

    if (c.pos != bytes.size())
        throw io_error(IoErrorKind::FormatViolation, c.pos, "trailing bytes after packed levels");

    if (q.bits != 4) {
        // Nibbles can encode any k=4 level; wider codes must stay in range.
        unpack_levels(q.packed_levels, q.rows * q.cols, q.bits);
    }
    return q;
}

void write_quantized(const QuantizedWeight& q, const std::filesystem::path& path) {
    const std::vector<uint8_t> bytes = encode_quantized(q);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(IoErrorKind::IoFailure, 0, "cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw io_error(IoErrorKind::IoFailure, 0, "short write to " + path.string());
}

QuantizedWeight read_quantized(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw io_error(IoErrorKind::IoFailure, 0, "cannot open " + path.string());
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (in.gcount() != size)
        throw io_error(IoErrorKind::IoFailure, static_cast<uint64_t>(in.gcount()),
                       "read failed on " + path.string());
    try {
        return decode_quantized(bytes);
    } catch (const io_error& e) {
        throw io_error(e.kind(), e.offset(), path.string() + ": " + e.what());
    }
}

std::string tensor_file_stem(const std::string& name) {
    std::string out = name;
    for (char& ch : out) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                        (ch >= '0' && ch <= '9') || ch == '.' || ch == '_' || ch == '-';
        if (!ok) ch = '_';
    }
    if (out.empty()) out = "_";
    return out;
}

}  // namespace ezquant
