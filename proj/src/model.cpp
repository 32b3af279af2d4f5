#include "ezquant/model.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "ezquant/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ezquant {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kQuantManifestName = "quantized_manifest.json";

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

[[noreturn]] void bad_qmanifest(const std::string& msg) {
    throw io_error(IoErrorKind::FormatViolation, 0, std::string(kQuantManifestName) + ": " + msg);
}

}  // namespace

QuantizedModelManifest load_quantized_manifest(const std::filesystem::path& dir) {
    const auto path = dir / kQuantManifestName;
    std::ifstream in(path);
    if (!in) throw io_error(IoErrorKind::IoFailure, 0, "cannot open " + path.string());

    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        bad_qmanifest(std::string("invalid JSON: ") + e.what());
    }

    if (!j.is_object() || !j.contains("version") || !j["version"].is_number_integer())
        bad_qmanifest("missing integer 'version'");
    const int version = j["version"].get<int>();
    if (version != 1)
        throw io_error(IoErrorKind::VersionMismatch, 0,
                       std::string(kQuantManifestName) + ": version " + std::to_string(version) +
                           ", expected 1");

    QuantizedModelManifest m;
    m.version = version;
    if (j.contains("bits")) m.bits = j["bits"].get<int>();
    if (j.contains("sigma_n")) m.sigma_n = j["sigma_n"].get<float>();
    if (j.contains("mode")) m.mode = j["mode"].get<std::string>();
    if (j.contains("select")) m.select = j["select"].get<std::string>();
    if (j.contains("lr")) m.lr = j["lr"].get<double>();
    if (j.contains("steps")) m.steps = j["steps"].get<int>();
    if (!j.contains("tensors") || !j["tensors"].is_array()) bad_qmanifest("missing 'tensors' array");

    for (const auto& t : j["tensors"]) {
        TensorRecord r;
        if (!t.contains("name") || !t["name"].is_string()) bad_qmanifest("tensor needs 'name'");
        r.name = t["name"].get<std::string>();
        if (!t.contains("file") || !t["file"].is_string())
            bad_qmanifest("tensor '" + r.name + "' needs 'file'");
        r.file = t["file"].get<std::string>();
        if (!t.contains("rows") || !t.contains("cols"))
            bad_qmanifest("tensor '" + r.name + "' needs 'rows' and 'cols'");
        r.rows = t["rows"].get<int64_t>();
        r.cols = t["cols"].get<int64_t>();
        if (r.rows <= 0 || r.cols <= 0) bad_qmanifest("tensor '" + r.name + "' has empty shape");
        if (t.contains("passthrough")) r.passthrough = t["passthrough"].get<bool>();
        if (t.contains("role")) r.role = t["role"].get<std::string>();
        if (t.contains("layer")) r.layer = t["layer"].get<int64_t>();
        if (t.contains("outlier_count")) r.outlier_count = t["outlier_count"].get<int64_t>();
        if (t.contains("rtn_error")) r.rtn_error = t["rtn_error"].get<double>();
        if (t.contains("final_error")) r.final_error = t["final_error"].get<double>();
        m.tensors.push_back(std::move(r));
    }
    return m;
}

void save_quantized_manifest(const QuantizedModelManifest& m, const std::filesystem::path& dir) {
    ordered_json j;
    j["version"] = m.version;
    j["bits"] = m.bits;
    j["sigma_n"] = m.sigma_n;
    j["mode"] = m.mode;
    j["select"] = m.select;
    j["lr"] = m.lr;
    j["steps"] = m.steps;
    j["tensors"] = ordered_json::array();
    for (const auto& r : m.tensors) {
        ordered_json e;
        e["name"] = r.name;
        e["rows"] = r.rows;
        e["cols"] = r.cols;
        e["file"] = r.file;
        e["passthrough"] = r.passthrough;
        if (!r.role.empty()) e["role"] = r.role;
        if (r.layer) e["layer"] = *r.layer;
        if (!r.passthrough) {
            e["outlier_count"] = r.outlier_count;
            e["rtn_error"] = r.rtn_error;
            e["final_error"] = r.final_error;
        }
        j["tensors"].push_back(std::move(e));
    }

    const auto path = dir / kQuantManifestName;
    std::ofstream out(path);
    if (!out) throw io_error(IoErrorKind::IoFailure, 0, "cannot open " + path.string());
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw io_error(IoErrorKind::IoFailure, 0, "short write to " + path.string());
}

ModelRunResult quantize_model(const ModelManifest& manifest, const QuantConfig& cfg,
                              QuantMode mode, int workers, const std::filesystem::path& out_dir) {
    cfg.validate();
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw io_error(IoErrorKind::IoFailure, 0,
                       "cannot create " + out_dir.string() + ": " + ec.message());

    const int64_t n = static_cast<int64_t>(manifest.tensors.size());

    // Resolve output names up front; a stem collision would silently merge
    // two tensors into one file.
    std::set<std::string> stems;
    std::vector<std::string> out_names(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const auto& t = manifest.tensors[static_cast<size_t>(i)];
        const std::string stem = tensor_file_stem(t.name);
        if (!stems.insert(stem).second)
            throw io_error(IoErrorKind::FormatViolation, 0,
                           "tensor names '" + t.name + "' and another entry map to the same file stem '" +
                               stem + "'");
        const bool passthrough = (t.rows == 1 || t.cols == 1);
        out_names[static_cast<size_t>(i)] = stem + (passthrough ? ".bin" : ".ezqt");
    }

    ModelRunResult result;
    result.tensors.resize(static_cast<size_t>(n));

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(workers) if (workers > 1 && n > 1)
#endif
    for (int64_t i = 0; i < n; ++i) {
        const auto& t = manifest.tensors[static_cast<size_t>(i)];
        TensorRunStatus& st = result.tensors[static_cast<size_t>(i)];
        st.name = t.name;
        const double start = now_seconds();
        try {
            const DenseMatrix W = read_tensor_f32(manifest.base_dir / t.file, t.rows, t.cols);
            W.validate();

            TensorRecord rec;
            rec.name = t.name;
            rec.rows = t.rows;
            rec.cols = t.cols;
            rec.file = out_names[static_cast<size_t>(i)];
            rec.role = t.role;
            rec.layer = t.layer;

            if (t.rows == 1 || t.cols == 1) {
                // Vectors (biases, norm gains) pass through in full precision.
                rec.passthrough = true;
                write_tensor_f32(W, out_dir / rec.file);
            } else {
                const QuantizedWeight q = quantize_tensor(W, cfg, mode);
                rec.outlier_count = q.outliers.size();
                rec.rtn_error = q.rtn_error.value_or(0.0);
                rec.final_error = q.final_error.value_or(0.0);
                write_quantized(q, out_dir / rec.file);
            }
            st.record = std::move(rec);
            st.ok = true;
        } catch (const std::exception& e) {
            st.ok = false;
            st.error = e.what();
        }
        st.seconds = now_seconds() - start;
    }

    QuantizedModelManifest qm;
    qm.version = 1;
    qm.bits = cfg.bits;
    qm.sigma_n = cfg.sigma_n;
    qm.mode = quant_mode_name(mode);
    qm.select = cfg.select == SelectPolicy::BestError
                    ? "best"
                    : "step:" + std::to_string(cfg.select_step);
    qm.lr = cfg.lr;
    qm.steps = cfg.steps;
    for (const auto& st : result.tensors) {
        if (st.ok)
            qm.tensors.push_back(st.record);
        else
            ++result.failures;
    }
    save_quantized_manifest(qm, out_dir);
    return result;
}

ModelRunResult dequantize_model(const std::filesystem::path& in_dir, int workers,
                                const std::filesystem::path& out_dir) {
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    const QuantizedModelManifest qm = load_quantized_manifest(in_dir);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw io_error(IoErrorKind::IoFailure, 0,
                       "cannot create " + out_dir.string() + ": " + ec.message());

    const int64_t n = static_cast<int64_t>(qm.tensors.size());
    ModelRunResult result;
    result.tensors.resize(static_cast<size_t>(n));

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(workers) if (workers > 1 && n > 1)
#endif
    for (int64_t i = 0; i < n; ++i) {
        const TensorRecord& r = qm.tensors[static_cast<size_t>(i)];
        TensorRunStatus& st = result.tensors[static_cast<size_t>(i)];
        st.name = r.name;
        const double start = now_seconds();
        try {
            TensorRecord rec = r;
            rec.file = std::filesystem::path(r.file).stem().string() + ".bin";
            if (r.passthrough) {
                const DenseMatrix W = read_tensor_f32(in_dir / r.file, r.rows, r.cols);
                write_tensor_f32(W, out_dir / rec.file);
            } else {
                const QuantizedWeight q = read_quantized(in_dir / r.file);
                if (q.rows != r.rows || q.cols != r.cols)
                    throw io_error(IoErrorKind::FormatViolation, 0,
                                   r.file + ": shape differs from the manifest");
                write_tensor_f32(dequantize_tensor(q), out_dir / rec.file);
            }
            st.record = std::move(rec);
            st.ok = true;
        } catch (const std::exception& e) {
            st.ok = false;
            st.error = e.what();
        }
        st.seconds = now_seconds() - start;
    }

    ModelManifest out_manifest;
    out_manifest.version = 1;
    for (const auto& st : result.tensors) {
        if (!st.ok) {
            ++result.failures;
            continue;
        }
        ManifestTensor mt;
        mt.name = st.record.name;
        mt.rows = st.record.rows;
        mt.cols = st.record.cols;
        mt.dtype = "f32";
        mt.file = st.record.file;
        mt.role = st.record.role;
        mt.layer = st.record.layer;
        out_manifest.tensors.push_back(std::move(mt));
    }
    save_manifest(out_manifest, out_dir / "manifest.json");
    return result;
}

}  // namespace ezquant
