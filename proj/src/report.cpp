#include "ezquant/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>

#include <json.hpp>

#include "ezquant/pipeline.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ezquant {

namespace {

using ordered_json = nlohmann::ordered_json;

double reduction_pct(double rtn, double fin) {
    if (rtn <= 0.0) return 0.0;
    return 100.0 * (rtn - fin) / rtn;
}

ReportGroup& group_for(std::map<std::string, ReportGroup>& groups, const std::string& key) {
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) it->second.key = key;
    return it->second;
}

void add_to_group(ReportGroup& g, const ReportRow& r) {
    g.tensors += 1;
    g.params += r.rows * r.cols;
    g.outliers += r.outlier_count;
    g.rtn_error += r.rtn_error;
    g.final_error += r.final_error;
}

void finish_group(ReportGroup& g) {
    g.outlier_fraction = g.params > 0 ? static_cast<double>(g.outliers) /
                                            static_cast<double>(g.params)
                                      : 0.0;
    g.reduction_pct = reduction_pct(g.rtn_error, g.final_error);
}

ordered_json group_json(const ReportGroup& g) {
    ordered_json j;
    j["key"] = g.key;
    j["tensors"] = g.tensors;
    j["params"] = g.params;
    j["outliers"] = g.outliers;
    j["outlier_fraction"] = g.outlier_fraction;
    j["rtn_error"] = g.rtn_error;
    j["final_error"] = g.final_error;
    j["reduction_pct"] = g.reduction_pct;
    return j;
}

}  // namespace

ModelReport model_report(const std::filesystem::path& model_dir) {
    const QuantizedModelManifest qm = load_quantized_manifest(model_dir);

    ModelReport rep;
    std::map<std::string, ReportGroup> roles;
    std::map<int64_t, ReportGroup> layers;

    for (const auto& t : qm.tensors) {
        ReportRow r;
        r.name = t.name;
        r.rows = t.rows;
        r.cols = t.cols;
        r.passthrough = t.passthrough;
        r.role = t.role;
        r.layer = t.layer;
        r.outlier_count = t.outlier_count;
        r.outlier_fraction =
            static_cast<double>(t.outlier_count) / static_cast<double>(t.rows * t.cols);
        r.rtn_error = t.rtn_error;
        r.final_error = t.final_error;
        r.reduction_pct = reduction_pct(t.rtn_error, t.final_error);

        rep.total_params += r.rows * r.cols;
        rep.total_outliers += r.outlier_count;
        rep.total_rtn_error += r.rtn_error;
        rep.total_final_error += r.final_error;

        if (!r.passthrough) {
            if (!r.role.empty()) add_to_group(group_for(roles, r.role), r);
            if (r.layer) {
                auto [it, inserted] = layers.try_emplace(*r.layer);
                if (inserted) it->second.key = std::to_string(*r.layer);
                add_to_group(it->second, r);
            }
        }
        rep.rows.push_back(std::move(r));
    }

    rep.total_fraction = rep.total_params > 0
                             ? static_cast<double>(rep.total_outliers) /
                                   static_cast<double>(rep.total_params)
                             : 0.0;
    for (auto& [k, g] : roles) {
        finish_group(g);
        rep.by_role.push_back(g);
    }
    for (auto& [k, g] : layers) {
        finish_group(g);
        rep.by_layer.push_back(g);
    }
    return rep;
}

TensorFileReport tensor_file_report(const std::filesystem::path& file) {
    const QuantizedWeight q = read_quantized(file);
    TensorFileReport r;
    r.bits = q.bits;
    r.sigma_n = q.outliers.sigma_n;
    r.mean = q.outliers.mean;
    r.stddev = q.outliers.stddev;
    r.rows = q.rows;
    r.cols = q.cols;
    r.outlier_count = q.outliers.size();
    r.outlier_fraction =
        static_cast<double>(r.outlier_count) / static_cast<double>(q.rows * q.cols);
    auto [mn, mx] = std::minmax_element(q.scales.scales.begin(), q.scales.scales.end());
    r.scale_min = *mn;
    r.scale_max = *mx;
    r.packed_bytes = static_cast<int64_t>(q.packed_levels.size());
    return r;
}

void print_report_table(const ModelReport& r, std::ostream& os) {
    char line_buf[256];
    snprintf(line_buf, sizeof line_buf, "%-28s %12s %10s %9s %14s %14s %8s\n", "tensor", "shape",
             "outliers", "frac%", "rtn_error", "final_error", "red%");
    os << line_buf;
    for (const auto& row : r.rows) {
        const std::string shape = std::to_string(row.rows) + "x" + std::to_string(row.cols);
        if (row.passthrough) {
            snprintf(line_buf, sizeof line_buf, "%-28s %12s %10s %9s %14s %14s %8s\n",
                     row.name.c_str(), shape.c_str(), "-", "-", "-", "-", "-");
        } else {
            snprintf(line_buf, sizeof line_buf,
                     "%-28s %12s %10lld %9.4f %14.6g %14.6g %8.2f\n", row.name.c_str(),
                     shape.c_str(), static_cast<long long>(row.outlier_count),
                     100.0 * row.outlier_fraction, row.rtn_error, row.final_error,
                     row.reduction_pct);
        }
        os << line_buf;
    }
    snprintf(line_buf, sizeof line_buf,
             "total: %lld params, %lld outliers (%.4f%%), rtn %.6g, final %.6g, reduction %.2f%%\n",
             static_cast<long long>(r.total_params), static_cast<long long>(r.total_outliers),
             100.0 * r.total_fraction, r.total_rtn_error, r.total_final_error,
             reduction_pct(r.total_rtn_error, r.total_final_error));
    os << line_buf;

    auto print_groups = [&os, &line_buf](const char* title, const std::vector<ReportGroup>& gs) {
        if (gs.empty()) return;
        os << "\nby " << title << ":\n";
        snprintf(line_buf, sizeof line_buf, "%-20s %8s %14s %10s %9s %8s\n", title, "tensors",
                 "params", "outliers", "frac%", "red%");
        os << line_buf;
        for (const auto& g : gs) {
            snprintf(line_buf, sizeof line_buf, "%-20s %8lld %14lld %10lld %9.4f %8.2f\n",
                     g.key.c_str(), static_cast<long long>(g.tensors),
                     static_cast<long long>(g.params), static_cast<long long>(g.outliers),
                     100.0 * g.outlier_fraction, g.reduction_pct);
            os << line_buf;
        }
    };
    print_groups("role", r.by_role);
    print_groups("layer", r.by_layer);
}

std::string report_to_json(const ModelReport& r) {
    ordered_json j;
    j["tensors"] = ordered_json::array();
    for (const auto& row : r.rows) {
        ordered_json e;
        e["name"] = row.name;
        e["rows"] = row.rows;
        e["cols"] = row.cols;
        e["passthrough"] = row.passthrough;
        if (!row.role.empty()) e["role"] = row.role;
        if (row.layer) e["layer"] = *row.layer;
        e["outlier_count"] = row.outlier_count;
        e["outlier_fraction"] = row.outlier_fraction;
        e["rtn_error"] = row.rtn_error;
        e["final_error"] = row.final_error;
        e["reduction_pct"] = row.reduction_pct;
        j["tensors"].push_back(std::move(e));
    }
    j["by_role"] = ordered_json::array();
    for (const auto& g : r.by_role) j["by_role"].push_back(group_json(g));
    j["by_layer"] = ordered_json::array();
    for (const auto& g : r.by_layer) j["by_layer"].push_back(group_json(g));
    j["total_params"] = r.total_params;
    j["total_outliers"] = r.total_outliers;
    j["total_fraction"] = r.total_fraction;
    j["total_rtn_error"] = r.total_rtn_error;
    j["total_final_error"] = r.total_final_error;
    return j.dump(2) + "\n";
}

void print_tensor_report(const TensorFileReport& r, std::ostream& os) {
    char line_buf[256];
    snprintf(line_buf, sizeof line_buf,
             "shape %lldx%lld, %d-bit, sigma_n %.3g\n"
             "mean %.9g, std %.9g\n"
             "outliers %lld (%.4f%%)\n"
             "scales [%.6g, %.6g], packed %lld bytes\n",
             static_cast<long long>(r.rows), static_cast<long long>(r.cols), r.bits,
             static_cast<double>(r.sigma_n), r.mean, r.stddev,
             static_cast<long long>(r.outlier_count), 100.0 * r.outlier_fraction,
             static_cast<double>(r.scale_min), static_cast<double>(r.scale_max),
             static_cast<long long>(r.packed_bytes));
    os << line_buf;
}

std::string tensor_report_to_json(const TensorFileReport& r) {
    ordered_json j;
    j["rows"] = r.rows;
    j["cols"] = r.cols;
    j["bits"] = r.bits;
    j["sigma_n"] = r.sigma_n;
    j["mean"] = r.mean;
    j["stddev"] = r.stddev;
    j["outlier_count"] = r.outlier_count;
    j["outlier_fraction"] = r.outlier_fraction;
    j["scale_min"] = r.scale_min;
    j["scale_max"] = r.scale_max;
    j["packed_bytes"] = r.packed_bytes;
    return j.dump(2) + "\n";
}

std::vector<SweepRow> sigma_sweep(const ModelManifest& manifest, const QuantConfig& base,
                                  const std::vector<float>& sigmas, int workers) {
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");

    std::vector<SweepRow> rows;
    for (float sn : sigmas) {
        QuantConfig cfg = base;
        cfg.sigma_n = sn;
        cfg.validate();

        const int64_t n = static_cast<int64_t>(manifest.tensors.size());
        std::vector<SweepRow> per(static_cast<size_t>(n));
        std::vector<int64_t> params(static_cast<size_t>(n), 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(workers) if (workers > 1 && n > 1)
#endif
        for (int64_t i = 0; i < n; ++i) {
            const auto& t = manifest.tensors[static_cast<size_t>(i)];
            if (t.rows == 1 || t.cols == 1) continue;  // passthrough tensors don't quantize
            const DenseMatrix W = read_tensor_f32(manifest.base_dir / t.file, t.rows, t.cols);
            W.validate();
            const QuantizedWeight q = quantize_tensor(W, cfg, QuantMode::Easyquant);
            per[static_cast<size_t>(i)].outliers = q.outliers.size();
            per[static_cast<size_t>(i)].rtn_error = q.rtn_error.value_or(0.0);
            per[static_cast<size_t>(i)].final_error = q.final_error.value_or(0.0);
            params[static_cast<size_t>(i)] = t.rows * t.cols;
        }

        SweepRow row;
        row.sigma_n = sn;
        int64_t total_params = 0;
        for (int64_t i = 0; i < n; ++i) {
            row.outliers += per[static_cast<size_t>(i)].outliers;
            row.rtn_error += per[static_cast<size_t>(i)].rtn_error;
            row.final_error += per[static_cast<size_t>(i)].final_error;
            total_params += params[static_cast<size_t>(i)];
        }
        row.outlier_fraction = total_params > 0 ? static_cast<double>(row.outliers) /
                                                      static_cast<double>(total_params)
                                                : 0.0;
        rows.push_back(row);
    }
    return rows;
}

void print_sweep_table(const std::vector<SweepRow>& rows, std::ostream& os) {
    char line_buf[256];
    snprintf(line_buf, sizeof line_buf, "%8s %12s %10s %14s %14s\n", "sigma_n", "outliers",
             "frac%", "rtn_error", "final_error");
    os << line_buf;
    for (const auto& r : rows) {
        snprintf(line_buf, sizeof line_buf, "%8.3g %12lld %10.4f %14.6g %14.6g\n",
                 static_cast<double>(r.sigma_n), static_cast<long long>(r.outliers),
                 100.0 * r.outlier_fraction, r.rtn_error, r.final_error);
        os << line_buf;
    }
}

std::string sweep_to_json(const std::vector<SweepRow>& rows) {
    ordered_json j = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json e;
        e["sigma_n"] = r.sigma_n;
        e["outliers"] = r.outliers;
        e["outlier_fraction"] = r.outlier_fraction;
        e["rtn_error"] = r.rtn_error;
        e["final_error"] = r.final_error;
        j.push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

}  // namespace ezquant
