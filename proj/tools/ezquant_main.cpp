// Command-line front end: quantize / dequantize / inspect / gradcheck /
// bench / sweep. Exit codes: 0 success, 1 check failed, 2 partial per-tensor
// failure, 64 usage error, 66 unreadable or malformed files, 70 broken
// internal invariant.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ezquant/bench.hpp"
#include "ezquant/error.hpp"
#include "ezquant/gradcheck.hpp"
#include "ezquant/io.hpp"
#include "ezquant/model.hpp"
#include "ezquant/pipeline.hpp"
#include "ezquant/report.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitPartial = 2;
constexpr int kExitUsage = 64;
constexpr int kExitBadFile = 66;
constexpr int kExitInternal = 70;

int default_workers() {
    if (const char* env = std::getenv("EZQUANT_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 1 && v <= 1024) return static_cast<int>(v);
        std::cerr << "warning: ignoring invalid EZQUANT_WORKERS='" << env << "'\n";
    }
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void apply_select(ezquant::QuantConfig& cfg, const std::string& sel) {
    if (sel == "best") {
        cfg.select = ezquant::SelectPolicy::BestError;
        return;
    }
    if (sel.rfind("step:", 0) == 0) {
        const std::string num = sel.substr(5);
        char* end = nullptr;
        const long v = std::strtol(num.c_str(), &end, 10);
        if (end && *end == '\0' && num.size() > 0 && v >= 0) {
            cfg.select = ezquant::SelectPolicy::FixedStep;
            cfg.select_step = static_cast<int>(v);
            return;
        }
    }
    throw std::invalid_argument("--select expects 'best' or 'step:N', got '" + sel + "'");
}

void print_run_summary(const ezquant::ModelRunResult& result, const char* verb) {
    for (const auto& t : result.tensors) {
        if (t.ok)
            std::printf("  %-28s %s in %.3fs\n", t.name.c_str(), verb, t.seconds);
        else
            std::printf("  %-28s FAILED: %s\n", t.name.c_str(), t.error.c_str());
    }
    if (result.failures > 0)
        std::printf("%d of %zu tensors failed\n", result.failures, result.tensors.size());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-free weight quantizer: n-sigma outlier isolation plus "
                 "per-channel scale optimization"};
    app.require_subcommand(1);

    ezquant::QuantConfig cfg;
    std::string manifest_path, out_dir, in_path, mode_name = "easyquant", select = "best";
    std::vector<float> sigmas = {1.0f, 2.0f, 4.0f, 6.0f};
    std::vector<double> ratios = {0.0001, 0.001, 0.005, 0.01, 0.05, 0.1};
    int workers = default_workers();
    bool as_json = false;
    int trials = 1000;
    uint64_t seed = 0;
    int64_t bench_rows = 2048, bench_cols = 4096;
    int reps = 7;

    auto* quantize = app.add_subcommand("quantize", "Quantize every tensor of a model");
    quantize->add_option("--manifest", manifest_path, "Input model manifest (JSON)")->required();
    quantize->add_option("--out", out_dir, "Output directory")->required();
    quantize->add_option("--bits", cfg.bits, "Quantization width k")->capture_default_str();
    quantize->add_option("--sigma", cfg.sigma_n, "Outlier threshold multiplier n")
        ->capture_default_str();
    quantize->add_option("--lr", cfg.lr, "Adam learning rate")->capture_default_str();
    quantize->add_option("--steps", cfg.steps, "Scale-optimization steps")->capture_default_str();
    quantize->add_option("--select", select, "Scale selection: best | step:N")
        ->capture_default_str();
    quantize->add_option("--workers", workers, "Concurrent tensor tasks")->capture_default_str();
    quantize->add_option("--mode", mode_name, "easyquant | rtn | outliers-only")
        ->capture_default_str();

    auto* dequantize = app.add_subcommand("dequantize", "Reconstruct f32 tensors from a "
                                                        "quantized model directory");
    dequantize->add_option("--in", in_path, "Quantized model directory")->required();
    dequantize->add_option("--out", out_dir, "Output directory")->required();
    dequantize->add_option("--workers", workers, "Concurrent tensor tasks")
        ->capture_default_str();

    auto* inspect = app.add_subcommand("inspect", "Report on a quantized model directory or a "
                                                  "single quantized tensor file");
    inspect->add_option("--in", in_path, "Quantized model directory or .ezqt file")->required();
    inspect->add_flag("--json", as_json, "Emit JSON instead of a table");

    auto* gradcheck = app.add_subcommand("gradcheck", "Check the analytic scale gradient "
                                                      "against finite differences");
    gradcheck->add_option("--trials", trials, "Random trials")->capture_default_str();
    gradcheck->add_option("--seed", seed, "RNG seed")->capture_default_str();

    auto* bench = app.add_subcommand("bench", "Time dequantization phases across outlier ratios");
    bench->add_option("--rows", bench_rows, "Synthetic tensor rows")->capture_default_str();
    bench->add_option("--cols", bench_cols, "Synthetic tensor columns")->capture_default_str();
    bench->add_option("--ratios", ratios, "Comma-separated outlier fractions")->delimiter(',');
    bench->add_option("--reps", reps, "Repetitions per ratio (median reported)")
        ->capture_default_str();
    bench->add_option("--seed", seed, "RNG seed")->capture_default_str();
    bench->add_flag("--json", as_json, "Emit JSON instead of a table");

    auto* sweep = app.add_subcommand("sweep", "Outlier fraction and reconstruction error "
                                              "across sigma thresholds");
    sweep->add_option("--manifest", manifest_path, "Input model manifest (JSON)")->required();
    sweep->add_option("--sigma-list", sigmas, "Comma-separated sigma values")->delimiter(',');
    sweep->add_option("--workers", workers, "Concurrent tensor tasks")->capture_default_str();
    sweep->add_flag("--json", as_json, "Emit JSON instead of a table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the message and usage hint
        return kExitUsage;
    }

    try {
        if (*quantize) {
            apply_select(cfg, select);
            cfg.validate();
            const ezquant::QuantMode mode = ezquant::parse_quant_mode(mode_name);
            const ezquant::ModelManifest m = ezquant::load_manifest(manifest_path);
            const ezquant::ModelRunResult result =
                ezquant::quantize_model(m, cfg, mode, workers, out_dir);
            print_run_summary(result, "quantized");
            return result.failures > 0 ? kExitPartial : kExitOk;
        }

        if (*dequantize) {
            const ezquant::ModelRunResult result =
                ezquant::dequantize_model(in_path, workers, out_dir);
            print_run_summary(result, "reconstructed");
            return result.failures > 0 ? kExitPartial : kExitOk;
        }

        if (*inspect) {
            const std::filesystem::path p(in_path);
            if (std::filesystem::is_directory(p)) {
                const ezquant::ModelReport r = ezquant::model_report(p);
                if (as_json)
                    std::cout << ezquant::report_to_json(r);
                else
                    ezquant::print_report_table(r, std::cout);
            } else {
                const ezquant::TensorFileReport r = ezquant::tensor_file_report(p);
                if (as_json)
                    std::cout << ezquant::tensor_report_to_json(r);
                else
                    ezquant::print_tensor_report(r, std::cout);
            }
            return kExitOk;
        }

        if (*gradcheck) {
            const ezquant::GradcheckResult r = ezquant::run_gradcheck(trials, seed, cfg);
            std::printf("%d trials, %d failures, max relative error %.3g\n", r.trials,
                        r.failures, r.max_rel_err);
            return r.failures == 0 ? kExitOk : kExitCheckFailed;
        }

        if (*bench) {
            const auto rows = ezquant::dequant_bench(bench_rows, bench_cols, ratios, reps, seed);
            if (as_json)
                std::cout << ezquant::bench_to_json(rows);
            else
                ezquant::print_bench_table(rows, std::cout);
            return kExitOk;
        }

        if (*sweep) {
            const ezquant::ModelManifest m = ezquant::load_manifest(manifest_path);
            const auto rows = ezquant::sigma_sweep(m, cfg, sigmas, workers);
            if (as_json)
                std::cout << ezquant::sweep_to_json(rows);
            else
                ezquant::print_sweep_table(rows, std::cout);
            return kExitOk;
        }
    } catch (const ezquant::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadFile;
    } catch (const ezquant::invariant_error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;  // unreachable: a subcommand is required
}
