// End-to-end tests that drive the installed binary the way a user would:
// each case spawns the CLI via the shell and checks exit codes and output
// files. The binary path arrives in EZQUANT_CLI_PATH.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "ezquant/io.hpp"
#include "ezquant/rng.hpp"

namespace fs = std::filesystem;
using ezquant::DenseMatrix;
using nlohmann::json;

namespace {

struct ScopedTempDir {
    fs::path path;

    ScopedTempDir() {
        path = fs::temp_directory_path() /
               ("ezquant_cli_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~ScopedTempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string cli_path() {
#ifdef EZQUANT_CLI_PATH
    return EZQUANT_CLI_PATH;
#else
    const char* p = std::getenv("EZQUANT_CLI_PATH");
    REQUIRE(p != nullptr);
    return p;
#endif
}

fs::path fixture_dir() {
#ifdef EZQUANT_FIXTURE_DIR
    return fs::path(EZQUANT_FIXTURE_DIR);
#else
    const char* dir = std::getenv("EZQUANT_FIXTURE_DIR");
    REQUIRE(dir != nullptr);
    return fs::path(dir);
#endif
}

// Runs `args` against the CLI with stdout/stderr captured into files under
// `dir`; returns the exit code.
int run_cli(const fs::path& dir, const std::string& args, const std::string& env = "") {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    std::string cmd = env;
    if (!env.empty()) cmd += " ";
    cmd += "\"" + cli_path() + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
           err.string() + "\"";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Lays out a small two-layer model with planted outliers and a 1-D bias.
void build_model(const fs::path& dir) {
    fs::create_directories(dir);
    ezquant::ModelManifest m;
    m.base_dir = dir;

    ezquant::Rng rng(301);
    DenseMatrix wq(32, 24);
    for (auto& v : wq.data) v = static_cast<float>(rng.gaussian() * 0.05);
    wq.at(2, 2) = 1.5f;
    DenseMatrix w1(24, 40);
    for (auto& v : w1.data) v = static_cast<float>(rng.gaussian() * 0.05);
    w1.at(7, 31) = -2.0f;
    DenseMatrix bias(1, 24);
    for (auto& v : bias.data) v = static_cast<float>(rng.gaussian());

    ezquant::write_tensor_f32(wq, dir / "wq.bin");
    ezquant::write_tensor_f32(w1, dir / "w1.bin");
    ezquant::write_tensor_f32(bias, dir / "bias.bin");
    m.tensors.push_back({"l0.attn.wq", 32, 24, "f32", "wq.bin", "attention", 0});
    m.tensors.push_back({"l1.mlp.w1", 24, 40, "f32", "w1.bin", "mlp", 1});
    m.tensors.push_back({"l0.bias", 1, 24, "f32", "bias.bin", "attention", 0});
    ezquant::save_manifest(m, dir / "manifest.json");
}

}  // namespace

TEST_CASE("usage errors exit 64") {
    ScopedTempDir tmp;
    CHECK(run_cli(tmp.path, "") == 64);
    CHECK(run_cli(tmp.path, "quantize") == 64);  // missing required options
    CHECK(run_cli(tmp.path, "frobnicate") == 64);
    CHECK(run_cli(tmp.path, "quantize --manifest x --out y --no-such-flag") == 64);
    CHECK(run_cli(tmp.path, "--help") == 0);
    CHECK(run_cli(tmp.path, "quantize --help") == 0);
}

TEST_CASE("bad select string exits 64, bad manifest path exits 66") {
    ScopedTempDir tmp;
    build_model(tmp.path / "model");
    CHECK(run_cli(tmp.path, "quantize --manifest \"" + (tmp.path / "model/manifest.json").string() +
                                "\" --out \"" + (tmp.path / "q").string() +
                                "\" --select sometimes") == 64);
    CHECK(run_cli(tmp.path, "quantize --manifest \"" + (tmp.path / "absent.json").string() +
                                "\" --out \"" + (tmp.path / "q").string() + "\"") == 66);
    CHECK(run_cli(tmp.path, "inspect --in \"" + (tmp.path / "nothing.ezqt").string() + "\"") ==
          66);
}

TEST_CASE("quantize, dequantize, and inspect round trip") {
    ScopedTempDir tmp;
    const fs::path model = tmp.path / "model";
    const fs::path quant = tmp.path / "quant";
    const fs::path back = tmp.path / "back";
    build_model(model);

    CHECK(run_cli(tmp.path, "quantize --manifest \"" + (model / "manifest.json").string() +
                                "\" --out \"" + quant.string() + "\" --steps 40 --workers 2") ==
          0);
    CHECK(fs::exists(quant / "quantized_manifest.json"));
    CHECK(fs::exists(quant / "l0.attn.wq.ezqt"));
    CHECK(fs::exists(quant / "l0.bias.bin"));
    const std::string qlog = slurp(tmp.path / "stdout.txt");
    CHECK(qlog.find("l0.attn.wq") != std::string::npos);
    CHECK(qlog.find("quantized") != std::string::npos);

    CHECK(run_cli(tmp.path, "dequantize --in \"" + quant.string() + "\" --out \"" +
                                back.string() + "\"") == 0);
    CHECK(fs::exists(back / "manifest.json"));
    CHECK(fs::exists(back / "l0.attn.wq.bin"));

    CHECK(run_cli(tmp.path, "inspect --in \"" + quant.string() + "\"") == 0);
    const std::string table = slurp(tmp.path / "stdout.txt");
    CHECK(table.find("l0.attn.wq") != std::string::npos);
    CHECK(table.find("total:") != std::string::npos);

    CHECK(run_cli(tmp.path, "inspect --in \"" + quant.string() + "\" --json") == 0);
    const json j = json::parse(slurp(tmp.path / "stdout.txt"));
    CHECK(j["tensors"].size() == 3);
    CHECK(j["tensors"][0]["name"] == "l0.attn.wq");
}

TEST_CASE("a missing tensor turns into exit 2 and a partial manifest") {
    ScopedTempDir tmp;
    const fs::path model = tmp.path / "model";
    build_model(model);
    fs::remove(model / "w1.bin");

    const int rc = run_cli(tmp.path, "quantize --manifest \"" +
                                         (model / "manifest.json").string() + "\" --out \"" +
                                         (tmp.path / "quant").string() + "\" --steps 20");
    CHECK(rc == 2);
    const std::string log = slurp(tmp.path / "stdout.txt");
    CHECK(log.find("FAILED") != std::string::npos);
    CHECK(fs::exists(tmp.path / "quant" / "quantized_manifest.json"));
}

TEST_CASE("inspect renders the golden fixture") {
    ScopedTempDir tmp;
    const fs::path golden = fixture_dir() / "golden_1x2.ezqt";

    CHECK(run_cli(tmp.path, "inspect --in \"" + golden.string() + "\"") == 0);
    const std::string text = slurp(tmp.path / "stdout.txt");
    CHECK(text.find("1x2") != std::string::npos);
    CHECK(text.find("outliers 2") != std::string::npos);

    CHECK(run_cli(tmp.path, "inspect --in \"" + golden.string() + "\" --json") == 0);
    const json j = json::parse(slurp(tmp.path / "stdout.txt"));
    CHECK(j["rows"] == 1);
    CHECK(j["cols"] == 2);
    CHECK(j["bits"] == 4);
    CHECK(j["outlier_count"] == 2);
    CHECK(j["sigma_n"] == 1.0);
    CHECK(j["packed_bytes"] == 1);
}

TEST_CASE("gradcheck subcommand passes at a reduced trial count") {
    ScopedTempDir tmp;
    CHECK(run_cli(tmp.path, "gradcheck --trials 50 --seed 7") == 0);
    const std::string out = slurp(tmp.path / "stdout.txt");
    CHECK(out.find("50 trials") != std::string::npos);
    CHECK(out.find("0 failures") != std::string::npos);
}

TEST_CASE("bench subcommand emits parseable JSON") {
    ScopedTempDir tmp;
    CHECK(run_cli(tmp.path,
                  "bench --rows 64 --cols 96 --reps 1 --ratios 0.01,0.05 --json") == 0);
    const json j = json::parse(slurp(tmp.path / "stdout.txt"));
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 2);
    CHECK(j[0]["ratio"] == 0.01);
    CHECK(j[0].contains("unpack_ms"));
    CHECK(j[0].contains("scatter_ms"));
}

TEST_CASE("sweep subcommand runs over a sigma list") {
    ScopedTempDir tmp;
    const fs::path model = tmp.path / "model";
    build_model(model);
    CHECK(run_cli(tmp.path, "sweep --manifest \"" + (model / "manifest.json").string() +
                                "\" --sigma-list 2,4 --json") == 0);
    const json j = json::parse(slurp(tmp.path / "stdout.txt"));
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 2);
    CHECK(j[0]["sigma_n"] == 2.0);
    CHECK(j[1]["sigma_n"] == 4.0);
    CHECK(j[0]["outliers"].get<int64_t>() >= j[1]["outliers"].get<int64_t>());
}

TEST_CASE("EZQUANT_WORKERS seeds the default worker count") {
    ScopedTempDir tmp;
    const fs::path model = tmp.path / "model";
    build_model(model);
    CHECK(run_cli(tmp.path, "quantize --manifest \"" + (model / "manifest.json").string() +
                                "\" --out \"" + (tmp.path / "q").string() + "\" --steps 20",
                  "EZQUANT_WORKERS=3") == 0);
    // An invalid value is ignored with a warning, not an error.
    CHECK(run_cli(tmp.path, "quantize --manifest \"" + (model / "manifest.json").string() +
                                "\" --out \"" + (tmp.path / "q2").string() + "\" --steps 20",
                  "EZQUANT_WORKERS=banana") == 0);
    CHECK(slurp(tmp.path / "stderr.txt").find("EZQUANT_WORKERS") != std::string::npos);
}
