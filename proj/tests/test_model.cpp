#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ezquant/model.hpp"
#include "ezquant/report.hpp"
#include "ezquant/rng.hpp"
#include "ezquant/rtn.hpp"

namespace fs = std::filesystem;
using ezquant::DenseMatrix;
using ezquant::ManifestTensor;
using ezquant::ModelManifest;
using ezquant::QuantConfig;
using ezquant::QuantMode;

namespace {

struct ScopedTempDir {
    fs::path path;

    ScopedTempDir() {
        path = fs::temp_directory_path() /
               ("ezquant_model_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~ScopedTempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

DenseMatrix gaussian_matrix(int64_t rows, int64_t cols, uint64_t seed, double scale = 0.05) {
    DenseMatrix m(rows, cols);
    ezquant::Rng rng(seed);
    for (auto& v : m.data) v = static_cast<float>(rng.gaussian() * scale);
    return m;
}

// Writes a four-tensor model (three 2-D, one 1-D bias) under dir/ and returns
// the manifest. A couple of large entries are planted so outliers exist.
ModelManifest build_model(const fs::path& dir) {
    ModelManifest m;
    m.base_dir = dir;

    DenseMatrix wq = gaussian_matrix(40, 32, 101);
    wq.at(3, 5) = 2.0f;
    wq.at(20, 30) = -1.5f;
    DenseMatrix wk = gaussian_matrix(40, 32, 102);
    wk.at(0, 0) = 1.75f;
    DenseMatrix w1 = gaussian_matrix(24, 48, 103);
    DenseMatrix bias(1, 32);
    ezquant::Rng rng(104);
    for (auto& v : bias.data) v = static_cast<float>(rng.gaussian());

    ezquant::write_tensor_f32(wq, dir / "wq.bin");
    ezquant::write_tensor_f32(wk, dir / "wk.bin");
    ezquant::write_tensor_f32(w1, dir / "w1.bin");
    ezquant::write_tensor_f32(bias, dir / "bias.bin");

    m.tensors.push_back({"blocks.0.attn.wq", 40, 32, "f32", "wq.bin", "attention", 0});
    m.tensors.push_back({"blocks.0.attn.wk", 40, 32, "f32", "wk.bin", "attention", 0});
    m.tensors.push_back({"blocks.1.mlp.w1", 24, 48, "f32", "w1.bin", "mlp", 1});
    m.tensors.push_back({"blocks.0.attn.bias", 1, 32, "f32", "bias.bin", "attention", 0});
    ezquant::save_manifest(m, dir / "manifest.json");
    return m;
}

QuantConfig fast_config() {
    QuantConfig cfg;
    cfg.steps = 50;
    return cfg;
}

std::map<std::string, std::vector<char>> dir_contents(const fs::path& dir) {
    std::map<std::string, std::vector<char>> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        REQUIRE(in.good());
        out[fs::relative(entry.path(), dir).string()] = {
            std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }
    return out;
}

}  // namespace

TEST_CASE("quantize_model writes one artifact per tensor plus a manifest") {
    ScopedTempDir tmp;
    const fs::path model_dir = tmp.path / "model";
    const fs::path out_dir = tmp.path / "quant";
    fs::create_directories(model_dir);
    const ModelManifest m = build_model(model_dir);

    const ezquant::ModelRunResult res =
        ezquant::quantize_model(m, fast_config(), QuantMode::Easyquant, 1, out_dir);
    CHECK(res.failures == 0);
    REQUIRE(res.tensors.size() == 4);
    for (const auto& st : res.tensors) {
        CHECK(st.ok);
        CHECK(st.seconds >= 0.0);
    }

    CHECK(fs::exists(out_dir / "quantized_manifest.json"));
    CHECK(fs::exists(out_dir / "blocks.0.attn.wq.ezqt"));
    CHECK(fs::exists(out_dir / "blocks.0.attn.wk.ezqt"));
    CHECK(fs::exists(out_dir / "blocks.1.mlp.w1.ezqt"));
    CHECK(fs::exists(out_dir / "blocks.0.attn.bias.bin"));

    const ezquant::QuantizedModelManifest qm = ezquant::load_quantized_manifest(out_dir);
    CHECK(qm.bits == 4);
    CHECK(qm.sigma_n == 3.0f);
    CHECK(qm.mode == "easyquant");
    CHECK(qm.select == "best");
    CHECK(qm.steps == 50);
    REQUIRE(qm.tensors.size() == 4);
    CHECK(qm.tensors[0].name == "blocks.0.attn.wq");
    CHECK(qm.tensors[0].role == "attention");
    CHECK(qm.tensors[0].layer == 0);
    CHECK_FALSE(qm.tensors[0].passthrough);
    CHECK(qm.tensors[0].outlier_count > 0);
    CHECK(qm.tensors[0].final_error <= qm.tensors[0].rtn_error);
    CHECK(qm.tensors[3].passthrough);

    // The planted entries exceed 3 sigma by an order of magnitude.
    const ezquant::QuantizedWeight wq =
        ezquant::read_quantized(out_dir / "blocks.0.attn.wq.ezqt");
    CHECK(wq.outliers.size() >= 2);
}

TEST_CASE("dequantize_model reconstructs tensors and a reusable manifest") {
    ScopedTempDir tmp;
    const fs::path model_dir = tmp.path / "model";
    const fs::path quant_dir = tmp.path / "quant";
    const fs::path back_dir = tmp.path / "back";
    fs::create_directories(model_dir);
    const ModelManifest m = build_model(model_dir);

    REQUIRE(ezquant::quantize_model(m, fast_config(), QuantMode::Easyquant, 1, quant_dir)
                .failures == 0);
    const ezquant::ModelRunResult res = ezquant::dequantize_model(quant_dir, 1, back_dir);
    CHECK(res.failures == 0);

    // Passthrough tensor round-trips bit-exactly.
    const DenseMatrix bias = ezquant::read_tensor_f32(model_dir / "bias.bin", 1, 32);
    const DenseMatrix bias_back =
        ezquant::read_tensor_f32(back_dir / "blocks.0.attn.bias.bin", 1, 32);
    CHECK(bias.data == bias_back.data);

    // Quantized tensors reproduce the recorded reconstruction error: the
    // restored outliers contribute zero, so the full-matrix error equals the
    // masked error up to f32 rounding in the stored scales.
    const ezquant::QuantizedModelManifest qm = ezquant::load_quantized_manifest(quant_dir);
    const DenseMatrix wq = ezquant::read_tensor_f32(model_dir / "wq.bin", 40, 32);
    const DenseMatrix wq_back =
        ezquant::read_tensor_f32(back_dir / "blocks.0.attn.wq.bin", 40, 32);
    const double err = ezquant::reconstruction_error(wq, wq_back);
    CHECK(err == doctest::Approx(qm.tensors[0].final_error).epsilon(1e-4));

    // The dequantized directory is itself a valid model: quantizing it again
    // succeeds for every tensor.
    const ModelManifest again = ezquant::load_manifest(back_dir / "manifest.json");
    REQUIRE(again.tensors.size() == 4);
    const fs::path requant_dir = tmp.path / "requant";
    CHECK(ezquant::quantize_model(again, fast_config(), QuantMode::Easyquant, 1, requant_dir)
              .failures == 0);
}

TEST_CASE("worker count never changes the output bytes") {
    ScopedTempDir tmp;
    const fs::path model_dir = tmp.path / "model";
    fs::create_directories(model_dir);
    const ModelManifest m = build_model(model_dir);

    const QuantConfig cfg = fast_config();
    const fs::path out1 = tmp.path / "w1";
    const fs::path out4 = tmp.path / "w4";
    REQUIRE(ezquant::quantize_model(m, cfg, QuantMode::Easyquant, 1, out1).failures == 0);
    REQUIRE(ezquant::quantize_model(m, cfg, QuantMode::Easyquant, 4, out4).failures == 0);
    CHECK(dir_contents(out1) == dir_contents(out4));

    const fs::path back1 = tmp.path / "b1";
    const fs::path back4 = tmp.path / "b4";
    REQUIRE(ezquant::dequantize_model(out1, 1, back1).failures == 0);
    REQUIRE(ezquant::dequantize_model(out1, 4, back4).failures == 0);
    CHECK(dir_contents(back1) == dir_contents(back4));
}

TEST_CASE("a missing tensor file becomes a per-tensor failure") {
    ScopedTempDir tmp;
    const fs::path model_dir = tmp.path / "model";
    fs::create_directories(model_dir);
    ModelManifest m = build_model(model_dir);
    fs::remove(model_dir / "wk.bin");

    const fs::path out_dir = tmp.path / "quant";
    const ezquant::ModelRunResult res =
        ezquant::quantize_model(m, fast_config(), QuantMode::Easyquant, 1, out_dir);
    CHECK(res.failures == 1);
    REQUIRE(res.tensors.size() == 4);
    CHECK(res.tensors[0].ok);
    CHECK_FALSE(res.tensors[1].ok);
    CHECK_FALSE(res.tensors[1].error.empty());

    // The manifest still appears and lists exactly the successful tensors.
    const ezquant::QuantizedModelManifest qm = ezquant::load_quantized_manifest(out_dir);
    CHECK(qm.tensors.size() == 3);
    for (const auto& rec : qm.tensors) CHECK(rec.name != "blocks.0.attn.wk");
}

TEST_CASE("colliding sanitized file names are rejected up front") {
    ScopedTempDir tmp;
    ModelManifest m;
    m.base_dir = tmp.path;
    DenseMatrix a = gaussian_matrix(4, 4, 110);
    ezquant::write_tensor_f32(a, tmp.path / "a.bin");
    ezquant::write_tensor_f32(a, tmp.path / "b.bin");
    m.tensors.push_back({"w/q", 4, 4, "f32", "a.bin", "", std::nullopt});
    m.tensors.push_back({"w:q", 4, 4, "f32", "b.bin", "", std::nullopt});

    CHECK_THROWS_AS(
        ezquant::quantize_model(m, fast_config(), QuantMode::Easyquant, 1, tmp.path / "out"),
        ezquant::io_error);
}

TEST_CASE("rtn mode propagates through the model manifest") {
    ScopedTempDir tmp;
    const fs::path model_dir = tmp.path / "model";
    fs::create_directories(model_dir);
    const ModelManifest m = build_model(model_dir);

    const fs::path out_dir = tmp.path / "quant";
    REQUIRE(ezquant::quantize_model(m, fast_config(), QuantMode::Rtn, 1, out_dir).failures ==
            0);
    const ezquant::QuantizedModelManifest qm = ezquant::load_quantized_manifest(out_dir);
    CHECK(qm.mode == "rtn");
    for (const auto& rec : qm.tensors) {
        if (rec.passthrough) continue;
        CHECK(rec.outlier_count == 0);
        CHECK(rec.rtn_error == rec.final_error);
    }
}
