#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ezquant/rng.hpp"
#include "ezquant/stats.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using ezquant::DenseMatrix;
using ezquant::TensorStats;

namespace {

DenseMatrix gaussian_matrix(int64_t rows, int64_t cols, uint64_t seed, double scale = 1.0) {
    DenseMatrix m(rows, cols);
    ezquant::Rng rng(seed);
    for (auto& v : m.data) v = static_cast<float>(rng.gaussian() * scale);
    return m;
}

}  // namespace

TEST_CASE("mean and std of a small vector with one large element") {
    const DenseMatrix m(1, 5, {0.0f, 0.0f, 0.0f, 0.0f, 100.0f});
    const TensorStats st = ezquant::tensor_stats(m);
    CHECK(st.mean == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(st.stddev == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(st.max_abs == 100.0);
    CHECK(st.count == 5);
}

TEST_CASE("constant matrix has exactly zero standard deviation") {
    for (float c : {0.0f, 1.0f, -3.25f, 1e-8f, 7e6f}) {
        DenseMatrix m(33, 17);
        for (auto& v : m.data) v = c;
        const TensorStats st = ezquant::tensor_stats(m);
        CHECK(st.stddev == 0.0);
        CHECK(st.mean == doctest::Approx(static_cast<double>(c)).epsilon(1e-12));
        CHECK(st.max_abs == std::fabs(static_cast<double>(c)));
    }
}

TEST_CASE("population convention: divide by count") {
    // Var of {1, 3} around mean 2 is ((1)^2 + (1)^2) / 2 = 1.
    const DenseMatrix m(1, 2, {1.0f, 3.0f});
    const TensorStats st = ezquant::tensor_stats(m);
    CHECK(st.mean == 2.0);
    CHECK(st.stddev == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("large gaussian sample lands near its distribution parameters") {
    const DenseMatrix m = gaussian_matrix(1000, 1000, 42);
    const TensorStats st = ezquant::tensor_stats(m);
    CHECK(std::fabs(st.mean) < 0.005);
    CHECK(st.stddev == doctest::Approx(1.0).epsilon(0.005));
    CHECK(st.max_abs > 3.5);  // a million draws reach past 4.5 sigma routinely
    CHECK(st.count == 1000 * 1000);
}

TEST_CASE("serial and parallel paths agree bit for bit") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        // Odd sizes exercise the ragged last chunk.
        const DenseMatrix m = gaussian_matrix(123, 217, seed, 0.05);
        const TensorStats a = ezquant::serial::tensor_stats(m);
        const TensorStats b = ezquant::tensor_stats(m);
        CHECK(a.mean == b.mean);
        CHECK(a.stddev == b.stddev);
        CHECK(a.max_abs == b.max_abs);
        CHECK(a.count == b.count);
    }
}

#ifdef _OPENMP
TEST_CASE("result does not depend on the thread count") {
    const DenseMatrix m = gaussian_matrix(301, 157, 7);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const TensorStats t1 = ezquant::tensor_stats(m);
    omp_set_num_threads(4);
    const TensorStats t4 = ezquant::tensor_stats(m);
    omp_set_num_threads(8);
    const TensorStats t8 = ezquant::tensor_stats(m);
    omp_set_num_threads(saved);
    CHECK(t1.mean == t4.mean);
    CHECK(t1.stddev == t4.stddev);
    CHECK(t1.mean == t8.mean);
    CHECK(t1.stddev == t8.stddev);
    CHECK(t1.max_abs == t8.max_abs);
}
#endif

TEST_CASE("single element") {
    const DenseMatrix m(1, 1, {-2.5f});
    const TensorStats st = ezquant::tensor_stats(m);
    CHECK(st.mean == -2.5);
    CHECK(st.stddev == 0.0);
    CHECK(st.max_abs == 2.5);
}
