#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fpscore/banded_lu.hpp"
#include "fpscore/bicgstab.hpp"
#include "fpscore/vec.hpp"
#include "oracles.hpp"

using namespace fpscore;

namespace {

BandedSystem diagonal_system(std::vector<double> diag) {
    BandedSystem sys;
    sys.n = static_cast<int>(diag.size());
    sys.block = 2;
    sys.main_diag = std::move(diag);
    sys.sup1.assign(sys.n, 0.0);
    sys.sub1.assign(sys.n, 0.0);
    sys.supb.assign(sys.n, 0.0);
    sys.subb.assign(sys.n, 0.0);
    sys.rhs.assign(sys.n, 0.0);
    return sys;
}

BandedSystem assembled_system(const GridSpec& spec, unsigned seed, double g = 0.5) {
    const auto mt = oracle::random_smooth_field(spec, seed);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(g), spec, 1);
    auto b = oracle::random_vector(spec.cells(), seed + 1000);
    return to_banded(coeffs, b);
}

double rel_err(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("banded LU solves a diagonal system") {
    auto sys = diagonal_system({2.0, 4.0});
    const auto fact = lu_factor(sys);
    const auto x = lu_solve(fact, std::vector<double>{2.0, 4.0});
    CHECK(x[0] == 1.0);
    CHECK(x[1] == 1.0);
}

TEST_CASE("banded LU matches the dense oracle on an assembled system") {
    const auto spec = make_grid(8, 8, 100);
    const auto mt = oracle::random_smooth_field(spec, 17);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    const auto b = oracle::random_vector(64, 99);
    const auto sys = to_banded(coeffs, b);

    const auto x_band = lu_solve(lu_factor(sys), b);
    const auto dense = oracle::dense_from_bands(sys);
    const auto x_dense = oracle::dense_gauss_solve(dense, b);
    CHECK(rel_err(x_band, x_dense) < 1e-10);
}

TEST_CASE("banded LU residual contract on assembled systems") {
    for (unsigned seed : {1u, 2u, 3u}) {
        const auto spec = make_grid(12, 12, 60);
        auto sys = assembled_system(spec, seed);
        const auto b = oracle::random_vector(sys.n, seed + 7);
        const auto x = lu_solve(lu_factor(sys), b);
        const auto ax = sys.matvec(x);
        CHECK(rel_err(ax, b) < 1e-10);
    }
}

TEST_CASE("one factorization serves several right-hand sides") {
    const auto spec = make_grid(8, 8, 100);
    const auto sys = assembled_system(spec, 23);
    const auto fact = lu_factor(sys);
    const auto dense = oracle::dense_from_bands(sys);

    SUBCASE("zero rhs gives zero") {
        const auto x = lu_solve(fact, std::vector<double>(64, 0.0));
        for (double v : x) CHECK(v == 0.0);
    }
    SUBCASE("manufactured solution of ones") {
        const auto b = sys.matvec(std::vector<double>(64, 1.0));
        const auto x = lu_solve(fact, b);
        for (double v : x) CHECK(v == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("two sequential solves match independent dense solves") {
        for (unsigned s : {5u, 6u}) {
            const auto b = oracle::random_vector(64, s);
            CHECK(rel_err(lu_solve(fact, b), oracle::dense_gauss_solve(dense, b)) < 1e-10);
        }
    }
}

TEST_CASE("zero matrix raises a singularity error") {
    auto sys = diagonal_system({0.0, 0.0, 0.0});
    CHECK_THROWS_AS(lu_factor(sys), SingularMatrixError);
}

TEST_CASE("lu_solve rejects a wrong-length rhs") {
    const auto fact = lu_factor(diagonal_system({2.0, 4.0}));
    CHECK_THROWS_AS(lu_solve(fact, std::vector<double>(3, 1.0)), std::invalid_argument);
}

TEST_CASE("pivoting handles rows that need interchanges") {
    // sub-diagonal dominant: without pivoting the first pivot would be tiny
    BandedSystem sys = diagonal_system({1e-18, 1e-18, 1e-18, 1e-18});
    sys.n = 4;
    sys.sub1 = {0.0, 3.0, 3.0, 3.0};
    sys.sup1 = {2.0, 2.0, 2.0, 0.0};
    const auto dense = oracle::dense_from_bands(sys);
    const auto b = oracle::random_vector(4, 77);
    const auto x = lu_solve(lu_factor(sys), b);
    CHECK(rel_err(x, oracle::dense_gauss_solve(dense, b)) < 1e-12);
}

TEST_CASE("bicgstab converges immediately from the exact solution") {
    const auto spec = make_grid(8, 8, 100);
    const auto sys = assembled_system(spec, 31);
    const auto b = oracle::random_vector(64, 32);
    const auto exact = lu_solve(lu_factor(sys), b);

    const auto res = bicgstab([&](std::span<const double> x, std::span<double> y) {
        const auto yy = sys.matvec(x);
        std::copy(yy.begin(), yy.end(), y.begin());
    }, b, exact, 1e-8, 100);
    CHECK(res.stats.iterations == 0);
    CHECK(res.stats.converged);
    CHECK(res.stats.final_residual <= 1e-8);
}

TEST_CASE("bicgstab solves a small diagonal system") {
    const std::vector<double> b{2.0, 4.0};
    const auto res = bicgstab([](std::span<const double> x, std::span<double> y) {
        y[0] = 2.0 * x[0];
        y[1] = 4.0 * x[1];
    }, b, std::vector<double>(2, 0.0), 1e-12, 10);
    CHECK(res.stats.converged);
    CHECK(res.stats.iterations <= 2);
    CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(res.x[1] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("bicgstab agrees with banded LU on an assembled 16x16 system") {
    const auto spec = make_grid(16, 16, 100);
    const auto mt = oracle::random_smooth_field(spec, 41);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    const auto b = oracle::random_vector(spec.cells(), 43);
    const auto sys = to_banded(coeffs, b);

    const auto x_lu = lu_solve(lu_factor(sys), b);
    const auto res =
        bicgstab(make_operator(coeffs), b, std::vector<double>(b.size(), 0.0), 1e-8, 500);
    CHECK(res.stats.converged);
    CHECK(rel_err(res.x, x_lu) < 1e-6);
}

TEST_CASE("converged solves satisfy the residual contract under re-verification") {
    for (unsigned seed : {3u, 4u, 5u, 6u}) {
        const auto spec = make_grid(12, 12, 80);
        const auto mt = oracle::random_smooth_field(spec, seed);
        const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
        const auto b = oracle::random_vector(spec.cells(), seed + 50);
        const double tol = 1e-10;
        const auto res =
            bicgstab(make_operator(coeffs), b, std::vector<double>(b.size(), 0.0), tol, 1000);
        REQUIRE(res.stats.converged);

        const auto ax = apply_operator(coeffs, res.x);
        double rn = 0.0;
        for (std::size_t i = 0; i < ax.size(); ++i) rn += (b[i] - ax[i]) * (b[i] - ax[i]);
        CHECK(std::sqrt(rn) <= tol * norm2(b));
    }
}

TEST_CASE("bicgstab is deterministic") {
    const auto spec = make_grid(12, 12, 40);
    const auto sys = assembled_system(spec, 53);
    const auto b = oracle::random_vector(sys.n, 54);
    auto op = [&](std::span<const double> x, std::span<double> y) {
        const auto yy = sys.matvec(x);
        std::copy(yy.begin(), yy.end(), y.begin());
    };
    const auto r1 = bicgstab(op, b, std::vector<double>(b.size(), 0.0), 1e-9, 300);
    const auto r2 = bicgstab(op, b, std::vector<double>(b.size(), 0.0), 1e-9, 300);
    CHECK(r1.stats.iterations == r2.stats.iterations);
    CHECK(r1.x == r2.x);
}

TEST_CASE("trace length stays within 2 iterations + 1") {
    const auto spec = make_grid(8, 8, 100);
    const auto mt = oracle::random_smooth_field(spec, 61);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    const auto b = oracle::random_vector(64, 62);
    const auto res =
        bicgstab(make_operator(coeffs), b, std::vector<double>(64, 0.0), 1e-9, 500, true);
    CHECK(res.stats.converged);
    CHECK(!res.stats.trace.empty());
    CHECK(res.stats.trace.size() <= 2 * static_cast<std::size_t>(res.stats.iterations) + 1);
}

TEST_CASE("warm starts dominate cold starts statistically") {
    std::vector<int> warm_counts, cold_counts;
    for (unsigned seed = 0; seed < 20; ++seed) {
        const auto spec = make_grid(10, 10, 50);
        const auto mt = oracle::random_smooth_field(spec, 70 + seed);
        const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
        const auto b = oracle::random_vector(spec.cells(), 170 + seed);
        const auto sys = to_banded(coeffs, b);
        const auto exact = lu_solve(lu_factor(sys), b);

        auto noisy = exact;
        const auto noise = oracle::random_vector(noisy.size(), 270 + seed);
        const double amp = 0.01 * norm2(exact) / std::sqrt(static_cast<double>(noisy.size()));
        for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += amp * noise[i];

        const auto op = make_operator(coeffs);
        cold_counts.push_back(
            bicgstab(op, b, std::vector<double>(b.size(), 0.0), 1e-10, 1000).stats.iterations);
        warm_counts.push_back(bicgstab(op, b, noisy, 1e-10, 1000).stats.iterations);
    }
    std::sort(warm_counts.begin(), warm_counts.end());
    std::sort(cold_counts.begin(), cold_counts.end());
    CHECK(warm_counts[10] < cold_counts[10]);
}

TEST_CASE("non-convergence is a flag, not an error") {
    const auto spec = make_grid(16, 16, 100);
    const auto mt = oracle::random_smooth_field(spec, 81);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    const auto b = oracle::random_vector(spec.cells(), 82);
    const auto res =
        bicgstab(make_operator(coeffs), b, std::vector<double>(b.size(), 0.0), 1e-12, 2);
    CHECK(!res.stats.converged);
    CHECK(res.stats.iterations == 2);
    CHECK(all_finite(res.x));
    CHECK(res.stats.final_residual > 0.0);
}

TEST_CASE("a vanishing operator triggers a breakdown error with the best iterate") {
    const std::vector<double> b{1.0, 2.0, 3.0};
    const std::vector<double> x0(3, 0.0);
    auto zero_op = [](std::span<const double>, std::span<double> y) {
        std::fill(y.begin(), y.end(), 0.0);
    };
    CHECK_THROWS_AS(bicgstab(zero_op, b, x0, 1e-8, 10), BreakdownError);
    try {
        bicgstab(zero_op, b, x0, 1e-8, 10);
    } catch (const BreakdownError& e) {
        CHECK(e.best_iterate.size() == 3);
        CHECK(e.best_residual == doctest::Approx(1.0));
    }
}

TEST_CASE("zero rhs returns the zero solution") {
    const auto res = bicgstab([](std::span<const double> x, std::span<double> y) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = 2.0 * x[i];
    }, std::vector<double>(4, 0.0), std::vector<double>(4, 1.0), 1e-10, 10);
    CHECK(res.stats.converged);
    for (double v : res.x) CHECK(v == 0.0);
}
