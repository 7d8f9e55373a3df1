#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fpscore/banded_lu.hpp"
#include "fpscore/krylov.hpp"
#include "fpscore/vec.hpp"
#include "oracles.hpp"

using namespace fpscore;

namespace {

std::vector<double> canonical(int n, int k) {
    std::vector<double> e(n, 0.0);
    e[k] = 1.0;
    return e;
}

// reduced operator recomputed through the dense oracle
std::vector<double> reduced_via_dense(const KrylovBasis& basis, const std::vector<double>& dense) {
    const int a = basis.a;
    const int n = basis.dim;
    std::vector<double> out(static_cast<std::size_t>(a) * a);
    for (int c = 0; c < a; ++c) {
        std::vector<double> col(basis.column(c).begin(), basis.column(c).end());
        const auto av = oracle::dense_matvec(dense, col);
        for (int r = 0; r < a; ++r) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += basis.column(r)[k] * av[k];
            out[static_cast<std::size_t>(r) * a + c] = acc;
        }
    }
    return out;
}

StencilCoefficients scaled_identity_coeffs(const GridSpec& spec, int n = 1) {
    // g = 0 makes the operator (1/dt) * I
    LogDensityField f{spec.rows, spec.cols, 0, std::vector<double>(spec.cells(), 0.0)};
    return compute_coefficients(f, DiffusionParams::constant(0.0), spec, n);
}

}  // namespace

TEST_CASE("harvest normalizes a single vector") {
    const auto v = oracle::random_vector(32, 1);
    const auto basis = harvest_basis({v}, 20);
    CHECK(basis.a == 1);
    CHECK(norm2(basis.column(0)) == doctest::Approx(1.0).epsilon(1e-14));
    const double scale = v[0] / basis.column(0)[0];
    for (int k = 0; k < 32; ++k)
        CHECK(basis.column(0)[k] * scale == doctest::Approx(v[k]).epsilon(1e-12));
}

TEST_CASE("parallel vectors collapse to one column") {
    auto v = oracle::random_vector(16, 2);
    auto w = v;
    for (double& x : w) x *= -3.5;
    const auto basis = harvest_basis({v, w}, 20);
    CHECK(basis.a == 1);
}

TEST_CASE("harvest caps the basis and keeps it orthonormal") {
    std::vector<std::vector<double>> trace;
    for (unsigned s = 0; s < 30; ++s) trace.push_back(oracle::random_vector(64, 500 + s));
    const auto basis = harvest_basis(trace, 20);
    CHECK(basis.a == 20);
    CHECK(basis.orthonormality_defect() < 1e-10);
}

TEST_CASE("degenerate traces raise EmptyBasisError") {
    CHECK_THROWS_AS(harvest_basis({}, 20), EmptyBasisError);
    CHECK_THROWS_AS(harvest_basis({std::vector<double>(8, 0.0)}, 20), EmptyBasisError);
}

TEST_CASE("reduced operator of canonical vectors is the leading sub-block") {
    const auto spec = make_grid(4, 4, 10);
    const auto mt = oracle::random_smooth_field(spec, 3);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    const auto dense = oracle::dense_from_first_principles(mt, 0.5, nullptr, spec);

    const int a = 5;
    std::vector<std::vector<double>> trace;
    for (int k = 0; k < a; ++k) trace.push_back(canonical(16, k));
    auto basis = harvest_basis(trace, a);
    basis.timestep = 1;
    basis = cache_reduced_operator(std::move(basis), coeffs);

    for (int r = 0; r < a; ++r)
        for (int c = 0; c < a; ++c)
            CHECK(basis.reduced[r * a + c] ==
                  doctest::Approx(dense[static_cast<std::size_t>(r) * 16 + c]).epsilon(1e-12));
}

TEST_CASE("reduced operator of a scaled identity is scaled I_a") {
    const auto spec = make_grid(4, 4, 10);
    const auto coeffs = scaled_identity_coeffs(spec);

    std::vector<std::vector<double>> trace;
    for (unsigned s = 0; s < 6; ++s) trace.push_back(oracle::random_vector(16, 900 + s));
    auto basis = harvest_basis(trace, 6);
    basis.timestep = 1;
    basis = cache_reduced_operator(std::move(basis), coeffs);

    for (int r = 0; r < basis.a; ++r)
        for (int c = 0; c < basis.a; ++c)
            CHECK(basis.reduced[r * basis.a + c] ==
                  doctest::Approx(r == c ? 10.0 : 0.0).epsilon(1e-10));
}

TEST_CASE("cached reduced operator matches a dense recomputation") {
    const auto spec = make_grid(8, 8, 40);
    const auto mt = oracle::random_smooth_field(spec, 7);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    const auto dense = oracle::dense_from_first_principles(mt, 0.5, nullptr, spec);

    std::vector<std::vector<double>> trace;
    for (unsigned s = 0; s < 12; ++s) trace.push_back(oracle::random_vector(64, 40 + s));
    auto basis = harvest_basis(trace, 12);
    basis.timestep = 1;
    basis = cache_reduced_operator(std::move(basis), coeffs);

    const auto ref = reduced_via_dense(basis, dense);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) {
        num += (basis.reduced[k] - ref[k]) * (basis.reduced[k] - ref[k]);
        den += ref[k] * ref[k];
    }
    CHECK(std::sqrt(num / den) < 1e-12);
}

TEST_CASE("timestep mismatch is rejected when caching") {
    const auto spec = make_grid(4, 4, 10);
    const auto coeffs = scaled_identity_coeffs(spec, 2);
    auto basis = harvest_basis({oracle::random_vector(16, 5)}, 4);
    basis.timestep = 1;  // coefficients carry timestep 2
    CHECK_THROWS_AS(cache_reduced_operator(std::move(basis), coeffs), std::invalid_argument);
}

TEST_CASE("projection of an orthogonal rhs is zero") {
    const auto spec = make_grid(4, 4, 10);
    const auto coeffs = scaled_identity_coeffs(spec);
    auto basis = harvest_basis({canonical(16, 0), canonical(16, 1)}, 4);
    basis.timestep = 1;
    basis = cache_reduced_operator(std::move(basis), coeffs);

    auto b = canonical(16, 7);  // orthogonal to both columns
    const auto guess = project_and_guess(basis, b);
    CHECK(!guess.fallback);
    for (double v : guess.x0) CHECK(v == 0.0);
}

TEST_CASE("hand-checked 1x1 reduced solve") {
    // A = 2 I via g = 0, dt = 1/2; V = e1; b = (6, ...) -> alpha = 3
    const auto spec = make_grid(3, 3, 2);
    const auto coeffs = scaled_identity_coeffs(spec);
    auto basis = harvest_basis({canonical(9, 0)}, 1);
    basis.timestep = 1;
    basis = cache_reduced_operator(std::move(basis), coeffs);
    CHECK(basis.reduced[0] == 2.0);

    std::vector<double> b(9, 0.25);
    b[0] = 6.0;
    const auto guess = project_and_guess(basis, b);
    CHECK(guess.x0[0] == 3.0);
    for (int k = 1; k < 9; ++k) CHECK(guess.x0[k] == 0.0);
}

TEST_CASE("full-dimension subspace reconstructs the solution") {
    const auto spec = make_grid(8, 8, 100);
    const auto mt = oracle::random_smooth_field(spec, 9);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    const int n = spec.cells();

    std::vector<std::vector<double>> trace;
    for (int k = 0; k < n; ++k) trace.push_back(oracle::random_vector(n, 700 + k));
    auto basis = harvest_basis(trace, n);
    REQUIRE(basis.a == n);
    basis.timestep = 1;
    basis = cache_reduced_operator(std::move(basis), coeffs);

    const auto b = oracle::random_vector(n, 4242);
    const auto guess = project_and_guess(basis, b);
    const auto ax = apply_operator(coeffs, guess.x0);
    double rn = 0.0;
    for (int k = 0; k < n; ++k) rn += (b[k] - ax[k]) * (b[k] - ax[k]);
    CHECK(std::sqrt(rn) / norm2(b) < 1e-8);
}

TEST_CASE("a singular reduced system falls back to a zero guess") {
    KrylovBasis basis;
    basis.dim = 4;
    basis.a = 1;
    basis.timestep = 1;
    basis.columns = canonical(4, 0);
    basis.reduced = {0.0};
    const auto guess = project_and_guess(basis, std::vector<double>{1.0, 2.0, 3.0, 4.0});
    CHECK(guess.fallback);
    for (double v : guess.x0) CHECK(v == 0.0);
}

TEST_CASE("the guess scales exactly with power-of-two rhs scalings") {
    const auto spec = make_grid(8, 8, 40);
    const auto mt = oracle::random_smooth_field(spec, 11);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    std::vector<std::vector<double>> trace;
    for (unsigned s = 0; s < 10; ++s) trace.push_back(oracle::random_vector(64, 60 + s));
    auto basis = harvest_basis(trace, 10);
    basis.timestep = 1;
    basis = cache_reduced_operator(std::move(basis), coeffs);

    const auto b = oracle::random_vector(64, 1234);
    const auto g1 = project_and_guess(basis, b);
    for (double c : {2.0, 0.5, -4.0}) {
        auto cb = b;
        for (double& v : cb) v *= c;
        const auto g2 = project_and_guess(basis, cb);
        for (int k = 0; k < 64; ++k) CHECK(g2.x0[k] == c * g1.x0[k]);
    }
}

TEST_CASE("solve_target on the seed system needs no more iterations than a cold start") {
    const auto spec = make_grid(16, 16, 20);
    const auto mt = oracle::random_smooth_field(spec, 13);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    std::vector<double> b(spec.cells());
    for (int k = 0; k < spec.cells(); ++k) b[k] = mt.values[k] / spec.dt;

    RecycleConfig cfg;
    cfg.target_tol = 1e-8;
    cfg.target_max_iter = 500;

    // harvest from an actual cold solve of the same system
    const auto seed_solve_res =
        bicgstab(make_operator(coeffs), b, std::vector<double>(b.size(), 0.0), 1e-8, 500, true);
    REQUIRE(seed_solve_res.stats.converged);
    auto basis = harvest_basis(seed_solve_res.stats.trace, cfg.a_max);
    basis.timestep = 1;
    basis = cache_reduced_operator(std::move(basis), coeffs);

    const auto warm = solve_target(coeffs, b, basis, cfg);
    const auto cold =
        bicgstab(make_operator(coeffs), b, std::vector<double>(b.size(), 0.0), cfg.target_tol,
                 cfg.target_max_iter);
    CHECK(warm.warm_start_used);
    CHECK(warm.stats.converged);
    CHECK(warm.stats.iterations <= cold.stats.iterations);
}

TEST_CASE("an empty basis makes solve_target identical to a cold bicgstab") {
    const auto spec = make_grid(8, 8, 40);
    const auto mt = oracle::random_smooth_field(spec, 15);
    const auto coeffs = compute_coefficients(mt, DiffusionParams::constant(0.5), spec, 1);
    const auto b = oracle::random_vector(64, 16);

    KrylovBasis empty;
    empty.dim = 64;
    empty.a = 0;
    empty.timestep = 1;

    RecycleConfig cfg;
    const auto via_target = solve_target(coeffs, b, empty, cfg);
    const auto plain = bicgstab(make_operator(coeffs), b, std::vector<double>(64, 0.0),
                                cfg.target_tol, cfg.target_max_iter);
    CHECK(!via_target.warm_start_used);
    CHECK(via_target.stats.iterations == plain.stats.iterations);
    CHECK(via_target.x == plain.x);
}

TEST_CASE("basis files round-trip and re-verify orthonormality") {
    const auto dir = std::filesystem::temp_directory_path() / "fpscore_basis_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "img0_t3.kryb";

    const auto spec = make_grid(8, 8, 40);
    const auto coeffs = scaled_identity_coeffs(spec, 3);
    std::vector<std::vector<double>> trace;
    for (unsigned s = 0; s < 8; ++s) trace.push_back(oracle::random_vector(64, 80 + s));
    auto basis = harvest_basis(trace, 8);
    basis.timestep = 3;
    basis = cache_reduced_operator(std::move(basis), coeffs);

    save_basis(basis, path);
    const auto loaded = load_basis(path, 3);
    CHECK(loaded.timestep == 3);
    CHECK(loaded.dim == basis.dim);
    CHECK(loaded.a == basis.a);
    CHECK(loaded.columns == basis.columns);
    CHECK(loaded.reduced == basis.reduced);

    SUBCASE("corrupt magic is rejected") {
        std::ofstream f(path, std::ios::binary);
        f << "JUNKJUNKJUNK";
        f.close();
        CHECK_THROWS(load_basis(path));
    }
    SUBCASE("a non-orthonormal payload is rejected") {
        auto broken = basis;
        for (double& v : broken.columns) v *= 1.5;
        save_basis(broken, path);
        CHECK_THROWS(load_basis(path));
    }
    std::filesystem::remove_all(dir);
}
