#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fpscore/bench.hpp"
#include "fpscore/image_io.hpp"
#include "fpscore/synthetic.hpp"
#include "fpscore/vec.hpp"
#include "oracles.hpp"

using namespace fpscore;

namespace {

BatchSpec small_batch(int n, int grid = 8, int timesteps = 3, std::uint64_t seed = 7) {
    BatchSpec batch;
    batch.synthetic_n = n;
    batch.sigma_p = 0.05;
    batch.seed = seed;
    batch.grid = make_grid(grid, grid, timesteps);
    batch.params = DiffusionParams::constant(0.5);
    batch.recycle.seed_cycle = 2;
    batch.recycle.a_max = 10;
    return batch;
}

}  // namespace

TEST_CASE("l2_rel_error basics") {
    const std::vector<double> b{3.0, 4.0};
    CHECK(l2_rel_error(b, b) == 0.0);
    const std::vector<double> twice{6.0, 8.0};
    CHECK(l2_rel_error(twice, b) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(l2_rel_error(b, std::vector<double>{0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(l2_rel_error(b, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("synthetic batches are deterministic and calibrated") {
    const auto spec = make_grid(16, 16, 5);

    SUBCASE("fixed seed reproduces the batch bitwise") {
        const auto b1 = gen_correlated_batch(99, 5, spec, 0.05);
        const auto b2 = gen_correlated_batch(99, 5, spec, 0.05);
        REQUIRE(b1.size() == 5);
        for (std::size_t k = 0; k < 5; ++k) CHECK(b1[k].pix == b2[k].pix);
    }
    SUBCASE("base image range is [0.1, 0.9]") {
        const auto base = gen_base_image(3, spec);
        double lo = 1.0, hi = 0.0;
        for (double v : base.pix) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(hi == doctest::Approx(0.9).epsilon(1e-12));
    }
    SUBCASE("vanishing sigma gives near-identical images") {
        const auto batch = gen_correlated_batch(5, 4, spec, 1e-12);
        for (int k = 1; k < 4; ++k) {
            double worst = 0.0;
            for (int p = 0; p < spec.cells(); ++p)
                worst = std::max(worst, std::abs(batch[k].pix[p] - batch[0].pix[p]));
            CHECK(worst < 1e-10);
        }
    }
    SUBCASE("noise level matches sigma_p within 20 percent") {
        const double sigma_p = 0.05;
        const auto batch = gen_correlated_batch(11, 41, spec, sigma_p);
        const double base_norm = norm2(batch[0].pix);
        double mean_rel = 0.0;
        for (int k = 1; k < 41; ++k) {
            double d2 = 0.0;
            for (int p = 0; p < spec.cells(); ++p) {
                const double d = batch[k].pix[p] - batch[0].pix[p];
                d2 += d * d;
            }
            mean_rel += std::sqrt(d2) / base_norm;
        }
        mean_rel /= 40.0;
        const double expected = sigma_p * std::sqrt(static_cast<double>(spec.cells())) / base_norm;
        CHECK(mean_rel > 0.8 * expected);
        CHECK(mean_rel < 1.2 * expected);
    }
    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(gen_correlated_batch(1, 1, spec, 0.05), std::invalid_argument);
        CHECK_THROWS_AS(gen_correlated_batch(1, 4, spec, 0.6), std::invalid_argument);
    }
}

TEST_CASE("run_benchmark produces a structured, recomputable report") {
    auto batch = small_batch(4);
    const auto report = run_benchmark(batch);

    // 4 direct + 4 cold + 4 recycled (2 cycles of seed+target)
    CHECK(report.records.size() == 12);
    int seeds = 0, targets = 0;
    for (const auto& rec : report.records) {
        CHECK(!rec.failed);
        if (rec.mode == "direct") {
            CHECK(rec.l2_rel_error_vs_direct == 0.0);
            CHECK(rec.role == "baseline");
        }
        if (rec.mode == "recycled") {
            CHECK(std::isfinite(rec.l2_rel_error_vs_direct));
            if (rec.role == "seed") ++seeds;
            if (rec.role == "target") ++targets;
        }
    }
    CHECK(seeds == 2);
    CHECK(targets == 2);

    const auto recomputed = compute_aggregates(report.records);
    CHECK(recomputed.total_time_per_mode == report.aggregates.total_time_per_mode);
    CHECK(recomputed.avg_l2_error == report.aggregates.avg_l2_error);
    CHECK(recomputed.time_reduction_pct == report.aggregates.time_reduction_pct);
    CHECK(recomputed.iteration_reduction_pct == report.aggregates.iteration_reduction_pct);
    CHECK(std::isfinite(report.aggregates.time_reduction_pct));
    CHECK(std::isfinite(report.aggregates.iteration_reduction_pct));
}

TEST_CASE("reports survive a JSON round-trip with exact numeric columns") {
    auto batch = small_batch(3);
    batch.recycle.seed_cycle = 3;
    const auto report = run_benchmark(batch);
    const auto text = report_to_json(report);
    const auto parsed = report_from_json(text);

    REQUIRE(parsed.records.size() == report.records.size());
    for (std::size_t k = 0; k < report.records.size(); ++k) {
        CHECK(parsed.records[k].image_id == report.records[k].image_id);
        CHECK(parsed.records[k].wall_time_s == report.records[k].wall_time_s);
        CHECK(parsed.records[k].bicgstab_iterations == report.records[k].bicgstab_iterations);
        const double a = parsed.records[k].l2_rel_error_vs_direct;
        const double b = report.records[k].l2_rel_error_vs_direct;
        CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
    }
    const auto recomputed = compute_aggregates(parsed.records);
    CHECK(recomputed.avg_l2_error == parsed.aggregates.avg_l2_error);
    CHECK(recomputed.time_reduction_pct == parsed.aggregates.time_reduction_pct);
    CHECK(recomputed.iteration_reduction_pct == parsed.aggregates.iteration_reduction_pct);
}

TEST_CASE("identical batch specs give identical numeric columns") {
    auto batch = small_batch(4);
    const auto r1 = run_benchmark(batch);
    const auto r2 = run_benchmark(batch);
    REQUIRE(r1.records.size() == r2.records.size());
    for (std::size_t k = 0; k < r1.records.size(); ++k) {
        const double a = r1.records[k].l2_rel_error_vs_direct;
        const double b = r2.records[k].l2_rel_error_vs_direct;
        CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
        CHECK(r1.records[k].bicgstab_iterations == r2.records[k].bicgstab_iterations);
    }
}

TEST_CASE("a single-image batch degenerates to a pure seed solve") {
    auto batch = small_batch(1);
    const auto report = run_benchmark(batch);
    int recycled = 0;
    for (const auto& rec : report.records)
        if (rec.mode == "recycled") {
            ++recycled;
            CHECK(rec.role == "seed");
        }
    CHECK(recycled == 1);
    CHECK(std::isnan(report.aggregates.time_reduction_pct));
}

TEST_CASE("similar batches need fewer target iterations than diverse ones") {
    auto similar = small_batch(6, 12, 4, 21);
    similar.sigma_p = 0.01;
    similar.recycle.seed_cycle = 6;
    similar.run_direct = false;
    similar.run_cold = false;
    auto diverse = similar;
    diverse.sigma_p = 0.2;

    const auto r_similar = run_benchmark(similar);
    const auto r_diverse = run_benchmark(diverse);
    auto target_iters = [](const BenchReport& r) {
        long long total = 0;
        for (const auto& rec : r.records)
            if (rec.mode == "recycled" && rec.role == "target") total += rec.bicgstab_iterations;
        return total;
    };
    CHECK(target_iters(r_similar) < target_iters(r_diverse));
}

TEST_CASE("a bad image degrades the report instead of aborting the batch") {
    const auto dir = std::filesystem::temp_directory_path() / "fpscore_bench_dir";
    std::filesystem::create_directories(dir);
    const auto spec = make_grid(8, 8, 3);
    const auto planes = gen_correlated_batch(5, 3, spec, 0.05);
    save_pgm(dir / "a.pgm", planes[0]);
    save_pgm(dir / "b.pgm", planes[1]);
    {
        ImagePlane wrong{4, 4, std::vector<double>(16, 0.5)};
        save_pgm(dir / "c_wrong_size.pgm", wrong);
        std::ofstream junk(dir / "d_junk.png", std::ios::binary);
        junk << "not a png at all";
    }

    BatchSpec batch;
    batch.input_dir = dir;
    batch.grid = spec;
    batch.params = DiffusionParams::constant(0.5);
    batch.recycle.seed_cycle = 2;
    const auto report = run_benchmark(batch);

    int failed = 0, ok = 0;
    for (const auto& rec : report.records)
        rec.failed ? ++failed : ++ok;
    CHECK(failed == 2);  // the wrong-size image and the junk png
    CHECK(ok == 6);      // 2 loaded images x 3 passes
    CHECK(std::isfinite(report.aggregates.avg_l2_error));
    std::filesystem::remove_all(dir);
}

TEST_CASE("concurrent target workers reproduce the single-worker numbers") {
    auto batch = small_batch(5, 10, 3, 17);
    batch.recycle.seed_cycle = 5;  // one seed, four targets
    batch.run_direct = true;
    const auto serial = run_benchmark(batch);
    batch.workers = 3;
    const auto parallel = run_benchmark(batch);

    REQUIRE(serial.records.size() == parallel.records.size());
    for (std::size_t k = 0; k < serial.records.size(); ++k) {
        CHECK(serial.records[k].image_id == parallel.records[k].image_id);
        CHECK(serial.records[k].bicgstab_iterations == parallel.records[k].bicgstab_iterations);
        const double a = serial.records[k].l2_rel_error_vs_direct;
        const double b = parallel.records[k].l2_rel_error_vs_direct;
        CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
    }
    CHECK(parallel.environment.concurrency_enabled);
    CHECK(!serial.environment.concurrency_enabled);
}

TEST_CASE("benchmark writes report files when asked") {
    const auto dir = std::filesystem::temp_directory_path() / "fpscore_bench_test";
    std::filesystem::create_directories(dir);
    auto batch = small_batch(2);
    batch.report_json = dir / "report.json";
    batch.report_csv = dir / "report.csv";
    const auto report = run_benchmark(batch);
    CHECK(std::filesystem::exists(batch.report_json));
    CHECK(std::filesystem::exists(batch.report_csv));

    std::ifstream f(batch.report_json);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto parsed = report_from_json(text);
    CHECK(parsed.records.size() == report.records.size());
    std::filesystem::remove_all(dir);
}
