#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpscore/banded_lu.hpp"
#include "fpscore/bench.hpp"
#include "fpscore/image_io.hpp"
#include "fpscore/score_io.hpp"
#include "fpscore/synthetic.hpp"

using namespace fpscore;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

struct PrecomputeArgs {
    std::string image_path;
    std::string mode = "iterative";
    int timesteps = 100;
    double g = 0.5;
    double tol = 1e-8;
    double nl_tol = 1e-6;
    double log_floor = 1e-4;
    bool divide_by_h = false;
    std::string out;
    std::string bases_out;
};

int run_precompute(const PrecomputeArgs& args) {
    const Image img = load_image(args.image_path);
    const auto spec = make_grid(img.rows, img.cols, args.timesteps);
    auto params = DiffusionParams::constant(args.g);
    params.lin_tol = args.tol;
    params.nl_tol = args.nl_tol;
    ScoreOptions options;
    options.divide_by_h = args.divide_by_h;
    options.log_floor = args.log_floor;
    const std::string image_id = std::filesystem::path(args.image_path).stem().string();

    std::vector<ScoreTensor> channels;
    for (int c = 0; c < img.channels; ++c) {
        const auto plane = img.plane(c);
        if (args.mode == "direct") {
            channels.push_back(
                precompute_scores(plane, params, spec, SolveMode::direct(), nullptr, options)
                    .scores);
        } else if (args.mode == "iterative") {
            channels.push_back(
                precompute_scores(plane, params, spec, SolveMode::iterative(), nullptr, options)
                    .scores);
        } else {  // recycled: a single image is its own seed
            RecycleConfig cfg;
            cfg.target_tol = args.tol;
            auto seeded = seed_solve(plane, params, spec, cfg, options, {}, image_id);
            if (!args.bases_out.empty()) {
                std::filesystem::create_directories(args.bases_out);
                for (int n = 1; n <= spec.timesteps; ++n) {
                    const auto& basis = seeded.bases[n - 1];
                    if (!basis) continue;
                    char name[128];
                    std::snprintf(name, sizeof(name), "%s_c%d_t%04d.kryb", image_id.c_str(), c, n);
                    save_basis(*basis, std::filesystem::path(args.bases_out) / name);
                }
            }
            channels.push_back(std::move(seeded.run.scores));
        }
    }

    ScoreManifest manifest;
    manifest.image_id = image_id;
    manifest.mode = args.mode;
    manifest.g = args.g;
    manifest.nl_tol = params.nl_tol;
    manifest.nl_max_iter = params.nl_max_iter;
    manifest.lin_tol = params.lin_tol;
    manifest.lin_max_iter = params.lin_max_iter;
    manifest.score_scale = args.divide_by_h ? "half-over-h" : "half";
    save_scores(args.out, channels, manifest);
    std::printf("wrote %s (%d channel%s, T=%d, %dx%d)\n", args.out.c_str(), img.channels,
                img.channels == 1 ? "" : "s", spec.timesteps, spec.rows, spec.cols);
    return kExitOk;
}

struct BenchArgs {
    std::string input_dir;
    int synthetic_n = 0;
    double sigma_p = 0.05;
    std::uint64_t seed = 0;
    int grid = 32;
    int timesteps = 100;
    double g = 0.5;
    int krylov_dim = 20;
    int seed_cycle = 50;
    double target_tol = 1e-8;
    int target_max_iter = 1000;
    double lin_tol = 1e-8;
    int workers = 1;
    bool harvest_all_outer = false;
    bool skip_cold = false;
    std::string report = "bench_report.json";
};

int run_bench(const BenchArgs& args) {
    BatchSpec batch;
    batch.input_dir = args.input_dir;
    batch.synthetic_n = args.synthetic_n;
    batch.sigma_p = args.sigma_p;
    batch.seed = args.seed;
    batch.grid = make_grid(args.grid, args.grid, args.timesteps);
    batch.params = DiffusionParams::constant(args.g);
    batch.params.lin_tol = args.lin_tol;
    batch.recycle.a_max = args.krylov_dim;
    batch.recycle.seed_cycle = args.seed_cycle;
    batch.recycle.target_tol = args.target_tol;
    batch.recycle.target_max_iter = args.target_max_iter;
    batch.seed_policy.harvest_all_outer = args.harvest_all_outer;
    batch.run_cold = !args.skip_cold;
    batch.workers = args.workers;
    batch.report_json = args.report;
    batch.report_csv = std::filesystem::path(args.report).replace_extension(".csv");

    const auto report = run_benchmark(batch);
    std::printf("images: %d   records: %zu\n", report.environment.batch_n, report.records.size());
    for (const auto& [mode, total] : report.aggregates.total_time_per_mode)
        std::printf("  total time %-15s %.3f s\n", mode.c_str(), total);
    if (std::isfinite(report.aggregates.avg_l2_error))
        std::printf("  avg L2 error vs direct   %.6g\n", report.aggregates.avg_l2_error);
    if (std::isfinite(report.aggregates.time_reduction_pct))
        std::printf("  time reduction           %.1f%%\n", report.aggregates.time_reduction_pct);
    if (std::isfinite(report.aggregates.iteration_reduction_pct))
        std::printf("  iteration reduction      %.1f%%\n",
                    report.aggregates.iteration_reduction_pct);
    std::printf("report: %s\n", args.report.c_str());

    for (const auto& rec : report.records)
        if (rec.failed)
            std::fprintf(stderr, "failed: %s [%s] %s\n", rec.image_id.c_str(), rec.mode.c_str(),
                         rec.error.c_str());
    return kExitOk;
}

struct EmbedArgs {
    std::string image_path;
    std::string scores_path;
    std::string rule = "sum";
    std::string out;
};

int run_embed(const EmbedArgs& args) {
    const Image img = load_image(args.image_path);
    const auto loaded = load_scores(args.scores_path);
    if (static_cast<int>(loaded.channels.size()) != img.channels)
        throw std::invalid_argument("embed: score file has " +
                                    std::to_string(loaded.channels.size()) +
                                    " channels, image has " + std::to_string(img.channels));
    const auto& first = loaded.channels.front();
    const auto spec = make_grid(first.rows, first.cols, first.timesteps);
    auto params = DiffusionParams::constant(loaded.manifest.g);

    CombinationRule rule = CombinationRule::Sum;
    if (args.rule == "x") rule = CombinationRule::XOnly;
    else if (args.rule == "y") rule = CombinationRule::YOnly;
    else if (args.rule != "sum")
        throw std::invalid_argument("embed: rule must be sum, x, or y");

    std::vector<EmbeddedSequence> sequences;
    for (int c = 0; c < img.channels; ++c)
        sequences.push_back(embed_scores(img.plane(c), loaded.channels[c], params, spec, rule));
    save_embedded(args.out, sequences);
    std::printf("wrote %s (%d channel%s, %d steps)\n", args.out.c_str(), img.channels,
                img.channels == 1 ? "" : "s", sequences.front().timesteps);
    return kExitOk;
}

struct SolveOneArgs {
    int grid = 32;
    int timesteps = 1;
    double g = 0.5;
    std::uint64_t seed = 0;
    std::string dump_system;
};

int run_solve_one(const SolveOneArgs& args) {
    const auto spec = make_grid(args.grid, args.grid, args.timesteps);
    const auto params = DiffusionParams::constant(args.g);
    const auto image = gen_base_image(args.seed, spec);
    const auto m0 = init_log_density(image, spec);

    const auto coeffs = compute_coefficients(m0, params, spec, 1);
    const auto rhs = assemble_rhs(m0, params, spec, 1);
    const auto sys = to_banded(coeffs, rhs);
    const auto x = lu_solve(lu_factor(sys), rhs);

    const auto ax = sys.matvec(x);
    double rn = 0.0, bn = 0.0;
    for (std::size_t k = 0; k < rhs.size(); ++k) {
        rn += (rhs[k] - ax[k]) * (rhs[k] - ax[k]);
        bn += rhs[k] * rhs[k];
    }
    const double rel = std::sqrt(rn / bn);

    if (!args.dump_system.empty()) {
        nlohmann::json j;
        j["grid"] = {{"H", spec.rows}, {"W", spec.cols}, {"T", spec.timesteps}};
        j["g"] = args.g;
        j["seed"] = args.seed;
        j["n"] = 1;
        j["block"] = sys.block;
        j["bands"] = {{"main", sys.main_diag}, {"sup1", sys.sup1}, {"sub1", sys.sub1},
                      {"supb", sys.supb},      {"subb", sys.subb}};
        j["rhs"] = sys.rhs;
        j["solution"] = x;
        j["lu_relative_residual"] = rel;
        std::ofstream out(args.dump_system);
        if (!out) throw IoError("solve-one: cannot open " + args.dump_system);
        out << j.dump(2) << "\n";
        std::printf("wrote %s\n", args.dump_system.c_str());
    }
    std::printf("solved %dx%d system, LU relative residual %.3e\n", sys.n, sys.n, rel);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fokker-Planck score pre-computation engine"};
    app.require_subcommand(1);

    PrecomputeArgs pre;
    auto* cmd_pre = app.add_subcommand(
        "precompute", "Solve the log-density equation for one image and write its score tensor");
    cmd_pre->add_option("image", pre.image_path, "input image (PGM P5 or PNG)")->required();
    cmd_pre->add_option("--mode", pre.mode, "solver mode")
        ->check(CLI::IsMember({"direct", "iterative", "recycled"}));
    cmd_pre->add_option("--timesteps", pre.timesteps, "timestep count T");
    cmd_pre->add_option("--g", pre.g, "diffusion coefficient");
    cmd_pre->add_option("--tol", pre.tol, "linear-solver relative tolerance");
    cmd_pre->add_option("--nl-tol", pre.nl_tol, "outer-loop relative tolerance");
    cmd_pre->add_option("--floor", pre.log_floor, "intensity floor before the log");
    cmd_pre->add_flag("--divide-by-h", pre.divide_by_h, "scale scores by 1/(2h) instead of 1/2");
    cmd_pre->add_option("--out", pre.out, "output score file")->required();
    cmd_pre->add_option("--bases-out", pre.bases_out,
                        "directory for harvested Krylov bases (recycled mode)");

    BenchArgs bench;
    auto* cmd_bench =
        app.add_subcommand("bench", "Benchmark direct vs cold-start vs recycled solving");
    auto* opt_input = cmd_bench->add_option("--input", bench.input_dir, "directory of images");
    auto* opt_synth =
        cmd_bench->add_option("--synthetic", bench.synthetic_n, "generate N correlated images");
    opt_input->excludes(opt_synth);
    cmd_bench->add_option("--sigma-p", bench.sigma_p, "synthetic perturbation level");
    cmd_bench->add_option("--seed", bench.seed, "synthetic generator seed");
    cmd_bench->add_option("--grid", bench.grid, "grid side length");
    cmd_bench->add_option("--timesteps", bench.timesteps, "timestep count T");
    cmd_bench->add_option("--g", bench.g, "diffusion coefficient");
    cmd_bench->add_option("--krylov-dim", bench.krylov_dim, "subspace cap a_max");
    cmd_bench->add_option("--seed-cycle", bench.seed_cycle, "images per seed cycle");
    cmd_bench->add_option("--target-tol", bench.target_tol, "target-phase tolerance");
    cmd_bench->add_option("--target-max-iter", bench.target_max_iter, "target-phase iteration cap");
    cmd_bench->add_option("--tol", bench.lin_tol, "seed/direct-phase linear tolerance");
    cmd_bench->add_option("--workers", bench.workers, "concurrent target solves per cycle");
    cmd_bench->add_flag("--harvest-all-outer", bench.harvest_all_outer,
                        "harvest bases from every outer iteration's trace");
    cmd_bench->add_flag("--skip-cold", bench.skip_cold, "skip the cold-start baseline pass");
    cmd_bench->add_option("--report", bench.report, "JSON report path");

    EmbedArgs embed;
    auto* cmd_embed =
        app.add_subcommand("embed", "Transport-embed a score tensor into an image sequence");
    cmd_embed->add_option("image", embed.image_path, "input image")->required();
    cmd_embed->add_option("--scores", embed.scores_path, "score tensor file")->required();
    cmd_embed->add_option("--rule", embed.rule, "score combination rule")
        ->check(CLI::IsMember({"sum", "x", "y"}));
    cmd_embed->add_option("--out", embed.out, "output sequence file")->required();

    SolveOneArgs solve_one;
    auto* cmd_solve =
        app.add_subcommand("solve-one", "Assemble and solve a single system (oracle aid)");
    cmd_solve->add_option("--grid", solve_one.grid, "grid side length");
    cmd_solve->add_option("--timesteps", solve_one.timesteps, "timestep count T");
    cmd_solve->add_option("--g", solve_one.g, "diffusion coefficient");
    cmd_solve->add_option("--seed", solve_one.seed, "synthetic image seed");
    cmd_solve->add_option("--dump-system", solve_one.dump_system, "write bands/rhs/solution JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (cmd_pre->parsed()) return run_precompute(pre);
        if (cmd_bench->parsed()) {
            if (bench.input_dir.empty() && bench.synthetic_n < 1)
                throw std::invalid_argument("bench: need --input DIR or --synthetic N");
            return run_bench(bench);
        }
        if (cmd_embed->parsed()) return run_embed(embed);
        if (cmd_solve->parsed()) return run_solve_one(solve_one);
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::out_of_range& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitOk;
}
