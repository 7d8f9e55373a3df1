#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fpscore/grid.hpp"
#include "fpscore/krylov.hpp"
#include "fpscore/pipeline.hpp"

namespace fpscore {

/// ||a - b||_2 / ||b||_2. Throws when ||b|| is zero.
double l2_rel_error(std::span<const double> a, std::span<const double> b);

/// One benchmark batch: image source, solver configuration, passes to run.
struct BatchSpec {
    std::filesystem::path input_dir;  // when set, load *.pgm / *.png from here
    int synthetic_n = 0;              // otherwise generate a correlated batch
    double sigma_p = 0.05;
    std::uint64_t seed = 0;

    GridSpec grid;
    DiffusionParams params;
    RecycleConfig recycle;
    ScoreOptions score_options;
    SeedPolicy seed_policy;

    bool run_direct = true;
    bool run_cold = true;  // iterative baseline with zero initial guesses
    bool run_recycled = true;
    int workers = 1;  // >1 processes the targets of a cycle concurrently

    std::filesystem::path report_json;  // optional output locations
    std::filesystem::path report_csv;
};

struct ImageRecord {
    std::string image_id;
    std::string mode;  // "direct" | "iterative-cold" | "recycled"
    std::string role;  // "baseline" | "seed" | "target"
    double wall_time_s = 0.0;
    long long bicgstab_iterations = 0;
    // NaN (serialized as null) when the direct baseline is unavailable.
    double l2_rel_error_vs_direct = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string error;
};

struct BenchAggregates {
    std::map<std::string, double> total_time_per_mode;
    double avg_l2_error = std::numeric_limits<double>::quiet_NaN();
    // 100 * (T_direct - T_recycled) / T_direct; NaN when not applicable.
    double time_reduction_pct = std::numeric_limits<double>::quiet_NaN();
    // 100 * (I_cold - I_recycled) / I_cold over target-position records.
    double iteration_reduction_pct = std::numeric_limits<double>::quiet_NaN();
};

struct BenchEnvironment {
    int grid_h = 0;
    int grid_w = 0;
    int timesteps = 0;
    double g = 0.0;
    double nl_tol = 0.0;
    int nl_max_iter = 0;
    double lin_tol = 0.0;
    int lin_max_iter = 0;
    double target_tol = 0.0;
    int target_max_iter = 0;
    int a_max = 0;
    int seed_cycle = 0;
    std::string source;  // "synthetic" | "directory"
    int batch_n = 0;
    double sigma_p = 0.0;
    std::uint64_t seed = 0;
    int workers = 1;
    bool concurrency_enabled = false;
    std::string timing_boundary = "per-image assembly+solve, file I/O excluded";
    std::string timestamp;
};

struct BenchReport {
    std::string version = "1";
    BenchEnvironment environment;
    std::vector<ImageRecord> records;
    BenchAggregates aggregates;
};

/// Recomputes the aggregate block from the records (the same arithmetic
/// run_benchmark uses, so a stored report can be re-derived exactly).
BenchAggregates compute_aggregates(const std::vector<ImageRecord>& records);

/// Runs the requested passes over the batch: direct LU baseline first
/// (timings and reference fields), then the cold-start iterative
/// baseline, then the recycled pass with its seed-cycle structure. A
/// failing image is recorded and skipped, never fatal. Writes the JSON
/// and CSV outputs when paths are set.
BenchReport run_benchmark(const BatchSpec& batch);

std::string report_to_json(const BenchReport& report);
BenchReport report_from_json(const std::string& text);
void write_report_json(const BenchReport& report, const std::filesystem::path& path);
void write_report_csv(const BenchReport& report, const std::filesystem::path& path);

}  // namespace fpscore
