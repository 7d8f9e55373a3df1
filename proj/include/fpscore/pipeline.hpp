#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fpscore/grid.hpp"
#include "fpscore/krylov.hpp"
#include "fpscore/stencil.hpp"

namespace fpscore {

enum class SolverKind { Direct, Iterative, Recycled };

/// Solve strategy for the per-timestep linear systems. Iterative and
/// Recycled read their tolerances from DiffusionParams and RecycleConfig
/// respectively. cold_start makes every inner solve start from zero,
/// discarding all warm-start information; it is the no-reuse baseline the
/// benchmark pits the recycling pipeline against.
struct SolveMode {
    SolverKind kind = SolverKind::Iterative;
    bool cold_start = false;
    RecycleConfig recycle{};

    static SolveMode direct() { return {SolverKind::Direct, false, {}}; }
    static SolveMode iterative(bool cold = false) { return {SolverKind::Iterative, cold, {}}; }
    static SolveMode recycled(RecycleConfig cfg) { return {SolverKind::Recycled, false, cfg}; }
};

/// Score extraction and initialization options. The score is stored as
/// the plain half-difference (divide by 2); divide_by_h additionally
/// divides by h, turning it into the standard central-difference
/// gradient estimate.
struct ScoreOptions {
    bool divide_by_h = false;
    double log_floor = 1e-4;
};

/// Per-timestep solve record.
struct StepStats {
    int timestep = 0;
    int outer_iterations = 0;
    bool outer_converged = false;
    long long linear_iterations = 0;    // BiCGSTAB iterations summed over outer loop
    std::vector<int> inner_iterations;  // per inner solve; empty in Direct mode
    double final_residual = 0.0;        // relative residual of the last inner solve
    bool linear_all_converged = true;
    bool warm_start_used = false;  // projection guess applied at the first outer iteration
    bool basis_fallback = false;   // no usable basis; fell back to a cold start
    double wall_time_s = 0.0;
};

/// What solve_timestep should retain for Krylov harvesting.
enum class TraceMode { None, FinalOuter, AllOuter };

struct TimestepResult {
    LogDensityField field;
    StepStats stats;
    std::vector<std::vector<double>> harvest_trace;
    std::optional<StencilCoefficients> final_coeffs;
};

/// Advances one timestep with the semi-explicit outer iteration: the
/// nonlinear coefficient field is frozen at the previous iterate
/// (m_tilde^(1) = m_prev), each pass solves one linear system, and the
/// loop stops when the relative 2-norm change drops below nl_tol or
/// nl_max_iter is hit (flagged, final iterate returned).
TimestepResult solve_timestep(const LogDensityField& m_prev, const DiffusionParams& params,
                              const GridSpec& spec, int n, const SolveMode& mode,
                              const KrylovBasis* basis = nullptr,
                              TraceMode trace_mode = TraceMode::None);

struct PipelineRun {
    ScoreTensor scores;           // slice t = score of m^t, t = 0..T-1
    LogDensityField final_field;  // m^T
    std::vector<StepStats> steps;
};

/// Central differences of one field, laid out like a ScoreTensor slice.
std::vector<double> central_difference_score(const LogDensityField& field, bool divide_by_h,
                                             double h);

/// Marches the given initial field through all T timesteps.
PipelineRun precompute_from_field(const LogDensityField& m0, const DiffusionParams& params,
                                  const GridSpec& spec, const SolveMode& mode,
                                  const std::vector<std::optional<KrylovBasis>>* bases = nullptr,
                                  const ScoreOptions& options = {});

/// Full per-image run: init_log_density, T solves, score tensor.
PipelineRun precompute_scores(const ImagePlane& image, const DiffusionParams& params,
                              const GridSpec& spec, const SolveMode& mode,
                              const std::vector<std::optional<KrylovBasis>>* bases = nullptr,
                              const ScoreOptions& options = {});

/// Seed-solve harvesting policy. By default the basis is harvested from
/// the final outer iteration's solve of each timestep. Setting
/// harvest_all_outer concatenates the traces of every outer iteration in
/// generation order instead; the first outer iteration contributes the
/// richest directions, which sharpens the projection guesses.
struct SeedPolicy {
    bool harvest_all_outer = false;
};

struct SeedRun {
    PipelineRun run;
    std::vector<std::optional<KrylovBasis>> bases;  // size T; empty slots where harvest failed
};

/// Iterative solve of a seed image that additionally harvests one
/// orthonormal basis per timestep (with the reduced seed operator
/// cached). The numerical result is identical to precompute_scores in
/// Iterative mode with the same tolerances and start policy; trace
/// collection never perturbs the solve.
SeedRun seed_solve(const ImagePlane& image, const DiffusionParams& params, const GridSpec& spec,
                   const RecycleConfig& recycle, const ScoreOptions& options = {},
                   const SeedPolicy& policy = {}, const std::string& image_id = "");

/// Like seed_solve but starting from an explicit initial field.
SeedRun seed_solve_from_field(const LogDensityField& m0, const DiffusionParams& params,
                              const GridSpec& spec, const RecycleConfig& recycle,
                              const ScoreOptions& options = {}, const SeedPolicy& policy = {},
                              const std::string& image_id = "");

enum class CombinationRule { Sum, XOnly, YOnly };

/// Score-embedded image sequence x^0 .. x^T, each slice row-major H x W.
struct EmbeddedSequence {
    int timesteps = 0;  // T
    int rows = 0;
    int cols = 0;
    CombinationRule rule = CombinationRule::Sum;
    std::vector<double> values;  // (T+1) * H * W

    double at(int t, int r, int c) const {
        return values[(static_cast<std::size_t>(t) * rows + r) * cols + c];
    }
    double& at(int t, int r, int c) {
        return values[(static_cast<std::size_t>(t) * rows + r) * cols + c];
    }
};

/// Transport step x^n = x^{n-1} + (f - g^2/2 * score) * dt, with the
/// 2-vector score and drift collapsed to a scalar by the rule. x^0 is the
/// input image, unchanged.
EmbeddedSequence embed_scores(const ImagePlane& image, const ScoreTensor& scores,
                              const DiffusionParams& params, const GridSpec& spec,
                              CombinationRule rule);

}  // namespace fpscore
