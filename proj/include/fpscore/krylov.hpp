#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpscore/bicgstab.hpp"
#include "fpscore/stencil.hpp"

namespace fpscore {

struct EmptyBasisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Orthonormal basis of the subspace explored while solving one seed
/// system, plus the cached reduced seed operator V^T A_seed V. Immutable
/// once cached; safe to share across concurrent target solves.
struct KrylovBasis {
    int timestep = 0;
    int dim = 0;  // H*W
    int a = 0;    // number of columns
    std::vector<double> columns;  // column-major, dim x a
    std::vector<double> reduced;  // row-major a x a, empty until cached
    std::string source_image_id;

    std::span<const double> column(int c) const {
        return {columns.data() + static_cast<std::size_t>(c) * dim, static_cast<std::size_t>(dim)};
    }
    bool has_reduced() const { return !reduced.empty(); }

    /// max |V^T V - I|, the orthonormality defect.
    double orthonormality_defect() const;
};

struct RecycleConfig {
    int a_max = 20;
    int seed_cycle = 50;
    double target_tol = 1e-8;
    int target_max_iter = 1000;
};

/// Throws std::invalid_argument when fields are out of range.
void validate(const RecycleConfig& config);

/// Modified Gram-Schmidt (with reorthogonalization) over the trace
/// vectors in generation order. A vector whose first-pass projection
/// residual drops below 1e-12 of its original norm is discarded as
/// dependent; harvesting stops at a_max columns. Throws EmptyBasisError
/// when nothing survives.
KrylovBasis harvest_basis(const std::vector<std::vector<double>>& trace, int a_max);

/// Computes and stores V^T A_seed V (a matvecs plus a*a inner products).
/// The seed operator is reused for every target of the cycle, so this
/// runs once per seed per timestep.
KrylovBasis cache_reduced_operator(KrylovBasis basis, const StencilCoefficients& seed_coeffs);

struct ProjectionGuess {
    std::vector<double> x0;
    bool fallback = false;  // reduced system was singular or basis empty
};

/// Solves (V^T A_seed V) alpha = V^T b by dense partial-pivot elimination
/// and lifts x0 = V alpha. A singular reduced system falls back to x0 = 0
/// with the fallback flag set instead of failing.
ProjectionGuess project_and_guess(const KrylovBasis& basis, std::span<const double> b_target);

struct TargetSolveResult {
    std::vector<double> x;
    SolveStats stats;
    bool warm_start_used = false;
};

/// Projection-seeded BiCGSTAB on the true target operator.
TargetSolveResult solve_target(const StencilCoefficients& coeffs_target,
                               std::span<const double> b_target, const KrylovBasis& basis,
                               const RecycleConfig& config);

/// Binary persistence: header {magic "KRYB", version u32, HW u64, a u32},
/// then the columns (column-major f64, little-endian), then the cached
/// a x a reduced operator (row-major f64). The timestep is carried by the
/// file name, not the payload.
void save_basis(const KrylovBasis& basis, const std::filesystem::path& path);

/// Loads a basis and re-verifies orthonormality (defect must stay below
/// 1e-10) before returning.
KrylovBasis load_basis(const std::filesystem::path& path, int timestep = 0);

}  // namespace fpscore
