#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fpscore {

/// y = A x, dimensions fixed by the caller.
using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

/// Outcome of one iterative solve. When collect_trace was requested, trace
/// holds the residual and search-direction vectors in generation order
/// (r0, p1, r1, p2, r2, ...), at most 2*iterations + 1 entries.
struct SolveStats {
    int iterations = 0;
    double final_residual = 0.0;  // relative: ||b - A x|| / ||b||
    double wall_time_s = 0.0;
    bool converged = false;
    std::vector<std::vector<double>> trace;
};

/// rho or omega collapsed; carries the best iterate seen so far.
struct BreakdownError : std::runtime_error {
    BreakdownError(const std::string& what, std::vector<double> best, double residual)
        : std::runtime_error(what), best_iterate(std::move(best)), best_residual(residual) {}
    std::vector<double> best_iterate;
    double best_residual;  // relative
};

struct BicgstabResult {
    std::vector<double> x;
    SolveStats stats;
};

/// Classical BiCGSTAB (single stabilization, shadow residual = r0), no
/// preconditioning. Convergence is declared on the true residual: once
/// the recurrence residual passes tol * ||b||, an explicit matvec
/// re-verifies it before the solve returns. Non-convergence within
/// max_iter is reported through stats (best iterate returned, not an
/// error); rho/omega breakdown throws BreakdownError.
BicgstabResult bicgstab(const LinearOperator& op, std::span<const double> b,
                        std::span<const double> x0, double tol, int max_iter,
                        bool collect_trace = false);

}  // namespace fpscore
