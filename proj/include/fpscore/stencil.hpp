#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fpscore/grid.hpp"

namespace fpscore {

/// Per-pixel coefficients of the implicit five-point operator for one
/// timestep and one outer iteration. Arrays use the flat index order of
/// GridSpec. The diagonal coefficient is pixel-independent but stored
/// per pixel so the matvec reads a single layout.
struct StencilCoefficients {
    int rows = 0;  // H
    int cols = 0;  // W
    int timestep = 0;
    int outer_iter = 0;
    std::vector<double> diag;
    std::vector<double> north;  // couples (i, j) to (i, j+1), flat offset +1
    std::vector<double> south;  // flat offset -1
    std::vector<double> east;   // couples (i, j) to (i+1, j), flat offset +H
    std::vector<double> west;   // flat offset -H

    int size() const { return rows * cols; }
};

/// Pentadiagonal storage of the assembled system A m = b. Bands are
/// indexed by row: sup1[k] = A(k, k+1) and so on, zero where a stencil
/// connection leaves the grid (sup1/sub1 vanish at block boundaries).
struct BandedSystem {
    int n = 0;      // H*W
    int block = 0;  // H, the offset of the east/west bands
    std::vector<double> main_diag;
    std::vector<double> sup1;
    std::vector<double> sub1;
    std::vector<double> supb;  // offset +block
    std::vector<double> subb;  // offset -block
    std::vector<double> rhs;

    std::vector<double> matvec(std::span<const double> x) const;
};

/// Evaluates the linearized stencil coefficients for timestep n with the
/// previous outer iterate m_tilde. Differences of m_tilde treat pixels
/// outside the grid as zero.
StencilCoefficients compute_coefficients(const LogDensityField& m_tilde,
                                         const DiffusionParams& params, const GridSpec& spec,
                                         int n, int outer_iter = 1);

/// Right-hand side b_{i,j} = m_prev/dt - div f / (2h), drift sampled with
/// zero padding outside the grid.
std::vector<double> assemble_rhs(const LogDensityField& m_prev, const DiffusionParams& params,
                                 const GridSpec& spec, int n);

/// Matrix-free application of the five-point operator.
std::vector<double> apply_operator(const StencilCoefficients& coeffs, std::span<const double> m);

/// Lays the coefficients out as five banded diagonals plus the rhs.
BandedSystem to_banded(const StencilCoefficients& coeffs, std::span<const double> rhs);

/// Matrix-free y = A x bound to a coefficient set (kept alive by the caller).
std::function<void(std::span<const double>, std::span<double>)> make_operator(
    const StencilCoefficients& coeffs);

}  // namespace fpscore
