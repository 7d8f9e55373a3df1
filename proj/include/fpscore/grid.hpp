#pragma once

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace fpscore {

/// Square pixel grid with uniform time discretization.
///
/// Grid coordinates are the 1-based pair (i, j) with i in [1, W] indexing
/// columns (the x direction) and j in [1, H] indexing rows (the y direction).
/// The flattened system index walks j fastest: k = (i-1)*H + (j-1).
struct GridSpec {
    int rows = 0;       // H
    int cols = 0;       // W
    int timesteps = 0;  // T
    double h = 0.0;     // spatial spacing, 1/H
    double dt = 0.0;    // temporal spacing, 1/T

    int cells() const { return rows * cols; }
};

/// Builds a GridSpec. Requires H == W, H >= 3, T >= 1.
GridSpec make_grid(int H, int W, int T);

/// Flat index of grid point (i, j); see GridSpec for the convention.
int flatten_index(const GridSpec& spec, int i, int j);

/// Inverse of flatten_index: k -> (i, j).
std::pair<int, int> unflatten_index(const GridSpec& spec, int k);

/// Forward-SDE configuration plus solver tolerances.
///
/// g_schedule maps a timestep index to the diffusion coefficient g^n and
/// f_field maps (i, j, n) to the drift vector (f_x, f_y). Both accept
/// index 0 (used by the transport embedding step). Leaving f_field empty
/// means identically zero drift.
struct DiffusionParams {
    std::function<double(int)> g_schedule;
    std::function<std::array<double, 2>(int, int, int)> f_field;
    double nl_tol = 1e-6;   // outer-loop relative-change tolerance
    int nl_max_iter = 50;   // outer-loop cap
    double lin_tol = 1e-8;  // linear-solver relative residual tolerance
    int lin_max_iter = 1000;

    bool has_drift() const { return static_cast<bool>(f_field); }

    /// Constant diffusion coefficient, zero drift.
    static DiffusionParams constant(double g);
};

/// Throws std::invalid_argument when tolerances are out of range.
void validate(const DiffusionParams& params);

/// One timestep's log-density values m_{i,j}, stored in flat index order.
struct LogDensityField {
    int rows = 0;  // H
    int cols = 0;  // W
    int timestep = 0;
    std::vector<double> values;  // length H*W, index k = (i-1)*H + (j-1)

    double at(int i, int j) const { return values[(i - 1) * rows + (j - 1)]; }
    double& at(int i, int j) { return values[(i - 1) * rows + (j - 1)]; }
};

/// Single-channel image, row-major with pixel (r, c) at pix[r*cols + c].
/// Pixel (r, c) corresponds to grid point (i = c+1, j = r+1).
struct ImagePlane {
    int rows = 0;
    int cols = 0;
    std::vector<double> pix;

    double at_rc(int r, int c) const { return pix[r * cols + c]; }
    double& at_rc(int r, int c) { return pix[r * cols + c]; }
};

/// m^0 = log(max(pixel, floor)). Throws on dimension mismatch or a floor
/// outside (0, 1).
LogDensityField init_log_density(const ImagePlane& image, const GridSpec& spec, double floor = 1e-4);

/// Per-pixel score vectors for T timesteps. Slice t holds the central
/// differences of the field at timestep t (t = 0 is the initial field).
/// Component 0 is the i-direction difference, component 1 the j-direction.
struct ScoreTensor {
    int timesteps = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // ordered (t, i, j, component)

    std::size_t index(int t, int i, int j, int comp) const {
        return ((static_cast<std::size_t>(t) * cols + (i - 1)) * rows + (j - 1)) * 2 + comp;
    }
    double at(int t, int i, int j, int comp) const { return data[index(t, i, j, comp)]; }
    double& at(int t, int i, int j, int comp) { return data[index(t, i, j, comp)]; }
};

}  // namespace fpscore
