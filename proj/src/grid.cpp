#include "fpscore/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace fpscore {

GridSpec make_grid(int H, int W, int T) {
    if (H != W)
        throw std::invalid_argument("make_grid: grid must be square, got " + std::to_string(H) +
                                    "x" + std::to_string(W));
    if (H < 3)
        throw std::invalid_argument("make_grid: grid side must be at least 3, got " +
                                    std::to_string(H));
    if (T < 1)
        throw std::invalid_argument("make_grid: timestep count must be at least 1, got " +
                                    std::to_string(T));
    GridSpec spec;
    spec.rows = H;
    spec.cols = W;
    spec.timesteps = T;
    spec.h = 1.0 / H;
    spec.dt = 1.0 / T;
    return spec;
}

int flatten_index(const GridSpec& spec, int i, int j) {
    if (i < 1 || i > spec.cols || j < 1 || j > spec.rows)
        throw std::out_of_range("flatten_index: (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") outside " + std::to_string(spec.cols) + "x" +
                                std::to_string(spec.rows) + " grid");
    return (i - 1) * spec.rows + (j - 1);
}

std::pair<int, int> unflatten_index(const GridSpec& spec, int k) {
    if (k < 0 || k >= spec.cells())
        throw std::out_of_range("unflatten_index: flat index " + std::to_string(k) +
                                " outside grid of " + std::to_string(spec.cells()) + " cells");
    return {k / spec.rows + 1, k % spec.rows + 1};
}

DiffusionParams DiffusionParams::constant(double g) {
    DiffusionParams p;
    p.g_schedule = [g](int) { return g; };
    return p;
}

void validate(const DiffusionParams& params) {
    if (!params.g_schedule)
        throw std::invalid_argument("DiffusionParams: g_schedule is required");
    if (!(params.nl_tol > 0.0 && params.nl_tol < 1.0))
        throw std::invalid_argument("DiffusionParams: nl_tol must lie in (0, 1)");
    if (!(params.lin_tol > 0.0 && params.lin_tol < 1.0))
        throw std::invalid_argument("DiffusionParams: lin_tol must lie in (0, 1)");
    if (params.nl_max_iter < 1 || params.lin_max_iter < 1)
        throw std::invalid_argument("DiffusionParams: iteration caps must be positive");
}

LogDensityField init_log_density(const ImagePlane& image, const GridSpec& spec, double floor) {
    if (image.rows != spec.rows || image.cols != spec.cols)
        throw std::invalid_argument("init_log_density: image is " + std::to_string(image.rows) +
                                    "x" + std::to_string(image.cols) + ", grid expects " +
                                    std::to_string(spec.rows) + "x" + std::to_string(spec.cols));
    if (!(floor > 0.0 && floor < 1.0))
        throw std::invalid_argument("init_log_density: floor must lie in (0, 1)");

    LogDensityField field;
    field.rows = spec.rows;
    field.cols = spec.cols;
    field.timestep = 0;
    field.values.resize(static_cast<std::size_t>(spec.cells()));
    for (int r = 0; r < image.rows; ++r)
        for (int c = 0; c < image.cols; ++c)
            field.at(c + 1, r + 1) = std::log(std::max(image.at_rc(r, c), floor));
    return field;
}

}  // namespace fpscore
