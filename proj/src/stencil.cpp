#include "fpscore/stencil.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fpscore/vec.hpp"

namespace fpscore {

namespace {

void check_field(const LogDensityField& f, const GridSpec& spec, const char* who) {
    if (f.rows != spec.rows || f.cols != spec.cols ||
        f.values.size() != static_cast<std::size_t>(spec.cells()))
        throw std::invalid_argument(std::string(who) + ": field dimensions do not match grid");
    if (!all_finite(f.values))
        throw std::invalid_argument(std::string(who) + ": field contains non-finite values");
}

void check_timestep(const GridSpec& spec, int n, const char* who) {
    if (n < 1 || n > spec.timesteps)
        throw std::invalid_argument(std::string(who) + ": timestep " + std::to_string(n) +
                                    " outside [1, " + std::to_string(spec.timesteps) + "]");
}

double sample_g(const DiffusionParams& params, int n) {
    const double g = params.g_schedule(n);
    if (!(g >= 0.0))
        throw std::invalid_argument("g_schedule must be nonnegative, got " + std::to_string(g) +
                                    " at n=" + std::to_string(n));
    return g;
}

}  // namespace

StencilCoefficients compute_coefficients(const LogDensityField& m_tilde,
                                         const DiffusionParams& params, const GridSpec& spec,
                                         int n, int outer_iter) {
    check_field(m_tilde, spec, "compute_coefficients");
    check_timestep(spec, n, "compute_coefficients");
    validate(params);

    const int H = spec.rows;
    const int W = spec.cols;
    const double inv_dt = 1.0 / spec.dt;
    const double inv_h2 = 1.0 / (spec.h * spec.h);
    const double inv_2h = 1.0 / (2.0 * spec.h);
    const double g = sample_g(params, n);
    const double g2 = g * g;
    const double c_lap = -g2 * 0.5 * inv_h2;     // -(g^n)^2 / (2h^2)
    const double c_adv = g2 * 0.125 * inv_h2;    // (g^n)^2 / (8h^2)
    const double c_diag = inv_dt + 2.0 * g2 * inv_h2;

    StencilCoefficients out;
    out.rows = H;
    out.cols = W;
    out.timestep = n;
    out.outer_iter = outer_iter;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    out.diag.assign(hw, c_diag);
    out.north.resize(hw);
    out.south.resize(hw);
    out.east.resize(hw);
    out.west.resize(hw);

    // zero padding: neighbors outside the grid contribute value 0
    auto mt = [&](int i, int j) -> double {
        if (i < 1 || i > W || j < 1 || j > H) return 0.0;
        return m_tilde.at(i, j);
    };

    for (int i = 1; i <= W; ++i) {
        for (int j = 1; j <= H; ++j) {
            const std::size_t k = static_cast<std::size_t>(i - 1) * H + (j - 1);
            const double dmx = mt(i + 1, j) - mt(i - 1, j);
            const double dmy = mt(i, j + 1) - mt(i, j - 1);
            double fx = 0.0, fy = 0.0;
            if (params.has_drift()) {
                const auto f = params.f_field(i, j, n);
                fx = f[0];
                fy = f[1];
            }
            out.north[k] = c_lap + fy * inv_2h - c_adv * dmy;
            out.south[k] = c_lap - fy * inv_2h + c_adv * dmy;
            out.east[k] = c_lap + fx * inv_2h - c_adv * dmx;
            out.west[k] = c_lap - fx * inv_2h + c_adv * dmx;
        }
    }
    return out;
}

std::vector<double> assemble_rhs(const LogDensityField& m_prev, const DiffusionParams& params,
                                 const GridSpec& spec, int n) {
    check_field(m_prev, spec, "assemble_rhs");
    check_timestep(spec, n, "assemble_rhs");

    const int H = spec.rows;
    const int W = spec.cols;
    const double inv_dt = 1.0 / spec.dt;
    const double inv_2h = 1.0 / (2.0 * spec.h);

    std::vector<double> b(static_cast<std::size_t>(spec.cells()));
    if (!params.has_drift()) {
        for (std::size_t k = 0; k < b.size(); ++k) b[k] = m_prev.values[k] * inv_dt;
        return b;
    }

    auto fs = [&](int i, int j) -> std::array<double, 2> {
        if (i < 1 || i > W || j < 1 || j > H) return {0.0, 0.0};
        return params.f_field(i, j, n);
    };
    for (int i = 1; i <= W; ++i) {
        for (int j = 1; j <= H; ++j) {
            const std::size_t k = static_cast<std::size_t>(i - 1) * H + (j - 1);
            const double divf = (fs(i + 1, j)[0] - fs(i - 1, j)[0]) + (fs(i, j + 1)[1] - fs(i, j - 1)[1]);
            b[k] = m_prev.values[k] * inv_dt - divf * inv_2h;
        }
    }
    return b;
}

std::vector<double> apply_operator(const StencilCoefficients& coeffs, std::span<const double> m) {
    const std::size_t n = static_cast<std::size_t>(coeffs.size());
    if (m.size() != n)
        throw std::invalid_argument("apply_operator: vector length " + std::to_string(m.size()) +
                                    " does not match system size " + std::to_string(n));
    std::vector<double> y(n);
    make_operator(coeffs)(m, y);
    return y;
}

BandedSystem to_banded(const StencilCoefficients& coeffs, std::span<const double> rhs) {
    const int H = coeffs.rows;
    const std::size_t n = static_cast<std::size_t>(coeffs.size());
    if (rhs.size() != n)
        throw std::invalid_argument("to_banded: rhs length does not match system size");

    BandedSystem sys;
    sys.n = static_cast<int>(n);
    sys.block = H;
    sys.main_diag = coeffs.diag;
    sys.sup1.assign(n, 0.0);
    sys.sub1.assign(n, 0.0);
    sys.supb.assign(n, 0.0);
    sys.subb.assign(n, 0.0);
    sys.rhs.assign(rhs.begin(), rhs.end());

    for (std::size_t k = 0; k < n; ++k) {
        const int j0 = static_cast<int>(k % H);
        if (j0 < H - 1) sys.sup1[k] = coeffs.north[k];
        if (j0 > 0) sys.sub1[k] = coeffs.south[k];
        if (k + H < n) sys.supb[k] = coeffs.east[k];
        if (k >= static_cast<std::size_t>(H)) sys.subb[k] = coeffs.west[k];
    }
    return sys;
}

std::function<void(std::span<const double>, std::span<double>)> make_operator(
    const StencilCoefficients& coeffs) {
    return [&coeffs](std::span<const double> x, std::span<double> y) {
        const int H = coeffs.rows;
        const std::size_t n = static_cast<std::size_t>(coeffs.size());
        for (std::size_t k = 0; k < n; ++k) {
            const int j0 = static_cast<int>(k % H);
            double acc = coeffs.diag[k] * x[k];
            if (j0 < H - 1) acc += coeffs.north[k] * x[k + 1];
            if (j0 > 0) acc += coeffs.south[k] * x[k - 1];
            if (k + H < n) acc += coeffs.east[k] * x[k + H];
            if (k >= static_cast<std::size_t>(H)) acc += coeffs.west[k] * x[k - H];
            y[k] = acc;
        }
    };
}

std::vector<double> BandedSystem::matvec(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("BandedSystem::matvec: length mismatch");
    const std::size_t nn = static_cast<std::size_t>(n);
    const std::size_t b = static_cast<std::size_t>(block);
    std::vector<double> y(nn);
    for (std::size_t k = 0; k < nn; ++k) {
        double acc = main_diag[k] * x[k];
        if (k + 1 < nn) acc += sup1[k] * x[k + 1];
        if (k >= 1) acc += sub1[k] * x[k - 1];
        if (k + b < nn) acc += supb[k] * x[k + b];
        if (k >= b) acc += subb[k] * x[k - b];
        y[k] = acc;
    }
    return y;
}

}  // namespace fpscore
