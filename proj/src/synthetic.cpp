#include "fpscore/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace fpscore {

namespace {

double next_uniform(std::mt19937_64& rng) {
    return (rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

// Box-Muller; one draw per call keeps the stream layout obvious.
double next_normal(std::mt19937_64& rng) {
    double u1 = next_uniform(rng);
    while (u1 == 0.0) u1 = next_uniform(rng);
    const double u2 = next_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

ImagePlane base_from_rng(std::mt19937_64& rng, const GridSpec& spec) {
    struct Bump {
        double cx, cy, sigma, amp;
    };
    Bump bumps[3];
    for (auto& bp : bumps) {
        bp.cx = next_uniform(rng);
        bp.cy = next_uniform(rng);
        bp.sigma = 0.08 + 0.12 * next_uniform(rng);
        bp.amp = 0.5 + 0.5 * next_uniform(rng);
    }

    ImagePlane img;
    img.rows = spec.rows;
    img.cols = spec.cols;
    img.pix.resize(static_cast<std::size_t>(spec.cells()));
    double lo = 1e300, hi = -1e300;
    for (int r = 0; r < spec.rows; ++r) {
        const double y = (r + 0.5) / spec.rows;
        for (int c = 0; c < spec.cols; ++c) {
            const double x = (c + 0.5) / spec.cols;
            double v = 0.0;
            for (const auto& bp : bumps) {
                const double dx = x - bp.cx, dy = y - bp.cy;
                v += bp.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * bp.sigma * bp.sigma));
            }
            img.at_rc(r, c) = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    // normalize the range to [0.1, 0.9]
    const double span = hi - lo;
    for (double& v : img.pix)
        v = span > 0.0 ? 0.1 + 0.8 * (v - lo) / span : 0.5;
    return img;
}

}  // namespace

ImagePlane gen_base_image(std::uint64_t base_seed, const GridSpec& spec) {
    std::mt19937_64 rng(base_seed);
    return base_from_rng(rng, spec);
}

std::vector<ImagePlane> gen_correlated_batch(std::uint64_t base_seed, int n, const GridSpec& spec,
                                             double sigma_p) {
    if (n < 2) throw std::invalid_argument("gen_correlated_batch: need N >= 2");
    if (!(sigma_p > 0.0 && sigma_p < 0.5))
        throw std::invalid_argument("gen_correlated_batch: sigma_p must lie in (0, 0.5)");

    std::mt19937_64 rng(base_seed);
    std::vector<ImagePlane> batch;
    batch.reserve(n);
    batch.push_back(base_from_rng(rng, spec));
    const ImagePlane& base = batch.front();

    for (int k = 1; k < n; ++k) {
        ImagePlane img = base;
        for (double& v : img.pix) v = std::clamp(v + sigma_p * next_normal(rng), 0.0, 1.0);
        batch.push_back(std::move(img));
    }
    return batch;
}

}  // namespace fpscore
