#pragma once

#include <cstdint>
#include <vector>

#include "fpscore/grid.hpp"

namespace fpscore {

/// Correlated synthetic batch: one smooth base image (three randomly
/// placed Gaussian bumps, range-normalized to [0.1, 0.9]) followed by
/// N-1 copies perturbed with pixelwise Gaussian noise of standard
/// deviation sigma_p, clamped to [0, 1]. Fully determined by base_seed;
/// the distributions are hand-rolled over mt19937_64 so batches are
/// reproducible across standard libraries.
std::vector<ImagePlane> gen_correlated_batch(std::uint64_t base_seed, int n, const GridSpec& spec,
                                             double sigma_p);

/// The base image alone (element 0 of the batch).
ImagePlane gen_base_image(std::uint64_t base_seed, const GridSpec& spec);

}  // namespace fpscore
