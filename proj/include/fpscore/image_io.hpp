#pragma once

#include <filesystem>
#include <vector>

#include "fpscore/grid.hpp"
#include "fpscore/score_io.hpp"

namespace fpscore {

/// Multi-channel image in [0, 1], planar storage.
struct Image {
    int rows = 0;
    int cols = 0;
    int channels = 1;
    std::vector<double> data;  // channel-major: data[ch * rows*cols + r*cols + c]

    ImagePlane plane(int ch) const;
};

/// Loads an 8-bit grayscale PGM (P5) or an 8-bit gray/RGB PNG, scaled by
/// 1/255. Unsupported formats raise IoError.
Image load_image(const std::filesystem::path& path);

/// Writes one plane as an 8-bit PGM, values clamped to [0, 1].
void save_pgm(const std::filesystem::path& path, const ImagePlane& plane);

}  // namespace fpscore
