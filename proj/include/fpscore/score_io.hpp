#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fpscore/grid.hpp"
#include "fpscore/pipeline.hpp"

namespace fpscore {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Sidecar metadata written next to a score tensor file.
struct ScoreManifest {
    std::string image_id;
    int grid_h = 0;
    int grid_w = 0;
    int timesteps = 0;
    int channels = 1;
    std::string mode;  // "direct" | "iterative" | "recycled"
    double g = 0.0;
    double nl_tol = 0.0;
    int nl_max_iter = 0;
    double lin_tol = 0.0;
    int lin_max_iter = 0;
    std::string score_scale;  // "half" or "half-over-h"
    std::string checksum;     // fnv1a-64 of the binary payload, hex
};

/// Writes the tensor file: header {magic "SCRT", version u32, T u32,
/// H u32, W u32, channels u32} followed by row-major little-endian f64
/// ordered (t, channel, i, j, component), plus "<path>.json" holding the
/// manifest (checksum filled in by the writer).
void save_scores(const std::filesystem::path& path, const std::vector<ScoreTensor>& channels,
                 ScoreManifest manifest);

struct LoadedScores {
    std::vector<ScoreTensor> channels;
    ScoreManifest manifest;
};

/// Reads a score tensor file and its manifest; verifies the checksum.
LoadedScores load_scores(const std::filesystem::path& path);

/// Embedded-sequence persistence, same framing with magic "EMBS" and
/// T+1 slices per channel.
void save_embedded(const std::filesystem::path& path,
                   const std::vector<EmbeddedSequence>& channels);
std::vector<EmbeddedSequence> load_embedded(const std::filesystem::path& path);

/// FNV-1a 64-bit digest, lowercase hex.
std::string fnv1a_hex(const void* data, std::size_t bytes);

}  // namespace fpscore
