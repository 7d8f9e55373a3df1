#include "fpscore/score_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fpscore {

namespace {

constexpr std::uint32_t kScoreVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}

nlohmann::json manifest_to_json(const ScoreManifest& m) {
    return nlohmann::json{{"image_id", m.image_id},
                          {"grid", {{"H", m.grid_h}, {"W", m.grid_w}, {"T", m.timesteps}}},
                          {"channels", m.channels},
                          {"mode", m.mode},
                          {"params",
                           {{"g", m.g},
                            {"nl_tol", m.nl_tol},
                            {"nl_max_iter", m.nl_max_iter},
                            {"lin_tol", m.lin_tol},
                            {"lin_max_iter", m.lin_max_iter}}},
                          {"score_scale", m.score_scale},
                          {"checksum", m.checksum}};
}

ScoreManifest manifest_from_json(const nlohmann::json& j) {
    ScoreManifest m;
    m.image_id = j.at("image_id").get<std::string>();
    m.grid_h = j.at("grid").at("H").get<int>();
    m.grid_w = j.at("grid").at("W").get<int>();
    m.timesteps = j.at("grid").at("T").get<int>();
    m.channels = j.at("channels").get<int>();
    m.mode = j.at("mode").get<std::string>();
    m.g = j.at("params").at("g").get<double>();
    m.nl_tol = j.at("params").at("nl_tol").get<double>();
    m.nl_max_iter = j.at("params").at("nl_max_iter").get<int>();
    m.lin_tol = j.at("params").at("lin_tol").get<double>();
    m.lin_max_iter = j.at("params").at("lin_max_iter").get<int>();
    m.score_scale = j.at("score_scale").get<std::string>();
    m.checksum = j.at("checksum").get<std::string>();
    return m;
}

// payload layout: (t, channel, i, j, component); one channel slice is
// contiguous in ScoreTensor storage, so slices interleave per timestep.
std::vector<double> interleave(const std::vector<ScoreTensor>& channels) {
    const auto& first = channels.front();
    const std::size_t slice = static_cast<std::size_t>(first.rows) * first.cols * 2;
    std::vector<double> payload;
    payload.reserve(slice * channels.size() * first.timesteps);
    for (int t = 0; t < first.timesteps; ++t)
        for (const auto& ch : channels)
            payload.insert(payload.end(), ch.data.begin() + t * slice,
                           ch.data.begin() + (t + 1) * slice);
    return payload;
}

}  // namespace

std::string fnv1a_hex(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t hash = 1469598103934665603ull;
    for (std::size_t i = 0; i < bytes; ++i) {
        hash ^= p[i];
        hash *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

void save_scores(const std::filesystem::path& path, const std::vector<ScoreTensor>& channels,
                 ScoreManifest manifest) {
    if (channels.empty()) throw IoError("save_scores: no channels");
    const auto& first = channels.front();
    for (const auto& ch : channels)
        if (ch.rows != first.rows || ch.cols != first.cols || ch.timesteps != first.timesteps)
            throw IoError("save_scores: channel shapes differ");

    const auto payload = interleave(channels);
    manifest.grid_h = first.rows;
    manifest.grid_w = first.cols;
    manifest.timesteps = first.timesteps;
    manifest.channels = static_cast<int>(channels.size());
    manifest.checksum = fnv1a_hex(payload.data(), payload.size() * sizeof(double));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_scores: cannot open " + path.string());
    out.write("SCRT", 4);
    write_raw(out, kScoreVersion);
    write_raw(out, static_cast<std::uint32_t>(first.timesteps));
    write_raw(out, static_cast<std::uint32_t>(first.rows));
    write_raw(out, static_cast<std::uint32_t>(first.cols));
    write_raw(out, static_cast<std::uint32_t>(channels.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!out) throw IoError("save_scores: write failed for " + path.string());

    std::ofstream side(path.string() + ".json");
    if (!side) throw IoError("save_scores: cannot open manifest for " + path.string());
    side << manifest_to_json(manifest).dump(2) << "\n";
}

LoadedScores load_scores(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_scores: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SCRT", 4) != 0)
        throw IoError("load_scores: bad magic in " + path.string());
    if (read_raw<std::uint32_t>(in) != kScoreVersion)
        throw IoError("load_scores: unsupported version in " + path.string());
    const auto T = read_raw<std::uint32_t>(in);
    const auto H = read_raw<std::uint32_t>(in);
    const auto W = read_raw<std::uint32_t>(in);
    const auto C = read_raw<std::uint32_t>(in);

    const std::size_t slice = static_cast<std::size_t>(H) * W * 2;
    std::vector<double> payload(slice * T * C);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!in) throw IoError("load_scores: truncated payload in " + path.string());

    LoadedScores out;
    out.channels.assign(C, ScoreTensor{});
    for (auto& ch : out.channels) {
        ch.timesteps = static_cast<int>(T);
        ch.rows = static_cast<int>(H);
        ch.cols = static_cast<int>(W);
        ch.data.resize(slice * T);
    }
    std::size_t pos = 0;
    for (std::uint32_t t = 0; t < T; ++t)
        for (std::uint32_t c = 0; c < C; ++c) {
            std::copy(payload.begin() + pos, payload.begin() + pos + slice,
                      out.channels[c].data.begin() + static_cast<std::size_t>(t) * slice);
            pos += slice;
        }

    std::ifstream side(path.string() + ".json");
    if (!side) throw IoError("load_scores: missing manifest for " + path.string());
    nlohmann::json j;
    side >> j;
    out.manifest = manifest_from_json(j);
    const auto digest = fnv1a_hex(payload.data(), payload.size() * sizeof(double));
    if (digest != out.manifest.checksum)
        throw IoError("load_scores: checksum mismatch for " + path.string());
    return out;
}

void save_embedded(const std::filesystem::path& path,
                   const std::vector<EmbeddedSequence>& channels) {
    if (channels.empty()) throw IoError("save_embedded: no channels");
    const auto& first = channels.front();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_embedded: cannot open " + path.string());
    out.write("EMBS", 4);
    write_raw(out, kScoreVersion);
    write_raw(out, static_cast<std::uint32_t>(first.timesteps));
    write_raw(out, static_cast<std::uint32_t>(first.rows));
    write_raw(out, static_cast<std::uint32_t>(first.cols));
    write_raw(out, static_cast<std::uint32_t>(channels.size()));
    for (const auto& ch : channels) {
        if (ch.rows != first.rows || ch.cols != first.cols || ch.timesteps != first.timesteps)
            throw IoError("save_embedded: channel shapes differ");
        out.write(reinterpret_cast<const char*>(ch.values.data()),
                  static_cast<std::streamsize>(ch.values.size() * sizeof(double)));
    }
    if (!out) throw IoError("save_embedded: write failed for " + path.string());
}

std::vector<EmbeddedSequence> load_embedded(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_embedded: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "EMBS", 4) != 0)
        throw IoError("load_embedded: bad magic in " + path.string());
    if (read_raw<std::uint32_t>(in) != kScoreVersion)
        throw IoError("load_embedded: unsupported version in " + path.string());
    const auto T = read_raw<std::uint32_t>(in);
    const auto H = read_raw<std::uint32_t>(in);
    const auto W = read_raw<std::uint32_t>(in);
    const auto C = read_raw<std::uint32_t>(in);

    std::vector<EmbeddedSequence> out(C);
    for (auto& ch : out) {
        ch.timesteps = static_cast<int>(T);
        ch.rows = static_cast<int>(H);
        ch.cols = static_cast<int>(W);
        ch.values.resize(static_cast<std::size_t>(T + 1) * H * W);
        in.read(reinterpret_cast<char*>(ch.values.data()),
                static_cast<std::streamsize>(ch.values.size() * sizeof(double)));
    }
    if (!in) throw IoError("load_embedded: truncated file " + path.string());
    return out;
}

}  // namespace fpscore
