#include "fpscore/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <png.h>

namespace fpscore {

ImagePlane Image::plane(int ch) const {
    ImagePlane p;
    p.rows = rows;
    p.cols = cols;
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    p.pix.assign(data.begin() + ch * n, data.begin() + (ch + 1) * n);
    return p;
}

namespace {

int pgm_token(std::istream& in) {
    // skips whitespace and '#' comments between header fields
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            in.unget();
            int value;
            if (!(in >> value)) return -1;
            return value;
        }
    }
    return -1;
}

Image load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_image: cannot open " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5')
        throw IoError("load_image: not a binary PGM (P5): " + path.string());
    const int w = pgm_token(in);
    const int h = pgm_token(in);
    const int maxval = pgm_token(in);
    if (w <= 0 || h <= 0) throw IoError("load_image: bad PGM dimensions in " + path.string());
    if (maxval <= 0 || maxval > 255)
        throw IoError("load_image: only 8-bit PGM supported, maxval=" + std::to_string(maxval));
    in.get();  // single whitespace after maxval

    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError("load_image: truncated PGM payload in " + path.string());

    Image img;
    img.rows = h;
    img.cols = w;
    img.channels = 1;
    img.data.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

Image load_png(const std::filesystem::path& path) {
    PngReader rd;
    rd.fp = std::fopen(path.c_str(), "rb");
    if (!rd.fp) throw IoError("load_image: cannot open " + path.string());

    rd.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!rd.png) throw IoError("load_image: libpng init failed");
    rd.info = png_create_info_struct(rd.png);
    if (!rd.info) throw IoError("load_image: libpng info init failed");
    if (setjmp(png_jmpbuf(rd.png))) throw IoError("load_image: PNG decode failed: " + path.string());

    png_init_io(rd.png, rd.fp);
    png_read_info(rd.png, rd.info);

    const png_uint_32 w = png_get_image_width(rd.png, rd.info);
    const png_uint_32 h = png_get_image_height(rd.png, rd.info);
    const int depth = png_get_bit_depth(rd.png, rd.info);
    const int color = png_get_color_type(rd.png, rd.info);
    if (depth > 8)
        throw IoError("load_image: only 8-bit PNG supported: " + path.string());

    // normalize to 8-bit gray or RGB
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(rd.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(rd.png);
    if (png_get_valid(rd.png, rd.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(rd.png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(rd.png);
    png_read_update_info(rd.png, rd.info);

    const int ch = png_get_channels(rd.png, rd.info);
    if (ch != 1 && ch != 3)
        throw IoError("load_image: PNG must decode to gray or RGB, got " + std::to_string(ch) +
                      " channels");

    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * ch);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 r = 0; r < h; ++r) rows[r] = raw.data() + static_cast<std::size_t>(r) * w * ch;
    png_read_image(rd.png, rows.data());

    Image img;
    img.rows = static_cast<int>(h);
    img.cols = static_cast<int>(w);
    img.channels = ch;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    img.data.resize(n * ch);
    for (std::size_t px = 0; px < n; ++px)
        for (int c = 0; c < ch; ++c) img.data[c * n + px] = raw[px * ch + c] / 255.0;
    return img;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("load_image: cannot open " + path.string());
    unsigned char sig[8] = {};
    probe.read(reinterpret_cast<char*>(sig), 8);
    probe.close();

    if (sig[0] == 'P' && sig[1] == '5') return load_pgm(path);
    if (png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
    throw IoError("load_image: unsupported format (want PGM P5 or PNG): " + path.string());
}

void save_pgm(const std::filesystem::path& path, const ImagePlane& plane) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_pgm: cannot open " + path.string());
    out << "P5\n" << plane.cols << " " << plane.rows << "\n255\n";
    for (double v : plane.pix) {
        const double clamped = std::clamp(v, 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
    }
    if (!out) throw IoError("save_pgm: write failed for " + path.string());
}

}  // namespace fpscore
