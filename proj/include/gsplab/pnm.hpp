#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gsplab/error.hpp"
#include "gsplab/tensor.hpp"

namespace gsplab {

// Binary PGM (P5) / PPM (P6) with maxval 255. Chosen as the interchange
// raster because it is trivially parseable and byte-deterministic.

struct PnmHeader {
    int channels = 1; // 1 for P5, 3 for P6
    int width = 0;
    int height = 0;
    int maxval = 255;
};

namespace detail {

// PNM headers are whitespace-separated tokens; '#' starts a comment to EOL.
inline std::string pnm_token(std::istream& is, const std::string& path) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw FormatError("truncated header in " + path);
    return tok;
}

inline int pnm_int(std::istream& is, const std::string& path, const std::string& what) {
    const std::string tok = pnm_token(is, path);
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError("bad " + what + " '" + tok + "' in " + path);
    }
}

inline std::uint8_t quantize255(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

} // namespace detail

// Reads only the header; used to validate annotations against image bounds
// without decoding pixels.
inline PnmHeader read_pnm_header(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open raster: " + path.string());
    const std::string magic = detail::pnm_token(is, path.string());
    PnmHeader h;
    if (magic == "P5") h.channels = 1;
    else if (magic == "P6") h.channels = 3;
    else throw FormatError("unsupported raster magic '" + magic + "' in " + path.string() + " (expected P5 or P6)");
    h.width = detail::pnm_int(is, path.string(), "width");
    h.height = detail::pnm_int(is, path.string(), "height");
    h.maxval = detail::pnm_int(is, path.string(), "maxval");
    if (h.width < 1 || h.height < 1) throw FormatError("degenerate raster size in " + path.string());
    if (h.maxval != 255) throw FormatError("unsupported maxval " + std::to_string(h.maxval) + " in " + path.string());
    return h;
}

// Decodes P5/P6 to Tensor[C,H,W] with values in [0,1] (v/255).
inline Tensor read_pnm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open raster: " + path.string());
    const std::string magic = detail::pnm_token(is, path.string());
    int channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw FormatError("unsupported raster magic '" + magic + "' in " + path.string() + " (expected P5 or P6)");
    const int w = detail::pnm_int(is, path.string(), "width");
    const int h = detail::pnm_int(is, path.string(), "height");
    const int maxval = detail::pnm_int(is, path.string(), "maxval");
    if (w < 1 || h < 1) throw FormatError("degenerate raster size in " + path.string());
    if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + " in " + path.string());
    // the token reader consumed the single whitespace byte after maxval, so
    // the stream now sits on the first pixel byte
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * channels);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size())
        throw FormatError("truncated pixel data in " + path.string());
    Tensor t = Tensor::zeros({channels, h, w});
    auto v = t.values();
    // PNM interleaves channels per pixel; tensors are planar
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                v[(static_cast<std::size_t>(c) * h + y) * w + x] =
                    raw[(static_cast<std::size_t>(y) * w + x) * channels + c] / 255.0;
    return t;
}

inline Tensor read_pgm(const std::filesystem::path& path) {
    Tensor t = read_pnm(path);
    if (t.shape()[0] != 1)
        throw FormatError("expected grayscale raster, got " + std::to_string(t.shape()[0]) +
                          " channels in " + path.string());
    return t;
}

// Writes [H,W] or [1,H,W] values in [0,1] as binary PGM (clamped, rounded).
inline void write_pgm(const std::filesystem::path& path, const Tensor& img) {
    int h = 0, w = 0;
    if (img.rank() == 2) { h = img.shape()[0]; w = img.shape()[1]; }
    else if (img.rank() == 3 && img.shape()[0] == 1) { h = img.shape()[1]; w = img.shape()[2]; }
    else throw DimensionError("write_pgm wants [H,W] or [1,H,W], got " + detail::shape_string(img.shape()));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open raster for writing: " + path.string());
    os << "P5\n" << w << ' ' << h << "\n255\n";
    const auto v = img.values();
    std::vector<std::uint8_t> raw(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) raw[i] = detail::quantize255(v[i]);
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

// Writes [3,H,W] values in [0,1] as binary PPM.
inline void write_ppm(const std::filesystem::path& path, const Tensor& img) {
    if (img.rank() != 3 || img.shape()[0] != 3)
        throw DimensionError("write_ppm wants [3,H,W], got " + detail::shape_string(img.shape()));
    const int h = img.shape()[1], w = img.shape()[2];
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open raster for writing: " + path.string());
    os << "P6\n" << w << ' ' << h << "\n255\n";
    const auto v = img.values();
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
                    detail::quantize255(v[(static_cast<std::size_t>(c) * h + y) * w + x]);
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

} // namespace gsplab
