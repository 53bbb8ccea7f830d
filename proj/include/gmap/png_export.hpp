#pragma once

// PNG preview of a geometric map (needs libpng). Each channel is stretched over its min/max on
// valid pixels and quantized to 8 bits; masked pixels are black. Rows are written top-down with
// v = 1 at the top. Lossy, for viewing only.

#include "gmap/sampling.hpp"

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>

namespace gmap {

inline void save_png_preview(const std::filesystem::path& path, const GeometricMap& map) {
    std::array<double, 3> lo{0, 0, 0};
    std::array<double, 3> hi{0, 0, 0};
    bool any = false;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            if (!map.valid(x, y)) continue;
            for (int c = 0; c < 3; ++c) {
                const double v = map.at(x, y, c);
                const auto cc = static_cast<std::size_t>(c);
                lo[cc] = any ? std::min(lo[cc], v) : v;
                hi[cc] = any ? std::max(hi[cc], v) : v;
            }
            any = true;
        }
    std::vector<png_byte> rgb(static_cast<std::size_t>(map.width) * map.height * 3, 0);
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            if (!map.valid(x, y)) continue;
            const std::size_t row = static_cast<std::size_t>(map.height - 1 - y);
            for (int c = 0; c < 3; ++c) {
                const auto cc = static_cast<std::size_t>(c);
                const double span = hi[cc] - lo[cc];
                const double t = span > 0.0 ? (map.at(x, y, c) - lo[cc]) / span : 0.5;
                rgb[(row * map.width + x) * 3 + cc] = static_cast<png_byte>(std::lround(255.0 * t));
            }
        }

    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!fp) throw FormatError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(map.width), static_cast<png_uint_32>(map.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < map.height; ++r) png_write_row(png, rgb.data() + static_cast<std::size_t>(r) * map.width * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace gmap
