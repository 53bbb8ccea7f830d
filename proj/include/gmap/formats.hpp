#pragma once

// On-disk formats: GMAP maps, raster tables, uv embeddings and key-vertex specs.
//
// GMAP: "GMAP", u32 H, u32 W, u32 C = 3, H*W*C float32, H*W mask bytes. All little-endian.
// GTAB: "GTAB", u32 version, u32 H, u32 n_vertices, u64 conflicts, then per pixel
//       i32 triangle, 3 x i32 vertex, 3 x f64 weight, then H*H mask bytes.

#include "gmap/deform.hpp"
#include "gmap/sampling.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace gmap {

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    auto bits = std::bit_cast<U>(value);
    char buf[sizeof(T)];
    for (std::size_t k = 0; k < sizeof(T); ++k) {
        buf[k] = static_cast<char>(bits & 0xffu);
        bits >>= 8;
    }
    out.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& in, const std::string& what) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw FormatError(what + ": truncated file");
    U bits = 0;
    for (std::size_t k = sizeof(T); k-- > 0;) bits = (bits << 8) | buf[k];
    return std::bit_cast<T>(bits);
}

inline void expect_magic(std::istream& in, const char* magic, const std::string& what) {
    char got[4];
    if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0)
        throw FormatError(what + ": bad magic, expected '" + std::string(magic, 4) + "'");
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw FormatError("cannot open " + path.string());
    return in;
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw FormatError("cannot write " + path.string());
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace detail

inline void write_gmap(std::ostream& out, const GeometricMap& map) {
    out.write("GMAP", 4);
    detail::put_le(out, static_cast<std::uint32_t>(map.height));
    detail::put_le(out, static_cast<std::uint32_t>(map.width));
    detail::put_le(out, std::uint32_t{3});
    for (double v : map.data) detail::put_le(out, static_cast<float>(v));
    out.write(reinterpret_cast<const char*>(map.mask.data()), static_cast<std::streamsize>(map.mask.size()));
}

/// Reads a GMAP stream. Masked pixels must be zero; valid pixels must be finite.
inline GeometricMap read_gmap(std::istream& in, const std::string& source = "<gmap>") {
    detail::expect_magic(in, "GMAP", source);
    const auto h = detail::get_le<std::uint32_t>(in, source);
    const auto w = detail::get_le<std::uint32_t>(in, source);
    const auto c = detail::get_le<std::uint32_t>(in, source);
    if (c != 3) throw FormatError(source + ": expected 3 channels, found " + std::to_string(c));
    if (h < 2 || w < 2 || h > 65536 || w > 65536)
        throw FormatError(source + ": implausible size " + std::to_string(h) + "x" + std::to_string(w));
    GeometricMap map(static_cast<int>(h), static_cast<int>(w));
    for (double& v : map.data) v = detail::get_le<float>(in, source);
    if (!in.read(reinterpret_cast<char*>(map.mask.data()), static_cast<std::streamsize>(map.mask.size())))
        throw FormatError(source + ": truncated mask");
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            const auto m = map.mask[map.pixel(x, y)];
            if (m > 1) throw FormatError(source + ": mask byte at pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") is not 0/1");
            for (int ch = 0; ch < 3; ++ch) {
                const double v = map.at(x, y, ch);
                if (m && !std::isfinite(v))
                    throw FormatError(source + ": non-finite value at pixel (" + std::to_string(x) + ", " +
                                      std::to_string(y) + ") channel " + std::to_string(ch));
                if (!m && v != 0.0)
                    throw FormatError(source + ": masked pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                                      ") is not zero");
            }
        }
    }
    return map;
}

inline void save_gmap(const std::filesystem::path& path, const GeometricMap& map) {
    auto out = detail::open_out(path, true);
    write_gmap(out, map);
    detail::finish(out, path);
}

inline GeometricMap load_gmap(const std::filesystem::path& path) {
    auto in = detail::open_in(path, true);
    return read_gmap(in, path.string());
}

inline constexpr std::uint32_t kTableVersion = 1;

inline void write_table(std::ostream& out, const RasterTable& t) {
    out.write("GTAB", 4);
    detail::put_le(out, kTableVersion);
    detail::put_le(out, static_cast<std::uint32_t>(t.resolution));
    detail::put_le(out, static_cast<std::uint32_t>(t.n_vertices));
    detail::put_le(out, static_cast<std::uint64_t>(t.conflicts));
    for (const auto& c : t.cells) {
        detail::put_le(out, static_cast<std::int32_t>(c.triangle));
        for (int v : c.vertices) detail::put_le(out, static_cast<std::int32_t>(v));
        for (double w : c.weights) detail::put_le(out, w);
    }
    out.write(reinterpret_cast<const char*>(t.mask.data()), static_cast<std::streamsize>(t.mask.size()));
}

inline RasterTable read_table(std::istream& in, const std::string& source = "<table>") {
    detail::expect_magic(in, "GTAB", source);
    const auto version = detail::get_le<std::uint32_t>(in, source);
    if (version != kTableVersion) throw FormatError(source + ": unsupported table version " + std::to_string(version));
    RasterTable t;
    const auto h = detail::get_le<std::uint32_t>(in, source);
    if (h < 4 || h > 65536) throw FormatError(source + ": implausible resolution " + std::to_string(h));
    t.resolution = static_cast<int>(h);
    t.n_vertices = detail::get_le<std::uint32_t>(in, source);
    t.conflicts = detail::get_le<std::uint64_t>(in, source);
    t.cells.resize(static_cast<std::size_t>(h) * h);
    for (auto& c : t.cells) {
        c.triangle = detail::get_le<std::int32_t>(in, source);
        for (int& v : c.vertices) v = detail::get_le<std::int32_t>(in, source);
        for (double& w : c.weights) w = detail::get_le<double>(in, source);
    }
    t.mask.resize(t.cells.size());
    if (!in.read(reinterpret_cast<char*>(t.mask.data()), static_cast<std::streamsize>(t.mask.size())))
        throw FormatError(source + ": truncated mask");
    for (std::size_t k = 0; k < t.cells.size(); ++k) {
        const auto& c = t.cells[k];
        if ((c.triangle >= 0) != (t.mask[k] == 1) || t.mask[k] > 1)
            throw FormatError(source + ": mask disagrees with cell " + std::to_string(k));
        if (c.triangle < 0) continue;
        for (int v : c.vertices)
            if (v < 0 || static_cast<std::size_t>(v) >= t.n_vertices)
                throw FormatError(source + ": cell " + std::to_string(k) + " references vertex " + std::to_string(v));
    }
    return t;
}

inline void save_table(const std::filesystem::path& path, const RasterTable& t) {
    auto out = detail::open_out(path, true);
    write_table(out, t);
    detail::finish(out, path);
}

inline RasterTable load_table(const std::filesystem::path& path) {
    auto in = detail::open_in(path, true);
    return read_table(in, path.string());
}

inline nlohmann::json uv_to_json(const UVEmbedding& emb) {
    nlohmann::json uv = nlohmann::json::array();
    for (const auto& p : emb.uv) uv.push_back({p.x(), p.y()});
    return {{"schema_version", 1},
            {"frame", emb.frame == Frame::square ? "square" : "disk"},
            {"n", emb.uv.size()},
            {"uv", std::move(uv)}};
}

inline UVEmbedding uv_from_json(const nlohmann::json& j, const std::string& source = "<uv>") {
    try {
        UVEmbedding emb;
        const std::string frame = j.at("frame").get<std::string>();
        if (frame == "square") emb.frame = Frame::square;
        else if (frame == "disk") emb.frame = Frame::disk;
        else throw FormatError(source + ": unknown frame '" + frame + "'");
        for (const auto& p : j.at("uv")) {
            if (!p.is_array() || p.size() != 2) throw FormatError(source + ": uv entries must be [u, v]");
            emb.uv.emplace_back(p[0].get<double>(), p[1].get<double>());
            if (!emb.uv.back().allFinite()) throw FormatError(source + ": non-finite uv entry");
        }
        if (j.contains("n") && j.at("n").get<std::size_t>() != emb.uv.size())
            throw FormatError(source + ": 'n' does not match the uv count");
        return emb;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(source + ": " + e.what());
    }
}

/// {"landmark_pairs": [[l, r, tx, ty], ...], "axis": [...], "corners": [c0, c1, c2, c3]}
inline nlohmann::json spec_to_json(const KeyVertexSpec& spec) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : spec.landmark_pairs) pairs.push_back({p.left, p.right, p.target.x(), p.target.y()});
    return {{"landmark_pairs", std::move(pairs)},
            {"axis", spec.axis_vertices},
            {"corners", std::vector<int>(spec.corners.begin(), spec.corners.end())}};
}

inline KeyVertexSpec spec_from_json(const nlohmann::json& j, const std::string& source = "<spec>") {
    KeyVertexSpec spec;
    auto field = [&](const char* name) -> const nlohmann::json& {
        if (!j.contains(name)) throw FormatError(source + ": missing field '" + std::string(name) + "'");
        return j.at(name);
    };
    try {
        for (const auto& p : field("landmark_pairs")) {
            if (!p.is_array() || p.size() != 4)
                throw FormatError(source + ": field 'landmark_pairs' entries must be [left, right, tx, ty]");
            spec.landmark_pairs.push_back({p[0].get<int>(), p[1].get<int>(), Vec2(p[2].get<double>(), p[3].get<double>())});
        }
        spec.axis_vertices = field("axis").get<std::vector<int>>();
        const auto corners = field("corners").get<std::vector<int>>();
        if (corners.size() != 4) throw FormatError(source + ": field 'corners' needs exactly 4 entries");
        std::copy(corners.begin(), corners.end(), spec.corners.begin());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(source + ": " + e.what());
    }
    return spec;
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
    auto in = detail::open_in(path, false);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto out = detail::open_out(path, false);
    out << j.dump(2) << '\n';
    detail::finish(out, path);
}

}  // namespace gmap
