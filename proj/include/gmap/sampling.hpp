#pragma once

// Forward barycentric rasterization of a square-frame embedding onto an H x H pixel grid, the
// backward bilinear sampler, and the left-right flip operator on geometric maps.
//
// Pixel (x, y) has its centre at ((x + 0.5) / W, (y + 0.5) / H) in uv. Storage is row-major with
// x fastest; row 0 is v = 0.

#include "gmap/harmonic.hpp"

#include <array>
#include <cstdint>

namespace gmap {

struct RasterCell {
    /// -1 for an empty pixel.
    int triangle = -1;
    std::array<int, 3> vertices{-1, -1, -1};
    std::array<double, 3> weights{0.0, 0.0, 0.0};
};

struct RasterTable {
    int resolution = 0;
    std::size_t n_vertices = 0;
    std::vector<RasterCell> cells;
    std::vector<std::uint8_t> mask;
    /// Pixels inside one triangle and also touched by another (fold-over from flips).
    std::size_t conflicts = 0;

    std::size_t valid_pixels() const {
        return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
    }
};

struct GeometricMap {
    int height = 0;
    int width = 0;
    /// height * width * 3, index (y * width + x) * 3 + c.
    std::vector<double> data;
    std::vector<std::uint8_t> mask;

    GeometricMap() = default;
    GeometricMap(int h, int w)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0),
          mask(static_cast<std::size_t>(h) * w, 0) {}

    std::size_t pixel(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    double& at(int x, int y, int c) { return data[pixel(x, y) * 3 + static_cast<std::size_t>(c)]; }
    double at(int x, int y, int c) const { return data[pixel(x, y) * 3 + static_cast<std::size_t>(c)]; }
    Vec3 value(int x, int y) const {
        const std::size_t k = pixel(x, y) * 3;
        return {data[k], data[k + 1], data[k + 2]};
    }
    bool valid(int x, int y) const { return mask[pixel(x, y)] != 0; }
};

inline Vec2 pixel_center(int x, int y, int width, int height) {
    return {(x + 0.5) / width, (y + 0.5) / height};
}

/// Barycentric weights of p in (a, b, c) from 2D cross products. Requires a non-zero area.
inline std::array<double, 3> barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    const double denom = cross2(b - a, c - a);
    return {cross2(b - p, c - p) / denom, cross2(c - p, a - p) / denom, cross2(a - p, b - p) / denom};
}

/// Tolerance on barycentric weights for a pixel centre to count as inside a triangle.
inline constexpr double kInsideTolerance = 1e-12;

/// Assigns every pixel centre to the triangle containing it. Overlaps resolve to the lowest
/// triangle id.
inline RasterTable build_raster_table(const UVEmbedding& emb, const Mesh& mesh, int resolution = 128) {
    if (resolution < 4) throw InvalidArgument("resolution must be >= 4, got " + std::to_string(resolution));
    if (emb.uv.size() != mesh.num_vertices())
        throw InvalidArgument("build_raster_table: embedding/mesh vertex count mismatch");
    const int h = resolution;
    const auto& uv = emb.uv;
    const auto& tris = mesh.triangles();

    // Bucket triangles by the pixel rows their bounding boxes cover.
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(h));
    struct Box {
        int x0, x1;
    };
    std::vector<Box> boxes(tris.size(), Box{0, -1});
    for (std::size_t t = 0; t < tris.size(); ++t) {
        const Vec2& a = uv[static_cast<std::size_t>(tris[t][0])];
        const Vec2& b = uv[static_cast<std::size_t>(tris[t][1])];
        const Vec2& c = uv[static_cast<std::size_t>(tris[t][2])];
        if (cross2(b - a, c - a) == 0.0) continue;
        const auto lo = a.cwiseMin(b).cwiseMin(c);
        const auto hi = a.cwiseMax(b).cwiseMax(c);
        // Centres (k + 0.5) / h inside [lo, hi], widened by one pixel against rounding.
        const int x0 = std::max(0, static_cast<int>(std::floor(lo.x() * h - 0.5)) - 1);
        const int x1 = std::min(h - 1, static_cast<int>(std::ceil(hi.x() * h - 0.5)) + 1);
        const int y0 = std::max(0, static_cast<int>(std::floor(lo.y() * h - 0.5)) - 1);
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(hi.y() * h - 0.5)) + 1);
        if (x0 > x1 || y0 > y1) continue;
        boxes[t] = Box{x0, x1};
        for (int y = y0; y <= y1; ++y) rows[static_cast<std::size_t>(y)].push_back(static_cast<int>(t));
    }

    RasterTable table;
    table.resolution = h;
    table.n_vertices = mesh.num_vertices();
    table.cells.assign(static_cast<std::size_t>(h) * h, RasterCell{});
    table.mask.assign(static_cast<std::size_t>(h) * h, 0);
    std::vector<std::size_t> row_conflicts(static_cast<std::size_t>(h), 0);

    parallel_for(static_cast<std::size_t>(h), [&](std::size_t yr) {
        const int y = static_cast<int>(yr);
        std::vector<int> inclusive(static_cast<std::size_t>(h), 0);
        std::vector<int> strict(static_cast<std::size_t>(h), 0);
        for (int t : rows[yr]) {
            const auto& tri = tris[static_cast<std::size_t>(t)];
            const Vec2& a = uv[static_cast<std::size_t>(tri[0])];
            const Vec2& b = uv[static_cast<std::size_t>(tri[1])];
            const Vec2& c = uv[static_cast<std::size_t>(tri[2])];
            for (int x = boxes[static_cast<std::size_t>(t)].x0; x <= boxes[static_cast<std::size_t>(t)].x1; ++x) {
                const auto w = barycentric(pixel_center(x, y, h, h), a, b, c);
                if (w[0] < -kInsideTolerance || w[1] < -kInsideTolerance || w[2] < -kInsideTolerance) continue;
                const std::size_t k = static_cast<std::size_t>(y) * h + x;
                ++inclusive[static_cast<std::size_t>(x)];
                if (w[0] > kInsideTolerance && w[1] > kInsideTolerance && w[2] > kInsideTolerance)
                    ++strict[static_cast<std::size_t>(x)];
                auto& cell = table.cells[k];
                if (cell.triangle < 0 || t < cell.triangle) {
                    cell.triangle = t;
                    cell.vertices = tri;
                    cell.weights = w;
                }
            }
        }
        for (int x = 0; x < h; ++x) {
            const std::size_t k = static_cast<std::size_t>(y) * h + x;
            table.mask[k] = table.cells[k].triangle >= 0 ? 1 : 0;
            if (inclusive[static_cast<std::size_t>(x)] >= 2 && strict[static_cast<std::size_t>(x)] >= 1)
                ++row_conflicts[yr];
        }
    });
    for (std::size_t c : row_conflicts) table.conflicts += c;
    return table;
}

/// Barycentric blend of vertex positions on every valid pixel; masked pixels stay zero.
inline GeometricMap forward_map(std::span<const Vec3> vertices, const RasterTable& table) {
    if (vertices.size() != table.n_vertices)
        throw InvalidArgument("forward_map: table expects " + std::to_string(table.n_vertices) +
                              " vertices, got " + std::to_string(vertices.size()));
    const int h = table.resolution;
    GeometricMap map(h, h);
    map.mask = table.mask;
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t y) {
        for (int x = 0; x < h; ++x) {
            const std::size_t k = y * static_cast<std::size_t>(h) + static_cast<std::size_t>(x);
            const auto& cell = table.cells[k];
            if (cell.triangle < 0) continue;
            Vec3 p = Vec3::Zero();
            for (int j = 0; j < 3; ++j)
                p += cell.weights[static_cast<std::size_t>(j)] * vertices[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(j)])];
            map.data[k * 3] = p.x();
            map.data[k * 3 + 1] = p.y();
            map.data[k * 3 + 2] = p.z();
        }
    });
    return map;
}

/// The four pixels and weights a bilinear read at uv touches.
struct BilinearStencil {
    std::array<int, 4> x{};
    std::array<int, 4> y{};
    std::array<double, 4> w{};
    /// Continuous pixel coordinates before clamping.
    double px = 0.0;
    double py = 0.0;
    bool clamped = false;
    /// uv sits on a lattice line: derivatives across it are one-sided.
    bool on_lattice = false;
};

inline BilinearStencil bilinear_stencil(const GeometricMap& map, const Vec2& uv) {
    BilinearStencil s;
    s.px = uv.x() * map.width - 0.5;
    s.py = uv.y() * map.height - 0.5;
    const double cx = std::clamp(s.px, 0.0, static_cast<double>(map.width - 1));
    const double cy = std::clamp(s.py, 0.0, static_cast<double>(map.height - 1));
    s.clamped = cx != s.px || cy != s.py;
    const int x0 = std::min(static_cast<int>(std::floor(cx)), map.width - 2);
    const int y0 = std::min(static_cast<int>(std::floor(cy)), map.height - 2);
    const double fx = cx - x0;
    const double fy = cy - y0;
    s.on_lattice = fx == 0.0 || fy == 0.0 || fx == 1.0 || fy == 1.0;
    s.x = {x0, x0 + 1, x0, x0 + 1};
    s.y = {y0, y0, y0 + 1, y0 + 1};
    s.w = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    return s;
}

struct SampleStats {
    /// Samples that took a non-zero weight from a masked pixel.
    std::size_t masked_reads = 0;
    std::size_t clamped = 0;
    /// Per sample: 1 if it read a masked pixel.
    std::vector<std::uint8_t> touched_mask;
};

/// Bilinear read of the map at each uv; uv outside the pixel-centre lattice is clamped onto it.
inline std::vector<Vec3> backward_sample(const GeometricMap& map, std::span<const Vec2> uv,
                                         SampleStats* stats = nullptr) {
    if (map.width < 2 || map.height < 2) throw InvalidArgument("backward_sample: map smaller than 2x2");
    std::vector<Vec3> out(uv.size());
    std::vector<std::uint8_t> touched(uv.size(), 0);
    std::vector<std::uint8_t> clamped(uv.size(), 0);
    parallel_for(uv.size(), [&](std::size_t i) {
        const auto s = bilinear_stencil(map, uv[i]);
        Vec3 p = Vec3::Zero();
        for (int k = 0; k < 4; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            if (s.w[kk] == 0.0) continue;
            p += s.w[kk] * map.value(s.x[kk], s.y[kk]);
            if (!map.valid(s.x[kk], s.y[kk])) touched[i] = 1;
        }
        out[i] = p;
        clamped[i] = s.clamped ? 1 : 0;
    });
    if (stats) {
        stats->touched_mask = touched;
        stats->masked_reads = static_cast<std::size_t>(std::count(touched.begin(), touched.end(), std::uint8_t{1}));
        stats->clamped = static_cast<std::size_t>(std::count(clamped.begin(), clamped.end(), std::uint8_t{1}));
    }
    return out;
}

inline std::vector<Vec3> backward_sample(const GeometricMap& map, const UVEmbedding& emb, SampleStats* stats = nullptr) {
    return backward_sample(map, std::span<const Vec2>(emb.uv), stats);
}

struct SamplingJacobian {
    Vec3 value = Vec3::Zero();
    /// Columns: d value / du, d value / dv.
    Eigen::Matrix<double, 3, 2> d_uv = Eigen::Matrix<double, 3, 2>::Zero();
    /// d value / d map pixel (same weight for each channel).
    BilinearStencil stencil;
    /// Derivative is one-sided (lattice line) or zero by clamping.
    bool one_sided = false;
};

/// Value and analytic derivatives of the bilinear read at uv.
inline SamplingJacobian sampling_jacobian(const GeometricMap& map, const Vec2& uv) {
    SamplingJacobian j;
    j.stencil = bilinear_stencil(map, uv);
    const auto& s = j.stencil;
    const Vec3 p00 = map.value(s.x[0], s.y[0]);
    const Vec3 p10 = map.value(s.x[1], s.y[1]);
    const Vec3 p01 = map.value(s.x[2], s.y[2]);
    const Vec3 p11 = map.value(s.x[3], s.y[3]);
    j.value = s.w[0] * p00 + s.w[1] * p10 + s.w[2] * p01 + s.w[3] * p11;
    const double fx = std::clamp(s.px, 0.0, static_cast<double>(map.width - 1)) - s.x[0];
    const double fy = std::clamp(s.py, 0.0, static_cast<double>(map.height - 1)) - s.y[0];
    const bool x_clamped = s.px < 0.0 || s.px > map.width - 1;
    const bool y_clamped = s.py < 0.0 || s.py > map.height - 1;
    if (!x_clamped) j.d_uv.col(0) = map.width * ((1 - fy) * (p10 - p00) + fy * (p11 - p01));
    if (!y_clamped) j.d_uv.col(1) = map.height * ((1 - fx) * (p01 - p00) + fx * (p11 - p10));
    j.one_sided = s.on_lattice || s.clamped;
    return j;
}

struct RoundtripStats {
    double mean = 0.0;
    double max = 0.0;
    /// Vertices whose bilinear read avoided masked pixels (the ones in mean/max).
    std::size_t counted = 0;
    /// Vertices that read a masked pixel, with their own error figures.
    std::size_t masked = 0;
    double masked_mean = 0.0;
    double masked_max = 0.0;
    std::vector<double> per_vertex;
};

/// |backward_sample(forward_map(V)) - V| per vertex.
inline RoundtripStats roundtrip_error(const Mesh& mesh, const UVEmbedding& emb, const RasterTable& table) {
    const GeometricMap map = forward_map(mesh.vertices(), table);
    SampleStats ss;
    const auto back = backward_sample(map, emb, &ss);
    RoundtripStats st;
    st.per_vertex.resize(back.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        const double e = (back[i] - mesh.vertices()[i]).norm();
        st.per_vertex[i] = e;
        if (ss.touched_mask[i]) {
            ++st.masked;
            st.masked_mean += e;
            st.masked_max = std::max(st.masked_max, e);
        } else {
            ++st.counted;
            st.mean += e;
            st.max = std::max(st.max, e);
        }
    }
    if (st.counted) st.mean /= static_cast<double>(st.counted);
    if (st.masked) st.masked_mean /= static_cast<double>(st.masked);
    return st;
}

/// Mirrors columns and negates channel 0; the mask is mirrored with the data.
inline GeometricMap flip_map(const GeometricMap& in) {
    GeometricMap out(in.height, in.width);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            const int sx = in.width - 1 - x;
            out.mask[out.pixel(x, y)] = in.mask[in.pixel(sx, y)];
            out.at(x, y, 0) = -in.at(sx, y, 0);
            out.at(x, y, 1) = in.at(sx, y, 1);
            out.at(x, y, 2) = in.at(sx, y, 2);
        }
    }
    return out;
}

}  // namespace gmap
