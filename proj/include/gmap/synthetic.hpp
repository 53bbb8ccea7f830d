#pragma once

// Procedural meshes: a mirror-symmetric synthetic face template with its key-vertex spec, and
// small primitives used by tests and demos.

#include "gmap/deform.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace gmap {

/// Vertex (col, row) of a cols x rows lattice.
inline int grid_index(int cols, int col, int row) { return row * cols + col; }

/// Triangulates a cols x rows lattice, CCW in (col, row). Cells left of the middle column split
/// along one diagonal and cells right of it along the other, so the pattern is mirror symmetric.
inline std::vector<Triangle> symmetric_grid_triangles(int cols, int rows) {
    std::vector<Triangle> tris;
    const int half = (cols - 1) / 2;
    for (int r = 0; r + 1 < rows; ++r) {
        for (int c = 0; c + 1 < cols; ++c) {
            const int p00 = grid_index(cols, c, r);
            const int p10 = grid_index(cols, c + 1, r);
            const int p01 = grid_index(cols, c, r + 1);
            const int p11 = grid_index(cols, c + 1, r + 1);
            if (c < half) {
                tris.push_back({p00, p10, p11});
                tris.push_back({p00, p11, p01});
            } else {
                tris.push_back({p00, p10, p01});
                tris.push_back({p10, p11, p01});
            }
        }
    }
    return tris;
}

/// Planar grid covering [0,1]^2 in the z = 0 plane.
inline Mesh make_unit_grid(int cols, int rows) {
    std::vector<Vec3> v;
    v.reserve(static_cast<std::size_t>(cols * rows));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            v.emplace_back(static_cast<double>(c) / (cols - 1), static_cast<double>(r) / (rows - 1), 0.0);
    return Mesh(std::move(v), symmetric_grid_triangles(cols, rows));
}

struct SyntheticFace {
    Mesh mesh;
    KeyVertexSpec spec;
    /// Every (left, right) mirror pair of the lattice.
    std::vector<std::pair<int, int>> mirror_pairs;
    int cols = 0;
    int rows = 0;
};

/// Height of the synthetic face surface (mm) at lateral offset x and vertical position y (mm).
/// Depends on x only through x^2, so the surface is exactly mirror symmetric.
inline double synthetic_face_depth(double x, double y) {
    const auto bump = [](double dx, double dy, double sx, double sy) {
        return std::exp(-0.5 * (dx * dx / (sx * sx) + dy * dy / (sy * sy)));
    };
    const double x2 = x * x;
    const double ax = std::sqrt(x2);
    double z = -x2 / (2.0 * 95.0) - y * y / (2.0 * 220.0);
    z += 24.0 * bump(ax, y + 8.0, 9.0, 26.0);          // nose
    z += 7.0 * bump(ax, y + 32.0, 6.0, 5.0);           // nose tip
    z -= 11.0 * bump(ax - 33.0, y - 22.0, 13.0, 9.0);  // eye sockets
    z += 5.0 * bump(ax - 32.0, y - 40.0, 16.0, 5.0);   // brows
    z += 4.0 * bump(ax, y + 55.0, 22.0, 4.5);          // lips
    z -= 3.0 * bump(ax, y + 63.0, 24.0, 3.0);          // lip crease
    z += 6.0 * bump(ax, y + 82.0, 18.0, 9.0);          // chin
    z += 4.0 * bump(ax - 45.0, y + 10.0, 14.0, 18.0);  // cheekbones
    return z;
}

/// Mirror-symmetric synthetic face (mm). cols must be odd; the middle column is the central axis.
/// The outline narrows toward the chin. The spec pins the lattice corners, the whole interior
/// axis and four landmark pairs (eye corners, nose wings, mouth corners).
inline SyntheticFace make_synthetic_face(int cols = 55, int rows = 55) {
    if (cols < 5 || rows < 5 || cols % 2 == 0)
        throw InvalidArgument("make_synthetic_face: need odd cols >= 5 and rows >= 5");
    const int half = (cols - 1) / 2;
    const double height = 190.0;
    const double max_width = 150.0;

    std::vector<Vec3> v;
    v.reserve(static_cast<std::size_t>(cols * rows));
    for (int r = 0; r < rows; ++r) {
        const double t = static_cast<double>(r) / (rows - 1);  // 0 = chin, 1 = forehead
        const double width = max_width * (0.9 + 0.1 * std::sin(0.5 * std::numbers::pi * std::min(1.0, 1.25 * t)));
        const double y = (t - 0.5) * height;
        for (int c = 0; c < cols; ++c) {
            const double s = static_cast<double>(c - half) / half;  // exactly antisymmetric
            const double x = s * (0.5 * width);
            v.emplace_back(x, y, synthetic_face_depth(x, y));
        }
    }

    SyntheticFace face;
    face.cols = cols;
    face.rows = rows;
    face.mesh = Mesh(std::move(v), symmetric_grid_triangles(cols, rows));

    face.spec.corners = {grid_index(cols, 0, 0), grid_index(cols, cols - 1, 0),
                         grid_index(cols, cols - 1, rows - 1), grid_index(cols, 0, rows - 1)};
    for (int r = 1; r + 1 < rows; ++r) face.spec.axis_vertices.push_back(grid_index(cols, half, r));

    // Landmarks on the left half: lattice position (column, row fractions) and uv target. Targets
    // are where each feature settles when only the edges and axis are pinned, so they pull
    // along with the surface rather than against it.
    struct Mark {
        double col, row, tx, ty;
    };
    const std::array<Mark, 4> marks{{
        {0.22, 0.62, 0.229, 0.581},  // outer eye corner
        {0.40, 0.62, 0.397, 0.561},  // inner eye corner
        {0.42, 0.36, 0.420, 0.331},  // nose wing
        {0.34, 0.22, 0.335, 0.219},  // mouth corner
    }};
    for (const auto& m : marks) {
        const int c = static_cast<int>(std::lround(m.col * (cols - 1)));
        const int r = static_cast<int>(std::lround(m.row * (rows - 1)));
        if (c <= 0 || c >= half || r <= 0 || r >= rows - 1) continue;
        LandmarkPair p;
        p.left = grid_index(cols, c, r);
        p.right = grid_index(cols, cols - 1 - c, r);
        p.target = Vec2(m.tx, m.ty);
        face.spec.landmark_pairs.push_back(p);
    }
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < half; ++c)
            face.mirror_pairs.emplace_back(grid_index(cols, c, r), grid_index(cols, cols - 1 - c, r));
    return face;
}

inline Mesh make_tetrahedron() {
    return Mesh({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)},
                {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}});
}

/// Regular icosahedron on the unit sphere, outward-facing.
inline Mesh make_icosahedron() {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v{{-1, p, 0}, {1, p, 0},  {-1, -p, 0}, {1, -p, 0}, {0, -1, p},  {0, 1, p},
                        {0, -1, -p}, {0, 1, -p}, {p, 0, -1},  {p, 0, 1},  {-p, 0, -1}, {-p, 0, 1}};
    for (auto& x : v) x.normalize();
    std::vector<Triangle> t{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                            {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                            {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    return Mesh(std::move(v), std::move(t));
}

/// Icosphere by midpoint subdivision; `levels` = 3 gives 1280 faces.
inline Mesh make_icosphere(int levels) {
    Mesh base = make_icosahedron();
    std::vector<Vec3> v = base.vertices();
    std::vector<Triangle> t = base.triangles();
    for (int l = 0; l < levels; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back(((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]) * 0.5).normalized());
            const int idx = static_cast<int>(v.size()) - 1;
            mid.emplace(key, idx);
            return idx;
        };
        std::vector<Triangle> next;
        for (const auto& f : t) {
            const int ab = midpoint(f[0], f[1]);
            const int bc = midpoint(f[1], f[2]);
            const int ca = midpoint(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        t = std::move(next);
    }
    return Mesh(std::move(v), std::move(t));
}

/// Hexagonal patch of triangulated lattice points within `radius` rings of the origin, in z = 0.
/// Interior points get a uniform jitter of up to `jitter` lattice units.
inline Mesh make_hex_patch(int radius, double jitter = 0.0, unsigned seed = 1) {
    std::map<std::pair<int, int>, int> index;
    std::vector<Vec3> v;
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-jitter, jitter);
    const Vec2 ea(1.0, 0.0);
    const Vec2 eb(0.5, std::sqrt(3.0) / 2.0);
    for (int a = -radius; a <= radius; ++a) {
        for (int b = -radius; b <= radius; ++b) {
            if (std::abs(a + b) > radius) continue;
            Vec2 p = a * ea + b * eb;
            const bool boundary = std::max({std::abs(a), std::abs(b), std::abs(a + b)}) == radius;
            if (!boundary && jitter > 0.0) p += Vec2(u(rng), u(rng));
            index[{a, b}] = static_cast<int>(v.size());
            v.emplace_back(p.x(), p.y(), 0.0);
        }
    }
    std::vector<Triangle> t;
    for (const auto& [key, i] : index) {
        const auto [a, b] = key;
        const auto f10 = index.find({a + 1, b});
        const auto f01 = index.find({a, b + 1});
        const auto fm = index.find({a + 1, b - 1});
        if (f10 != index.end() && f01 != index.end()) t.push_back({i, f10->second, f01->second});
        if (f10 != index.end() && fm != index.end()) t.push_back({i, fm->second, f10->second});
    }
    return Mesh(std::move(v), std::move(t));
}

}  // namespace gmap
