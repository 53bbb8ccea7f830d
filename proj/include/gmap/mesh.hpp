#pragma once

#include "gmap/common.hpp"

#include <Eigen/Geometry>

#include <array>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gmap {

/// Vertex indices of one triangle, 0-based, counter-clockwise.
using Triangle = std::array<int, 3>;

/// Shared-topology triangle mesh. Positions are in millimetres. Adjacency (sorted 1-rings,
/// stored CSR style) is built once at construction; the mesh is immutable afterwards.
class Mesh {
public:
    Mesh() = default;

    Mesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
        : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
        const int n = static_cast<int>(vertices_.size());
        for (std::size_t t = 0; t < triangles_.size(); ++t) {
            const auto& tri = triangles_[t];
            for (int k = 0; k < 3; ++k) {
                if (tri[k] < 0 || tri[k] >= n)
                    throw InvalidArgument("triangle " + std::to_string(t) + " references vertex " +
                                          std::to_string(tri[k]) + " outside [0, " +
                                          std::to_string(n) + ")");
            }
            if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
                throw InvalidArgument("triangle " + std::to_string(t) + " repeats a vertex index");
        }
        build_adjacency();
    }

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_triangles() const { return triangles_.size(); }
    std::size_t num_edges() const { return ring_indices_.size() / 2; }

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    const Vec3& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }

    /// Sorted 1-ring of vertex i. No bounds check; see one_ring() for the checked form.
    std::span<const int> ring(int i) const {
        const auto b = ring_offsets_[static_cast<std::size_t>(i)];
        const auto e = ring_offsets_[static_cast<std::size_t>(i) + 1];
        return {ring_indices_.data() + b, e - b};
    }

    /// Flat CSR position of the first ring entry of vertex i; ring(i)[k] lives at ring_begin(i)+k.
    std::size_t ring_begin(int i) const { return ring_offsets_[static_cast<std::size_t>(i)]; }
    std::size_t ring_storage_size() const { return ring_indices_.size(); }

    /// Same topology, new positions.
    Mesh with_vertices(std::vector<Vec3> positions) const {
        if (positions.size() != vertices_.size())
            throw InvalidArgument("with_vertices: expected " + std::to_string(vertices_.size()) +
                                  " positions, got " + std::to_string(positions.size()));
        Mesh m = *this;
        m.vertices_ = std::move(positions);
        return m;
    }

private:
    void build_adjacency() {
        const std::size_t n = vertices_.size();
        std::vector<std::vector<int>> rings(n);
        for (const auto& tri : triangles_) {
            for (int k = 0; k < 3; ++k) {
                const int a = tri[k];
                const int b = tri[(k + 1) % 3];
                rings[static_cast<std::size_t>(a)].push_back(b);
                rings[static_cast<std::size_t>(b)].push_back(a);
            }
        }
        ring_offsets_.assign(n + 1, 0);
        ring_indices_.clear();
        for (std::size_t i = 0; i < n; ++i) {
            auto& r = rings[i];
            std::sort(r.begin(), r.end());
            r.erase(std::unique(r.begin(), r.end()), r.end());
            ring_indices_.insert(ring_indices_.end(), r.begin(), r.end());
            ring_offsets_[i + 1] = ring_indices_.size();
        }
    }

    std::vector<Vec3> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<std::size_t> ring_offsets_{0};
    std::vector<int> ring_indices_;
};

/// Checked 1-ring lookup.
inline std::span<const int> one_ring(const Mesh& mesh, int i) {
    if (i < 0 || static_cast<std::size_t>(i) >= mesh.num_vertices())
        throw InvalidArgument("one_ring: vertex " + std::to_string(i) + " out of range [0, " +
                              std::to_string(mesh.num_vertices()) + ")");
    return mesh.ring(i);
}

struct TopologyReport {
    bool is_manifold = true;
    bool is_oriented = true;
    int boundary_loops = 0;
    /// Outer loop (longest in 3D), starting at its smallest vertex index, surface on the left.
    std::vector<int> boundary_vertices;
    /// Every loop, in discovery order; boundary_vertices is one of these.
    std::vector<std::vector<int>> loops;
    std::size_t n_vertices = 0;
    std::size_t n_triangles = 0;
    std::size_t non_manifold_edges = 0;
    std::size_t non_manifold_vertices = 0;
    std::size_t isolated_vertices = 0;
};

namespace detail {

struct EdgeKey {
    int a, b;
    friend bool operator<(const EdgeKey& x, const EdgeKey& y) {
        return x.a != y.a ? x.a < y.a : x.b < y.b;
    }
};

inline int find_root(std::vector<int>& parent, int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
    }
    return x;
}

}  // namespace detail

/// Manifoldness, orientation and boundary loops. Problems are reported, never thrown.
inline TopologyReport validate_topology(const Mesh& mesh) {
    TopologyReport report;
    report.n_vertices = mesh.num_vertices();
    report.n_triangles = mesh.num_triangles();
    const auto& tris = mesh.triangles();

    std::map<detail::EdgeKey, int> undirected;
    std::map<detail::EdgeKey, int> directed;
    for (const auto& tri : tris) {
        for (int k = 0; k < 3; ++k) {
            const int a = tri[k];
            const int b = tri[(k + 1) % 3];
            ++undirected[{std::min(a, b), std::max(a, b)}];
            ++directed[{a, b}];
        }
    }
    for (const auto& [e, count] : undirected) {
        if (count > 2) ++report.non_manifold_edges;
    }
    for (const auto& [e, count] : directed) {
        if (count > 1) report.is_oriented = false;
    }

    // Vertex manifoldness: the triangles around each vertex must form one edge-connected fan.
    std::vector<std::vector<int>> incident(mesh.num_vertices());
    for (std::size_t t = 0; t < tris.size(); ++t)
        for (int v : tris[t]) incident[static_cast<std::size_t>(v)].push_back(static_cast<int>(t));
    for (std::size_t v = 0; v < incident.size(); ++v) {
        const auto& fan = incident[v];
        if (fan.empty()) {
            ++report.isolated_vertices;
            continue;
        }
        std::vector<int> parent(fan.size());
        std::iota(parent.begin(), parent.end(), 0);
        std::map<int, int> first_seen;  // other vertex -> fan slot
        for (std::size_t s = 0; s < fan.size(); ++s) {
            for (int w : tris[static_cast<std::size_t>(fan[s])]) {
                if (w == static_cast<int>(v)) continue;
                auto [it, inserted] = first_seen.emplace(w, static_cast<int>(s));
                if (!inserted) {
                    const int ra = detail::find_root(parent, it->second);
                    const int rb = detail::find_root(parent, static_cast<int>(s));
                    parent[static_cast<std::size_t>(ra)] = rb;
                }
            }
        }
        int components = 0;
        for (std::size_t s = 0; s < fan.size(); ++s)
            if (detail::find_root(parent, static_cast<int>(s)) == static_cast<int>(s)) ++components;
        if (components > 1) ++report.non_manifold_vertices;
    }
    report.is_manifold = report.non_manifold_edges == 0 && report.non_manifold_vertices == 0;

    // Boundary edges keep the direction of their only triangle, which puts the surface on the left.
    std::multimap<int, int> next;
    for (const auto& tri : tris) {
        for (int k = 0; k < 3; ++k) {
            const int a = tri[k];
            const int b = tri[(k + 1) % 3];
            if (undirected[{std::min(a, b), std::max(a, b)}] == 1) next.emplace(a, b);
        }
    }
    while (!next.empty()) {
        auto it = next.begin();
        const int start = it->first;
        std::vector<int> loop{start};
        int cur = it->second;
        next.erase(it);
        while (cur != start) {
            auto nit = next.find(cur);
            if (nit == next.end()) break;  // open chain on a non-manifold mesh
            loop.push_back(cur);
            cur = nit->second;
            next.erase(nit);
        }
        report.loops.push_back(std::move(loop));
    }
    report.boundary_loops = static_cast<int>(report.loops.size());

    double best = -1.0;
    for (const auto& loop : report.loops) {
        double len = 0.0;
        for (std::size_t k = 0; k < loop.size(); ++k)
            len += (mesh.vertex(loop[(k + 1) % loop.size()]) - mesh.vertex(loop[k])).norm();
        if (len > best) {
            best = len;
            report.boundary_vertices = loop;
        }
    }
    if (!report.boundary_vertices.empty()) {
        auto& bv = report.boundary_vertices;
        std::rotate(bv.begin(), std::min_element(bv.begin(), bv.end()), bv.end());
    }
    return report;
}

struct VertexNormals {
    std::vector<Vec3> normals;
    /// Vertices whose incident fan has no area (isolated or cancelling); their normal is zero.
    std::vector<int> degenerate;
};

/// Area-weighted vertex normals.
inline VertexNormals vertex_normals(const Mesh& mesh) {
    VertexNormals out;
    out.normals.assign(mesh.num_vertices(), Vec3::Zero());
    for (const auto& tri : mesh.triangles()) {
        const Vec3& a = mesh.vertex(tri[0]);
        const Vec3& b = mesh.vertex(tri[1]);
        const Vec3& c = mesh.vertex(tri[2]);
        const Vec3 face = (b - a).cross(c - a);  // length is twice the area
        for (int v : tri) out.normals[static_cast<std::size_t>(v)] += face;
    }
    for (std::size_t i = 0; i < out.normals.size(); ++i) {
        const double len = out.normals[i].norm();
        if (len > 0.0) {
            out.normals[i] /= len;
        } else {
            out.normals[i].setZero();
            out.degenerate.push_back(static_cast<int>(i));
        }
    }
    return out;
}

}  // namespace gmap
