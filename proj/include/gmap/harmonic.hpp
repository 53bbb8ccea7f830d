#pragma once

#include "gmap/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <numbers>
#include <queue>

namespace gmap {

enum class Frame { disk, square };

/// Per-vertex planar coordinates sharing the mesh topology.
struct UVEmbedding {
    std::vector<Vec2> uv;
    Frame frame = Frame::disk;

    std::size_t source_n() const { return uv.size(); }
};

/// Vertices pinned to planar positions. Parallel arrays, no duplicate vertices.
struct FixedPositions {
    std::vector<int> vertices;
    std::vector<Vec2> positions;

    std::size_t size() const { return vertices.size(); }
};

enum class LinearSolver { automatic, sparse, dense };

struct HarmonicOptions {
    LinearSolver solver = LinearSolver::automatic;
    /// automatic picks the dense solve below this many unknowns.
    std::size_t dense_below = 500;
    double residual_tolerance = 1e-10;
};

/// Smallest cotangent weight kept on an edge; negative weights are raised to it.
inline constexpr double kMinCotWeight = 1e-6;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * cross2(b - a, c - a);
}

/// Slot of j inside ring(i) in CSR storage, or npos when j is not a neighbour.
inline std::size_t ring_slot(const Mesh& mesh, int i, int j) {
    const auto r = mesh.ring(i);
    const auto it = std::lower_bound(r.begin(), r.end(), j);
    if (it == r.end() || *it != j) return static_cast<std::size_t>(-1);
    return mesh.ring_begin(i) + static_cast<std::size_t>(it - r.begin());
}

/// Symmetric cotangent weights (cot a + cot b) / 2 laid out like the mesh's ring storage.
inline std::vector<double> cotangent_weights(const Mesh& mesh) {
    std::vector<double> w(mesh.ring_storage_size(), 0.0);
    for (const auto& tri : mesh.triangles()) {
        for (int k = 0; k < 3; ++k) {
            const int a = tri[k];
            const int b = tri[(k + 1) % 3];
            const int c = tri[(k + 2) % 3];
            const Vec3 ea = mesh.vertex(a) - mesh.vertex(c);
            const Vec3 eb = mesh.vertex(b) - mesh.vertex(c);
            const double cross = ea.cross(eb).norm();
            const double cot = cross > 0.0 ? ea.dot(eb) / cross : 0.0;
            w[ring_slot(mesh, a, b)] += 0.5 * cot;
            w[ring_slot(mesh, b, a)] += 0.5 * cot;
        }
    }
    for (double& x : w) x = std::max(x, kMinCotWeight);
    return w;
}

/// Places the boundary loop on the unit circle by cumulative 3D arc length; loop[0] sits at angle 0.
inline FixedPositions boundary_to_circle(std::span<const int> loop, std::span<const Vec3> positions) {
    const std::size_t m = loop.size();
    if (m < 3) throw InvalidArgument("boundary_to_circle: loop needs at least 3 vertices");
    std::vector<double> cumulative(m, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        if (k > 0) cumulative[k] = total;
        total += (positions[static_cast<std::size_t>(loop[(k + 1) % m])] -
                  positions[static_cast<std::size_t>(loop[k])])
                     .norm();
    }
    if (!(total > 0.0)) throw InvalidArgument("boundary_to_circle: boundary has zero length");
    FixedPositions out;
    out.vertices.assign(loop.begin(), loop.end());
    out.positions.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double theta = 2.0 * std::numbers::pi * cumulative[k] / total;
        out.positions.emplace_back(std::cos(theta), std::sin(theta));
    }
    return out;
}

inline FixedPositions boundary_to_circle(const TopologyReport& report, const Mesh& mesh) {
    if (report.boundary_loops != 1)
        throw InvalidArgument("boundary_to_circle: expected exactly one boundary loop, found " +
                              std::to_string(report.boundary_loops));
    return boundary_to_circle(report.boundary_vertices, mesh.vertices());
}

struct HarmonicSolution {
    std::vector<Vec2> uv;
    /// max over free vertices of |uv_i - weighted ring average|.
    double residual = 0.0;
    bool used_dense = false;
};

/// Solves the weighted Laplace equation for every vertex not in `fixed`.
inline HarmonicSolution harmonic_extension(const Mesh& mesh, std::span<const double> weights,
                                           const FixedPositions& fixed,
                                           const HarmonicOptions& options = {}) {
    const std::size_t n = mesh.num_vertices();
    constexpr int kFree = -1;
    std::vector<int> fixed_slot(n, kFree);
    for (std::size_t k = 0; k < fixed.size(); ++k) {
        const int v = fixed.vertices[k];
        if (v < 0 || static_cast<std::size_t>(v) >= n)
            throw InvalidArgument("fixed vertex " + std::to_string(v) + " out of range");
        fixed_slot[static_cast<std::size_t>(v)] = static_cast<int>(k);
    }
    std::vector<int> unknown(n, -1);
    std::vector<int> free_vertices;
    for (std::size_t i = 0; i < n; ++i) {
        if (fixed_slot[i] == kFree) {
            unknown[i] = static_cast<int>(free_vertices.size());
            free_vertices.push_back(static_cast<int>(i));
        }
    }
    if (free_vertices.empty()) throw InvalidArgument("harmonic solve: no free vertices");

    // Every free vertex must connect to a fixed one, otherwise the system is singular.
    std::vector<char> reached(n, 0);
    std::queue<int> frontier;
    for (int v : fixed.vertices) {
        reached[static_cast<std::size_t>(v)] = 1;
        frontier.push(v);
    }
    while (!frontier.empty()) {
        const int v = frontier.front();
        frontier.pop();
        for (int j : mesh.ring(v)) {
            if (!reached[static_cast<std::size_t>(j)]) {
                reached[static_cast<std::size_t>(j)] = 1;
                frontier.push(j);
            }
        }
    }
    for (int v : free_vertices)
        if (!reached[static_cast<std::size_t>(v)])
            throw SingularSystem("harmonic solve: vertex " + std::to_string(v) +
                                 " is not connected to any fixed vertex");

    const auto m = static_cast<Eigen::Index>(free_vertices.size());
    Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(m, 2);
    std::vector<Eigen::Triplet<double>> entries;
    for (Eigen::Index r = 0; r < m; ++r) {
        const int i = free_vertices[static_cast<std::size_t>(r)];
        const auto ring = mesh.ring(i);
        double diag = 0.0;
        for (std::size_t k = 0; k < ring.size(); ++k) {
            const double w = weights[mesh.ring_begin(i) + k];
            const int j = ring[k];
            diag += w;
            if (unknown[static_cast<std::size_t>(j)] >= 0) {
                entries.emplace_back(r, unknown[static_cast<std::size_t>(j)], -w);
            } else {
                rhs.row(r) += w * fixed.positions[static_cast<std::size_t>(fixed_slot[static_cast<std::size_t>(j)])].transpose();
            }
        }
        entries.emplace_back(r, r, diag);
    }
    Eigen::SparseMatrix<double> lap(m, m);
    lap.setFromTriplets(entries.begin(), entries.end());

    const bool dense = options.solver == LinearSolver::dense ||
                       (options.solver == LinearSolver::automatic &&
                        static_cast<std::size_t>(m) < options.dense_below);

    Eigen::MatrixX2d x;
    auto refine = [&](auto&& solve) {
        x = solve(rhs);
        for (int pass = 0; pass < 3; ++pass) {
            const Eigen::MatrixX2d r = rhs - lap * x;
            if (r.cwiseAbs().maxCoeff() <= options.residual_tolerance) break;
            x += solve(r);
        }
    };
    if (dense) {
        const Eigen::MatrixXd a(lap);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
            throw SingularSystem("harmonic solve: dense factorization failed");
        refine([&](const Eigen::MatrixX2d& b) { return Eigen::MatrixX2d(ldlt.solve(b)); });
    } else {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(lap);
        if (ldlt.info() != Eigen::Success)
            throw SingularSystem("harmonic solve: sparse factorization failed");
        refine([&](const Eigen::MatrixX2d& b) { return Eigen::MatrixX2d(ldlt.solve(b)); });
    }

    HarmonicSolution out;
    out.used_dense = dense;
    out.uv.assign(n, Vec2::Zero());
    for (std::size_t k = 0; k < fixed.size(); ++k)
        out.uv[static_cast<std::size_t>(fixed.vertices[k])] = fixed.positions[k];
    for (Eigen::Index r = 0; r < m; ++r)
        out.uv[static_cast<std::size_t>(free_vertices[static_cast<std::size_t>(r)])] = x.row(r).transpose();

    for (int i : free_vertices) {
        const auto ring = mesh.ring(i);
        Vec2 avg = Vec2::Zero();
        double total = 0.0;
        for (std::size_t k = 0; k < ring.size(); ++k) {
            const double w = weights[mesh.ring_begin(i) + k];
            avg += w * out.uv[static_cast<std::size_t>(ring[k])];
            total += w;
        }
        out.residual = std::max(out.residual, (out.uv[static_cast<std::size_t>(i)] - avg / total).cwiseAbs().maxCoeff());
    }
    if (!std::isfinite(out.residual)) throw SingularSystem("harmonic solve: non-finite solution");
    return out;
}

/// Harmonic flattening with the whole boundary pinned (clamped cotangent weights).
inline UVEmbedding solve_harmonic(const Mesh& mesh, const FixedPositions& boundary,
                                  const HarmonicOptions& options = {}) {
    const auto report = validate_topology(mesh);
    std::vector<char> pinned(mesh.num_vertices(), 0);
    for (int v : boundary.vertices) {
        if (v < 0 || static_cast<std::size_t>(v) >= mesh.num_vertices())
            throw InvalidArgument("solve_harmonic: boundary vertex " + std::to_string(v) + " out of range");
        pinned[static_cast<std::size_t>(v)] = 1;
    }
    for (const auto& loop : report.loops)
        for (int v : loop)
            if (!pinned[static_cast<std::size_t>(v)])
                throw InvalidArgument("solve_harmonic: boundary vertex " + std::to_string(v) + " is not pinned");
    const auto weights = cotangent_weights(mesh);
    auto sol = harmonic_extension(mesh, weights, boundary, options);
    return UVEmbedding{std::move(sol.uv), Frame::disk};
}

/// Number of triangles whose signed area in the embedding is <= 0.
inline std::size_t check_flips(const UVEmbedding& emb, const Mesh& mesh) {
    if (emb.uv.size() != mesh.num_vertices())
        throw InvalidArgument("check_flips: embedding has " + std::to_string(emb.uv.size()) +
                              " vertices, mesh has " + std::to_string(mesh.num_vertices()));
    std::size_t flips = 0;
    for (const auto& t : mesh.triangles()) {
        const auto& uv = emb.uv;
        if (signed_area(uv[static_cast<std::size_t>(t[0])], uv[static_cast<std::size_t>(t[1])],
                        uv[static_cast<std::size_t>(t[2])]) <= 0.0)
            ++flips;
    }
    return flips;
}

}  // namespace gmap
