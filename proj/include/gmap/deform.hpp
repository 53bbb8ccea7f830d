#pragma once

#include "gmap/harmonic.hpp"
#include "gmap/rigid.hpp"

#include <array>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <utility>

namespace gmap {

/// A left/right mirror pair; `target` is where the left member goes, the right member goes to
/// its mirror image (1 - x, y).
struct LandmarkPair {
    int left = 0;
    int right = 0;
    Vec2 target = Vec2::Zero();
};

/// Vertices pinned during the square/symmetric deformation.
struct KeyVertexSpec {
    std::vector<LandmarkPair> landmark_pairs;
    /// Central-axis vertices; they are pinned to x = 0.5.
    std::vector<int> axis_vertices;
    /// Outer boundary loop in order (surface on the left). Filled from the mesh when empty.
    std::vector<int> edge_vertices;
    /// Boundary vertices pinned to (0,0), (1,0), (1,1), (0,1), in loop order.
    std::array<int, 4> corners{0, 0, 0, 0};
};

/// How the offset system is solved each iteration.
enum class OffsetSolve {
    /// Least squares over all n rows with the fixed columns removed: (A^T A) O = A^T B.
    moore_penrose,
    /// Minimise the smoothed-offset energy with fixed offsets held at zero (A_ff O_f = B_f).
    /// Differs from moore_penrose: the fixed rows' data terms drop out instead of being fitted.
    energy,
};

struct DeformParams {
    int max_iterations = 200;
    /// Stop once the mean free-vertex offset (uv units) drops below this.
    double convergence_threshold = 1e-5;
    /// 0 disables progress callbacks.
    int log_every = 0;
    OffsetSolve solve = OffsetSolve::moore_penrose;
    /// Rescale the 3D template so its area matches the unit square before fitting.
    bool normalize_scale = true;
    /// Carry the key-vertex displacement into the free vertices harmonically before iterating.
    bool warm_start = true;
};

struct IterationLog {
    int iteration = 0;
    double mean_offset = 0.0;
    double max_offset = 0.0;
};

struct DeformResult {
    UVEmbedding embedding;
    std::vector<IterationLog> log;
    FixedPositions targets;
    bool converged = false;
    int iterations = 0;
    /// Factor applied to the 3D template positions.
    double scale = 1.0;
};

/// Checks a spec against the mesh and fills edge_vertices from the boundary loop if empty.
/// Errors name the offending spec field.
inline KeyVertexSpec resolve_key_spec(KeyVertexSpec spec, const Mesh& mesh, const TopologyReport& report) {
    const int n = static_cast<int>(mesh.num_vertices());
    auto check_index = [n](int v, const std::string& field) {
        if (v < 0 || v >= n)
            throw InvalidArgument("key vertex spec field '" + field + "': vertex " + std::to_string(v) +
                                  " out of range [0, " + std::to_string(n) + ")");
    };
    for (int c : spec.corners) check_index(c, "corners");
    for (int a : spec.axis_vertices) check_index(a, "axis");
    for (const auto& p : spec.landmark_pairs) {
        check_index(p.left, "landmark_pairs");
        check_index(p.right, "landmark_pairs");
        if (p.left == p.right)
            throw InvalidArgument("key vertex spec field 'landmark_pairs': pair members must differ (" +
                                  std::to_string(p.left) + ")");
        if (!p.target.allFinite())
            throw InvalidArgument("key vertex spec field 'landmark_pairs': non-finite target");
    }
    if (spec.edge_vertices.empty()) {
        if (report.boundary_loops != 1)
            throw InvalidArgument("key vertex spec: mesh must have exactly one boundary loop, found " +
                                  std::to_string(report.boundary_loops));
        spec.edge_vertices = report.boundary_vertices;
    }
    for (int e : spec.edge_vertices) check_index(e, "edges");

    std::set<int> seen;
    auto claim = [&seen](int v, const std::string& field) {
        if (!seen.insert(v).second)
            throw InvalidArgument("key vertex spec field '" + field + "': vertex " + std::to_string(v) +
                                  " already has another role");
    };
    for (int e : spec.edge_vertices) claim(e, "edges");
    for (int a : spec.axis_vertices) claim(a, "axis");
    for (const auto& p : spec.landmark_pairs) {
        claim(p.left, "landmark_pairs");
        claim(p.right, "landmark_pairs");
    }
    std::set<int> corner_set(spec.corners.begin(), spec.corners.end());
    if (corner_set.size() != 4) throw InvalidArgument("key vertex spec field 'corners': corners must be distinct");
    for (int c : spec.corners)
        if (std::find(spec.edge_vertices.begin(), spec.edge_vertices.end(), c) == spec.edge_vertices.end())
            throw InvalidArgument("key vertex spec field 'corners': vertex " + std::to_string(c) +
                                  " is not on the boundary loop");
    return spec;
}

/// Target positions for every key vertex: edges on the unit-square perimeter by arc length of the
/// current embedding between corners, axis on x = 0.5, landmarks mirrored about the axis.
inline FixedPositions rearrange_key_vertices(const UVEmbedding& emb, const KeyVertexSpec& spec) {
    const auto& uv = emb.uv;
    const auto at = [&uv](int v) -> const Vec2& { return uv.at(static_cast<std::size_t>(v)); };
    FixedPositions out;

    // Edge vertices, walking the loop from corner 0.
    std::vector<int> loop = spec.edge_vertices;
    const auto start = std::find(loop.begin(), loop.end(), spec.corners[0]);
    if (start == loop.end())
        throw InvalidArgument("rearrange_key_vertices: corner " + std::to_string(spec.corners[0]) +
                              " is not on the boundary loop");
    std::rotate(loop.begin(), start, loop.end());
    std::array<std::size_t, 5> corner_pos{};
    for (int k = 0; k < 4; ++k) {
        const auto it = std::find(loop.begin(), loop.end(), spec.corners[static_cast<std::size_t>(k)]);
        if (it == loop.end())
            throw InvalidArgument("rearrange_key_vertices: corner " +
                                  std::to_string(spec.corners[static_cast<std::size_t>(k)]) +
                                  " is not on the boundary loop");
        corner_pos[static_cast<std::size_t>(k)] = static_cast<std::size_t>(it - loop.begin());
        if (k > 0 && corner_pos[static_cast<std::size_t>(k)] <= corner_pos[static_cast<std::size_t>(k) - 1])
            throw InvalidArgument("rearrange_key_vertices: corners are not in boundary-loop order");
    }
    corner_pos[4] = loop.size();
    static const std::array<Vec2, 5> square{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1), Vec2(0, 0)};
    for (std::size_t side = 0; side < 4; ++side) {
        const std::size_t b = corner_pos[side];
        const std::size_t e = corner_pos[side + 1];
        std::vector<double> arc{0.0};
        for (std::size_t k = b; k < e; ++k) {
            const int from = loop[k];
            const int to = loop[(k + 1) % loop.size()];
            arc.push_back(arc.back() + (at(to) - at(from)).norm());
        }
        const double total = arc.back();
        if (!(total > 0.0)) throw InvalidArgument("rearrange_key_vertices: zero-length boundary side");
        for (std::size_t k = b; k < e; ++k) {
            const double t = arc[k - b] / total;
            out.vertices.push_back(loop[k]);
            out.positions.push_back(k == b ? square[side] : Vec2((1.0 - t) * square[side] + t * square[side + 1]));
        }
    }

    // Axis: project on the bottom-to-top direction given by the corners, normalised by the
    // boundary's extent along it.
    if (!spec.axis_vertices.empty()) {
        const auto& c = spec.corners;
        const Vec2 up_raw = 0.5 * (at(c[2]) + at(c[3])) - 0.5 * (at(c[0]) + at(c[1]));
        if (!(up_raw.norm() > 0.0)) throw InvalidArgument("rearrange_key_vertices: degenerate corner layout");
        const Vec2 up = up_raw.normalized();
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (int v : spec.edge_vertices) {
            lo = std::min(lo, at(v).dot(up));
            hi = std::max(hi, at(v).dot(up));
        }
        for (int v : spec.axis_vertices) {
            out.vertices.push_back(v);
            out.positions.emplace_back(0.5, (at(v).dot(up) - lo) / (hi - lo));
        }
    }

    for (const auto& p : spec.landmark_pairs) {
        out.vertices.push_back(p.left);
        out.positions.push_back(p.target);
        out.vertices.push_back(p.right);
        out.positions.emplace_back(1.0 - p.target.x(), p.target.y());
    }
    return out;
}

/// Rigid fit of a 1-ring onto its planar targets (already lifted to z = 0).
inline RigidFit local_rigid_fit(std::span<const Vec3> source_ring, std::span<const Vec3> target_ring) {
    if (source_ring.size() != target_ring.size())
        throw InvalidArgument("local_rigid_fit: ring sizes differ");
    if (source_ring.size() < 3)
        throw InvalidArgument("local_rigid_fit: ring has " + std::to_string(source_ring.size()) +
                              " points, need at least 3");
    return kabsch(source_ring, target_ring);
}

struct PredictionStats {
    std::size_t degenerate_fits = 0;
    /// Largest per-ring RMS fitting residual.
    double max_ring_residual = 0.0;
};

namespace detail {

inline Vec3 lift(const Vec2& p) { return {p.x(), p.y(), 0.0}; }

// p_i = R_i v_i + T_i for each listed vertex. Rings of fewer than 3 vertices also include the
// vertex itself so the fit stays determined.
inline void predict_into(const Mesh& mesh, const std::vector<Vec2>& uv, std::span<const int> which,
                         std::vector<Vec3>& out, PredictionStats* stats) {
    std::vector<char> degenerate(which.size(), 0);
    std::vector<double> residual(which.size(), 0.0);
    parallel_for(which.size(), [&](std::size_t k) {
        const int i = which[k];
        const auto ring = mesh.ring(i);
        std::vector<Vec3> src;
        std::vector<Vec3> dst;
        src.reserve(ring.size() + 1);
        dst.reserve(ring.size() + 1);
        for (int j : ring) {
            src.push_back(mesh.vertex(j));
            dst.push_back(lift(uv[static_cast<std::size_t>(j)]));
        }
        if (src.size() < 3) {
            src.push_back(mesh.vertex(i));
            dst.push_back(lift(uv[static_cast<std::size_t>(i)]));
        }
        const RigidFit fit = local_rigid_fit(src, dst);
        out[static_cast<std::size_t>(i)] = fit.transform.apply(mesh.vertex(i));
        degenerate[k] = fit.degenerate ? 1 : 0;
        residual[k] = std::sqrt(fit.objective / static_cast<double>(src.size()));
    });
    if (stats) {
        for (std::size_t k = 0; k < which.size(); ++k) {
            stats->degenerate_fits += static_cast<std::size_t>(degenerate[k]);
            stats->max_ring_residual = std::max(stats->max_ring_residual, residual[k]);
        }
    }
}

}  // namespace detail

/// Per-vertex prediction p_i = R_i v_i + T_i from the rigid fit of ring i onto the embedding.
inline std::vector<Vec3> predict_positions(const Mesh& mesh, const UVEmbedding& emb,
                                           PredictionStats* stats = nullptr) {
    if (emb.uv.size() != mesh.num_vertices())
        throw InvalidArgument("predict_positions: embedding/mesh vertex count mismatch");
    std::vector<int> all(mesh.num_vertices());
    std::iota(all.begin(), all.end(), 0);
    std::vector<Vec3> out(mesh.num_vertices(), Vec3::Zero());
    detail::predict_into(mesh, emb.uv, all, out, stats);
    return out;
}

/// Offset system matrix: 1 + 2 N_i on the diagonal, -2 for each ring neighbour.
inline Eigen::SparseMatrix<double> assemble_offset_matrix(const Mesh& mesh) {
    const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(mesh.ring_storage_size() + mesh.num_vertices());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ring = mesh.ring(static_cast<int>(i));
        entries.emplace_back(i, i, 1.0 + 2.0 * static_cast<double>(ring.size()));
        for (int j : ring) entries.emplace_back(i, j, -2.0);
    }
    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(entries.begin(), entries.end());
    return a;
}

/// Factorizes the offset system once for a fixed topology and pinned set; solve() is then cheap.
class OffsetSmoother {
public:
    OffsetSmoother(const Mesh& mesh, std::span<const int> fixed, OffsetSolve mode = OffsetSolve::moore_penrose)
        : n_(mesh.num_vertices()), mode_(mode) {
        if (fixed.empty()) throw InvalidArgument("smooth_offsets: fixed set is empty");
        std::vector<char> is_fixed(n_, 0);
        for (int v : fixed) {
            if (v < 0 || static_cast<std::size_t>(v) >= n_)
                throw InvalidArgument("smooth_offsets: fixed vertex " + std::to_string(v) + " out of range");
            is_fixed[static_cast<std::size_t>(v)] = 1;
        }
        column_.assign(n_, -1);
        for (std::size_t i = 0; i < n_; ++i) {
            if (!is_fixed[i]) {
                column_[i] = static_cast<int>(free_.size());
                free_.push_back(static_cast<int>(i));
            }
        }
        if (free_.empty()) throw InvalidArgument("smooth_offsets: every vertex is fixed");

        const Eigen::SparseMatrix<double> a = assemble_offset_matrix(mesh);
        const auto nf = static_cast<Eigen::Index>(free_.size());
        // Keep the free columns (all rows).
        std::vector<Eigen::Triplet<double>> entries;
        for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
            const int c = column_[static_cast<std::size_t>(col)];
            if (c < 0) continue;
            for (Eigen::SparseMatrix<double>::InnerIterator it(a, col); it; ++it)
                entries.emplace_back(it.row(), c, it.value());
        }
        a_free_cols_.resize(static_cast<Eigen::Index>(n_), nf);
        a_free_cols_.setFromTriplets(entries.begin(), entries.end());

        Eigen::SparseMatrix<double> system;
        if (mode_ == OffsetSolve::energy) {
            std::vector<Eigen::Triplet<double>> sub;
            for (const auto& t : entries) {
                const int r = column_[static_cast<std::size_t>(t.row())];
                if (r >= 0) sub.emplace_back(r, t.col(), t.value());
            }
            system.resize(nf, nf);
            system.setFromTriplets(sub.begin(), sub.end());
        } else {
            system = Eigen::SparseMatrix<double>(a_free_cols_.transpose() * a_free_cols_);
        }
        system_ = system;
        solver_.compute(system_);
        if (solver_.info() != Eigen::Success) throw SingularSystem("smooth_offsets: normal equations are singular");
    }

    /// `rhs` holds B = p - v (n x 3). Returns O (n x 3) with fixed rows zero.
    Eigen::MatrixX3d solve(const Eigen::MatrixX3d& rhs) const {
        if (static_cast<std::size_t>(rhs.rows()) != n_) throw InvalidArgument("smooth_offsets: B has wrong row count");
        Eigen::MatrixX3d b;
        if (mode_ == OffsetSolve::energy) {
            b.resize(static_cast<Eigen::Index>(free_.size()), 3);
            for (std::size_t k = 0; k < free_.size(); ++k) b.row(static_cast<Eigen::Index>(k)) = rhs.row(free_[k]);
        } else {
            b = a_free_cols_.transpose() * rhs;
        }
        Eigen::MatrixX3d x = solver_.solve(b);
        Eigen::MatrixX3d out = Eigen::MatrixX3d::Zero(static_cast<Eigen::Index>(n_), 3);
        for (std::size_t k = 0; k < free_.size(); ++k) out.row(free_[k]) = x.row(static_cast<Eigen::Index>(k));
        return out;
    }

    const std::vector<int>& free_vertices() const { return free_; }
    /// A with the fixed columns removed (n x (n - n_f)).
    const Eigen::SparseMatrix<double>& reduced_matrix() const { return a_free_cols_; }
    /// The factorized system (A_ff, or A^T A for moore_penrose).
    const Eigen::SparseMatrix<double>& system_matrix() const { return system_; }
    OffsetSolve mode() const { return mode_; }

private:
    std::size_t n_;
    OffsetSolve mode_;
    std::vector<int> free_;
    std::vector<int> column_;
    Eigen::SparseMatrix<double> a_free_cols_;
    Eigen::SparseMatrix<double> system_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

/// Data term B = p_i - (v_i, 0), one row per vertex.
inline Eigen::MatrixX3d offset_rhs(const std::vector<Vec2>& uv, const std::vector<Vec3>& predicted) {
    Eigen::MatrixX3d b(static_cast<Eigen::Index>(uv.size()), 3);
    for (std::size_t i = 0; i < uv.size(); ++i)
        b.row(static_cast<Eigen::Index>(i)) = (predicted[i] - detail::lift(uv[i])).transpose();
    return b;
}

/// Smoothed offsets for the free vertices (fixed rows are zero).
inline Eigen::MatrixX3d smooth_offsets(const Mesh& mesh, const UVEmbedding& emb, const std::vector<Vec3>& predicted,
                                       std::span<const int> fixed, OffsetSolve mode = OffsetSolve::moore_penrose) {
    if (emb.uv.size() != mesh.num_vertices() || predicted.size() != mesh.num_vertices())
        throw InvalidArgument("smooth_offsets: vertex count mismatch");
    const OffsetSmoother smoother(mesh, fixed, mode);
    return smoother.solve(offset_rhs(emb.uv, predicted));
}

/// Max of |uv_left - mirror(uv_right)| over pairs and |x - 0.5| over axis vertices.
inline double symmetry_error(const UVEmbedding& emb, std::span<const std::pair<int, int>> pairs,
                             std::span<const int> axis) {
    const auto& uv = emb.uv;
    double err = 0.0;
    for (const auto& [l, r] : pairs) {
        const Vec2& a = uv.at(static_cast<std::size_t>(l));
        const Vec2& b = uv.at(static_cast<std::size_t>(r));
        err = std::max(err, (a - Vec2(1.0 - b.x(), b.y())).norm());
    }
    for (int v : axis) err = std::max(err, std::abs(uv.at(static_cast<std::size_t>(v)).x() - 0.5));
    return err;
}

inline double symmetry_error(const UVEmbedding& emb, const KeyVertexSpec& spec) {
    std::vector<std::pair<int, int>> pairs;
    for (const auto& p : spec.landmark_pairs) pairs.emplace_back(p.left, p.right);
    return symmetry_error(emb, pairs, spec.axis_vertices);
}

/// Surface area of the mesh.
inline double surface_area(const Mesh& mesh) {
    double area = 0.0;
    for (const auto& t : mesh.triangles())
        area += 0.5 * (mesh.vertex(t[1]) - mesh.vertex(t[0])).cross(mesh.vertex(t[2]) - mesh.vertex(t[0])).norm();
    return area;
}

/// Deforms an initial embedding into the square, symmetric map: key vertices pinned at their
/// rearranged targets, free vertices moved by smoothed local-rigid offsets until the mean offset
/// falls below the threshold.
inline DeformResult deform_to_gmap(const Mesh& mesh, const UVEmbedding& initial, const KeyVertexSpec& spec_in,
                                   const DeformParams& params = {},
                                   const std::function<void(const IterationLog&)>& on_log = {}) {
    if (params.max_iterations < 1) throw InvalidArgument("deform_to_gmap: max_iterations must be >= 1");
    if (!(params.convergence_threshold > 0.0)) throw InvalidArgument("deform_to_gmap: threshold must be > 0");
    if (initial.uv.size() != mesh.num_vertices())
        throw InvalidArgument("deform_to_gmap: embedding/mesh vertex count mismatch");
    if (const auto flips = check_flips(initial, mesh); flips != 0)
        throw InvalidArgument("deform_to_gmap: input embedding has " + std::to_string(flips) + " flipped triangles");

    const TopologyReport report = validate_topology(mesh);
    const KeyVertexSpec spec = resolve_key_spec(spec_in, mesh, report);

    DeformResult result;
    result.targets = rearrange_key_vertices(initial, spec);
    const auto& fixed = result.targets.vertices;

    Mesh source = mesh;
    if (params.normalize_scale) {
        const double area = surface_area(mesh);
        if (!(area > 0.0)) throw InvalidArgument("deform_to_gmap: mesh has zero area");
        result.scale = 1.0 / std::sqrt(area);
        std::vector<Vec3> scaled = mesh.vertices();
        for (auto& p : scaled) p *= result.scale;
        source = mesh.with_vertices(std::move(scaled));
    }

    std::vector<Vec2> uv = initial.uv;
    if (params.warm_start) {
        FixedPositions shift;
        shift.vertices = fixed;
        for (std::size_t k = 0; k < fixed.size(); ++k)
            shift.positions.push_back(result.targets.positions[k] - uv[static_cast<std::size_t>(fixed[k])]);
        const auto disp = harmonic_extension(source, cotangent_weights(source), shift).uv;
        for (std::size_t i = 0; i < uv.size(); ++i) uv[i] += disp[i];
    }
    for (std::size_t k = 0; k < fixed.size(); ++k) uv[static_cast<std::size_t>(fixed[k])] = result.targets.positions[k];

    const OffsetSmoother smoother(source, fixed, params.solve);
    const auto& free_vertices = smoother.free_vertices();
    std::vector<int> predicted_set;
    if (params.solve == OffsetSolve::energy) {
        predicted_set = free_vertices;
    } else {
        predicted_set.resize(mesh.num_vertices());
        std::iota(predicted_set.begin(), predicted_set.end(), 0);
    }
    std::vector<Vec3> predicted(mesh.num_vertices());
    for (std::size_t i = 0; i < uv.size(); ++i) predicted[i] = detail::lift(uv[i]);

    for (int it = 1; it <= params.max_iterations; ++it) {
        detail::predict_into(source, uv, predicted_set, predicted, nullptr);
        const Eigen::MatrixX3d offsets = smoother.solve(offset_rhs(uv, predicted));
        IterationLog entry{it, 0.0, 0.0};
        for (int v : free_vertices) {
            const Vec2 o = offsets.row(v).head<2>().transpose();
            uv[static_cast<std::size_t>(v)] += o;
            const double len = o.norm();
            entry.mean_offset += len;
            entry.max_offset = std::max(entry.max_offset, len);
        }
        entry.mean_offset /= static_cast<double>(free_vertices.size());
        result.log.push_back(entry);
        result.iterations = it;
        if (on_log && params.log_every > 0 && it % params.log_every == 0) on_log(entry);
        if (entry.mean_offset < params.convergence_threshold) {
            result.converged = true;
            break;
        }
    }
    result.embedding = UVEmbedding{std::move(uv), Frame::square};
    return result;
}

}  // namespace gmap
