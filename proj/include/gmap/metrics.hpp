#pragma once

// Rigid alignment of a generated shape onto ground truth, then mean vertex distance (mm) and mean
// normal angle (degrees).

#include "gmap/mesh.hpp"
#include "gmap/rigid.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <numbers>
#include <optional>

namespace gmap {

enum class AlignMethod { procrustes_known_correspondence, icp_nearest_neighbor };

inline const char* to_string(AlignMethod m) {
    return m == AlignMethod::procrustes_known_correspondence ? "procrustes_known_correspondence"
                                                             : "icp_nearest_neighbor";
}

struct AlignmentResult {
    RigidTransform transform;
    double rms_before = 0.0;
    double rms_after = 0.0;
    AlignMethod method = AlignMethod::procrustes_known_correspondence;
    bool degenerate = false;
    int iterations = 0;
    /// ICP: nearest-neighbour rms at the start of each iteration, then the final value.
    std::vector<double> rms_history;

    std::vector<Vec3> apply(std::span<const Vec3> points) const {
        std::vector<Vec3> out;
        out.reserve(points.size());
        for (const auto& p : points) out.push_back(transform.apply(p));
        return out;
    }
};

inline double rms_distance(std::span<const Vec3> x, std::span<const Vec3> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]).squaredNorm();
    return std::sqrt(s / static_cast<double>(x.size()));
}

/// Closed-form rigid alignment of X onto Y with known correspondences.
inline AlignmentResult procrustes_align(std::span<const Vec3> x, std::span<const Vec3> y) {
    if (x.size() != y.size()) throw InvalidArgument("procrustes_align: point counts differ");
    if (x.size() < 3) throw InvalidArgument("procrustes_align: need at least 3 points");
    const RigidFit fit = kabsch(x, y);
    AlignmentResult r;
    r.transform = fit.transform;
    r.degenerate = fit.degenerate;
    r.rms_before = rms_distance(x, y);
    r.rms_after = std::sqrt(fit.objective / static_cast<double>(x.size()));
    r.iterations = 1;
    return r;
}

namespace detail {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;
using RPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using RValue = std::pair<RPoint, std::size_t>;

// Exact nearest neighbours in a fixed point set.
class NearestIndex {
public:
    explicit NearestIndex(std::span<const Vec3> points) {
        std::vector<RValue> values;
        values.reserve(points.size());
        for (std::size_t i = 0; i < points.size(); ++i)
            values.emplace_back(RPoint(points[i].x(), points[i].y(), points[i].z()), i);
        tree_ = bgi::rtree<RValue, bgi::rstar<16>>(values.begin(), values.end());
    }

    std::size_t nearest(const Vec3& q) const {
        std::vector<RValue> hit;
        tree_.query(bgi::nearest(RPoint(q.x(), q.y(), q.z()), 1), std::back_inserter(hit));
        return hit.front().second;
    }

    std::vector<std::size_t> nearest_k(const Vec3& q, std::size_t k) const {
        std::vector<RValue> hit;
        tree_.query(bgi::nearest(RPoint(q.x(), q.y(), q.z()), static_cast<unsigned>(k)), std::back_inserter(hit));
        std::vector<std::size_t> out;
        for (const auto& h : hit) out.push_back(h.second);
        return out;
    }

private:
    bgi::rtree<RValue, bgi::rstar<16>> tree_;
};

// Unit normals of a point set from the smallest principal axis of each k-neighbourhood.
inline std::vector<Vec3> pca_normals(std::span<const Vec3> y, const NearestIndex& index, std::size_t k) {
    std::vector<Vec3> n(y.size());
    parallel_for(y.size(), [&](std::size_t i) {
        const auto nb = index.nearest_k(y[i], std::min(k, y.size()));
        Vec3 c = Vec3::Zero();
        for (std::size_t j : nb) c += y[j];
        c /= static_cast<double>(nb.size());
        Mat3 cov = Mat3::Zero();
        for (std::size_t j : nb) cov += (y[j] - c) * (y[j] - c).transpose();
        n[i] = Eigen::SelfAdjointEigenSolver<Mat3>(cov).eigenvectors().col(0);
    });
    return n;
}

// One linearised point-to-plane step from the current pose; nullopt if the system is singular.
inline std::optional<RigidTransform> point_to_plane_step(const RigidTransform& pose, std::span<const Vec3> moved,
                                                         std::span<const Vec3> matched, std::span<const Vec3> normals) {
    using Vec6 = Eigen::Matrix<double, 6, 1>;
    Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
    Vec6 b = Vec6::Zero();
    for (std::size_t i = 0; i < moved.size(); ++i) {
        const Vec3& n = normals[i];
        Vec6 row;
        row << moved[i].cross(n), n;
        a += row * row.transpose();
        b += row * (matched[i] - moved[i]).dot(n);
    }
    const Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(a);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-12 * ldlt.vectorD().maxCoeff()))
        return std::nullopt;
    const Vec6 step = ldlt.solve(b);
    if (!step.allFinite()) return std::nullopt;
    const Vec3 w = step.head<3>();
    const Mat3 dr = w.norm() > 0.0 ? Mat3(Eigen::AngleAxisd(w.norm(), w.normalized())) : Mat3::Identity();
    RigidTransform next;
    next.rotation = dr * pose.rotation;
    next.translation = dr * pose.translation + step.tail<3>();
    return next;
}

}  // namespace detail

struct IcpOptions {
    int max_iterations = 50;
    /// Stop when the relative rms improvement falls below this.
    double relative_tolerance = 1e-8;
    /// Try a point-to-plane step first and fall back to the point-to-point step when it does not
    /// lower the nearest-neighbour rms. Off gives plain point-to-point ICP.
    bool point_to_plane = true;
    /// Neighbourhood size for the normals of Y.
    std::size_t normal_neighbours = 10;
};

/// ICP of X onto Y. The nearest-neighbour rms never increases between iterations.
inline AlignmentResult icp_align(std::span<const Vec3> x, std::span<const Vec3> y, const IcpOptions& opt = {}) {
    if (x.size() < 3 || y.size() < 3) throw InvalidArgument("icp_align: both sets need at least 3 points");
    if (opt.max_iterations < 1) throw InvalidArgument("icp_align: max_iterations must be >= 1");
    const detail::NearestIndex index(y);
    const std::vector<Vec3> y_normals =
        opt.point_to_plane ? detail::pca_normals(y, index, std::max<std::size_t>(opt.normal_neighbours, 3)) : std::vector<Vec3>{};
    AlignmentResult r;
    r.method = AlignMethod::icp_nearest_neighbor;

    struct State {
        std::vector<Vec3> moved, matched, normals;
        double rms = 0.0;
    };
    auto evaluate = [&](const RigidTransform& t) {
        State s;
        s.moved.resize(x.size());
        s.matched.resize(x.size());
        if (opt.point_to_plane) s.normals.resize(x.size());
        std::vector<double> d2(x.size());
        parallel_for(x.size(), [&](std::size_t i) {
            s.moved[i] = t.apply(x[i]);
            const std::size_t j = index.nearest(s.moved[i]);
            s.matched[i] = y[j];
            if (opt.point_to_plane) s.normals[i] = y_normals[j];
            d2[i] = (s.moved[i] - s.matched[i]).squaredNorm();
        });
        double sum = 0.0;
        for (double v : d2) sum += v;
        s.rms = std::sqrt(sum / static_cast<double>(x.size()));
        return s;
    };

    State cur = evaluate(r.transform);
    r.rms_before = cur.rms;
    r.rms_history.push_back(cur.rms);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        r.iterations = it;
        if (cur.rms == 0.0) break;
        std::optional<RigidTransform> accepted;
        State next;
        if (opt.point_to_plane) {
            if (const auto t = detail::point_to_plane_step(r.transform, cur.moved, cur.matched, cur.normals)) {
                next = evaluate(*t);
                if (next.rms <= cur.rms) accepted = *t;
            }
        }
        if (!accepted) {
            // Kabsch on the current pairs cannot raise their distance, and rematching only lowers it.
            const RigidFit fit = kabsch(x, cur.matched);
            r.degenerate = fit.degenerate;
            next = evaluate(fit.transform);
            if (next.rms > cur.rms) break;  // rounding only
            accepted = fit.transform;
        }
        r.transform = *accepted;
        r.rms_history.push_back(next.rms);
        const double improvement = (cur.rms - next.rms) / cur.rms;
        cur = std::move(next);
        if (improvement < opt.relative_tolerance) break;
    }
    r.rms_after = cur.rms;
    return r;
}

/// Mean Euclidean distance; with `squared`, mean squared distance.
inline double mse_v(std::span<const Vec3> x, std::span<const Vec3> y, bool squared = false) {
    if (x.size() != y.size()) throw InvalidArgument("mse_v: vertex counts differ");
    if (x.empty()) throw InvalidArgument("mse_v: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += squared ? (x[i] - y[i]).squaredNorm() : (x[i] - y[i]).norm();
    return s / static_cast<double>(x.size());
}

/// Mean angle in degrees between corresponding normals. Zero-length normals are skipped and
/// counted in `skipped`.
inline double mse_n(std::span<const Vec3> nx, std::span<const Vec3> ny, std::size_t* skipped = nullptr) {
    if (nx.size() != ny.size()) throw InvalidArgument("mse_n: normal counts differ");
    double s = 0.0;
    std::size_t used = 0;
    std::size_t skip = 0;
    for (std::size_t i = 0; i < nx.size(); ++i) {
        const double a = nx[i].norm();
        const double b = ny[i].norm();
        if (!(a > 0.0) || !(b > 0.0)) {
            ++skip;
            continue;
        }
        const double c = std::clamp(nx[i].dot(ny[i]) / (a * b), -1.0, 1.0);
        s += std::acos(c) * 180.0 / std::numbers::pi;
        ++used;
    }
    if (skipped) *skipped = skip;
    if (used == 0) throw InvalidArgument("mse_n: no usable normal pairs");
    return s / static_cast<double>(used);
}

struct MetricsReport {
    AlignmentResult alignment;
    double mse_v_mm = 0.0;
    double mse_n_deg = 0.0;
    std::size_t skipped_normals = 0;
};

/// Aligns `generated` onto `truth` and scores it. Both meshes share topology.
inline MetricsReport evaluate_pair(const Mesh& generated, const Mesh& truth,
                                   AlignMethod method = AlignMethod::procrustes_known_correspondence,
                                   bool squared = false) {
    if (generated.num_vertices() != truth.num_vertices())
        throw InvalidArgument("metrics: meshes have " + std::to_string(generated.num_vertices()) + " and " +
                              std::to_string(truth.num_vertices()) + " vertices");
    MetricsReport rep;
    rep.alignment = method == AlignMethod::procrustes_known_correspondence
                        ? procrustes_align(generated.vertices(), truth.vertices())
                        : icp_align(generated.vertices(), truth.vertices());
    const Mesh aligned = generated.with_vertices(rep.alignment.apply(generated.vertices()));
    rep.mse_v_mm = mse_v(aligned.vertices(), truth.vertices(), squared);
    const auto na = vertex_normals(aligned);
    const auto nb = vertex_normals(truth);
    rep.mse_n_deg = mse_n(na.normals, nb.normals, &rep.skipped_normals);
    return rep;
}

}  // namespace gmap
