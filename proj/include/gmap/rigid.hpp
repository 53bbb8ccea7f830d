#pragma once

#include "gmap/common.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <span>

namespace gmap {

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

struct RigidFit {
    RigidTransform transform;
    /// Sum of squared residuals at the optimum.
    double objective = 0.0;
    /// Cross-covariance of rank < 2 (collinear or coincident points): rotation not unique.
    bool degenerate = false;
    /// The unconstrained optimum was a reflection and the weakest axis was negated.
    bool reflection_corrected = false;
};

/// Least-squares rotation (det +1) and translation taking `source` onto `target` (Kabsch).
/// Caller guarantees equal, non-zero sizes.
inline RigidFit kabsch(std::span<const Vec3> source, std::span<const Vec3> target) {
    const auto n = static_cast<double>(source.size());
    Vec3 cs = Vec3::Zero();
    Vec3 ct = Vec3::Zero();
    for (std::size_t k = 0; k < source.size(); ++k) {
        cs += source[k];
        ct += target[k];
    }
    cs /= n;
    ct /= n;

    Mat3 h = Mat3::Zero();
    for (std::size_t k = 0; k < source.size(); ++k) h += (source[k] - cs) * (target[k] - ct).transpose();

    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3& u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    const Vec3 sigma = svd.singularValues();

    RigidFit fit;
    Mat3 d = Mat3::Identity();
    if ((v * u.transpose()).determinant() < 0.0) {
        d(2, 2) = -1.0;
        fit.reflection_corrected = true;
    }
    fit.transform.rotation = v * d * u.transpose();
    fit.transform.translation = ct - fit.transform.rotation * cs;
    fit.degenerate = !(sigma(0) > 0.0) || sigma(1) <= 1e-12 * sigma(0);

    for (std::size_t k = 0; k < source.size(); ++k)
        fit.objective += (fit.transform.apply(source[k]) - target[k]).squaredNorm();
    return fit;
}

/// Angle (radians) of the relative rotation a^T b.
inline double rotation_angle_between(const Mat3& a, const Mat3& b) {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

}  // namespace gmap
