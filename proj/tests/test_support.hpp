#pragma once

// Shared helpers for the test suites. Oracles here are written directly
// against the math (scalar loops, explicit projections) and stay independent
// of the library code paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "corrprune/geometry.hpp"
#include "corrprune/rng.hpp"
#include "corrprune/types.hpp"

namespace testsupport {

using corrprune::CameraPose;
using corrprune::Correspondence;
using corrprune::CorrespondenceSet;
using corrprune::EssentialMatrix;
using corrprune::Rng;

inline Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle_rad) {
    return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

inline CameraPose random_pose(Rng& rng, double max_angle_deg = 30.0) {
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    if (axis.norm() < 1e-9) axis = Eigen::Vector3d::UnitZ();
    const double angle = rng.uniform(1e-3, max_angle_deg * M_PI / 180.0);
    Eigen::Vector3d t(rng.normal(), rng.normal(), rng.normal());
    while (t.norm() < 1e-9) t = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    return CameraPose{axis_angle(axis, angle), t.normalized()};
}

/// Project a view-1 point through the pose; true when visible in both views.
inline bool project_point(const CameraPose& pose, const Eigen::Vector3d& X, Correspondence* c,
                          double fov = 0.5) {
    if (X.z() <= 0.1) return false;
    const Eigen::Vector3d X2 = pose.R * X + pose.t;
    if (X2.z() <= 0.1) return false;
    const double x = X.x() / X.z(), y = X.y() / X.z();
    const double u = X2.x() / X2.z(), v = X2.y() / X2.z();
    if (std::abs(x) > fov || std::abs(y) > fov || std::abs(u) > fov || std::abs(v) > fov) return false;
    *c = Correspondence{x, y, u, v};
    return true;
}

/// Exact correspondences from points in the shared frustum.
inline CorrespondenceSet exact_scene(const CameraPose& pose, std::size_t n, Rng& rng) {
    CorrespondenceSet set;
    std::size_t guard = 0;
    while (set.size() < n) {
        if (++guard > 200000) throw std::runtime_error("exact_scene: pose too hostile");
        const double z = rng.uniform(2.0, 8.0);
        const Eigen::Vector3d X(rng.uniform(-0.5, 0.5) * z, rng.uniform(-0.5, 0.5) * z, z);
        Correspondence c;
        if (project_point(pose, X, &c)) set.rows.push_back(c);
    }
    return set;
}

inline Correspondence random_outlier(Rng& rng, double fov = 0.5) {
    return Correspondence{rng.uniform(-fov, fov), rng.uniform(-fov, fov), rng.uniform(-fov, fov),
                          rng.uniform(-fov, fov)};
}

/// Scalar-arithmetic oracle for the symmetric epipolar distance.
inline double distance_oracle(const Eigen::Matrix3d& E, const Correspondence& c) {
    const double l0 = E(0, 0) * c.x + E(0, 1) * c.y + E(0, 2);
    const double l1 = E(1, 0) * c.x + E(1, 1) * c.y + E(1, 2);
    const double l2 = E(2, 0) * c.x + E(2, 1) * c.y + E(2, 2);
    const double m0 = E(0, 0) * c.u + E(1, 0) * c.v + E(2, 0);
    const double m1 = E(0, 1) * c.u + E(1, 1) * c.v + E(2, 1);
    const double r = c.u * l0 + c.v * l1 + l2;
    return r * r / (l0 * l0 + l1 * l1 + m0 * m0 + m1 * m1);
}

/// Normalized Frobenius gap, best sign.
inline double essential_gap(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    const Eigen::Matrix3d an = a / a.norm();
    const Eigen::Matrix3d bn = b / b.norm();
    return std::min((an - bn).norm(), (an + bn).norm());
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-30});
}

inline double max_abs_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-12);
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace testsupport
