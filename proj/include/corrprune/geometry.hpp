#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "corrprune/errors.hpp"
#include "corrprune/types.hpp"

namespace corrprune {

using Vector9d = Eigen::Matrix<double, 9, 1>;
using Matrix9d = Eigen::Matrix<double, 9, 9>;

/// 3x3 epipolar model for calibrated views: p'^T E p = 0 with p = (x, y, 1)
/// in view 1 and p' = (u, v, 1) in view 2.
struct EssentialMatrix {
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
};

/// Relative pose mapping view-1 coordinates into view 2: X2 = R X1 + t.
/// Translation is a unit direction; two-view scale is unobservable.
struct CameraPose {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::UnitX();
};

inline Eigen::Matrix3d cross_matrix(const Eigen::Vector3d& t) {
    Eigen::Matrix3d m;
    m << 0.0, -t.z(), t.y(),
         t.z(), 0.0, -t.x(),
         -t.y(), t.x(), 0.0;
    return m;
}

inline EssentialMatrix essential_from_pose(const CameraPose& pose) {
    return EssentialMatrix{cross_matrix(pose.t) * pose.R};
}

/// Flip the sign so the first largest-magnitude entry (row-major scan) is
/// positive. Makes eigenvector-derived matrices deterministic.
inline Eigen::Matrix3d sign_canonical(const Eigen::Matrix3d& m) {
    double best = 0.0;
    double best_val = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            if (std::abs(m(i, j)) > best) {
                best = std::abs(m(i, j));
                best_val = m(i, j);
            }
        }
    }
    return best_val < 0.0 ? Eigen::Matrix3d(-m) : m;
}

inline constexpr double kDenominatorGuard = 1e-15;

/// Squared epipolar residual normalized by the line-normal magnitudes in both
/// images. Invariant under rescaling of E.
inline double symmetric_epipolar_distance(const EssentialMatrix& E, const Correspondence& c) {
    const Eigen::Vector3d p(c.x, c.y, 1.0);
    const Eigen::Vector3d pp(c.u, c.v, 1.0);
    const Eigen::Vector3d Ep = E.m * p;
    const Eigen::Vector3d Etpp = E.m.transpose() * pp;
    const double num = pp.dot(Ep);
    const double den = Ep(0) * Ep(0) + Ep(1) * Ep(1) + Etpp(0) * Etpp(0) + Etpp(1) * Etpp(1);
    if (den <= kDenominatorGuard) {
        throw DegenerateDenominatorError("both epipolar line normals vanish");
    }
    return num * num / den;
}

inline std::vector<double> epipolar_distances(const EssentialMatrix& E, const CorrespondenceSet& set) {
    std::vector<double> d;
    d.reserve(set.size());
    for (const Correspondence& c : set.rows) d.push_back(symmetric_epipolar_distance(E, c));
    return d;
}

inline LabelSet label_correspondences(const EssentialMatrix& E_gt, const CorrespondenceSet& set,
                                      double eps_label) {
    if (!(eps_label > 0.0)) throw Error("eps_label must be positive");
    LabelSet labels;
    labels.y.reserve(set.size());
    for (const Correspondence& c : set.rows) {
        labels.y.push_back(symmetric_epipolar_distance(E_gt, c) < eps_label ? 1 : 0);
    }
    return labels;
}

/// Full-size verification: relabel every row of the original set by
/// thresholding its residual under the estimated model.
inline ProbabilitySet verify(const EssentialMatrix& E_hat, const CorrespondenceSet& full_set,
                             double eps_verify) {
    if (!(eps_verify > 0.0)) throw Error("eps_verify must be positive");
    ProbabilitySet p;
    p.kind = ProbabilitySet::Kind::binary;
    p.values.reserve(full_set.size());
    for (const Correspondence& c : full_set.rows) {
        p.values.push_back(symmetric_epipolar_distance(E_hat, c) < eps_verify ? 1.0 : 0.0);
    }
    return p;
}

/// Project m onto the essential manifold: U diag(1,1,0) V^T from its SVD.
/// The result always has Frobenius norm sqrt(2).
inline EssentialMatrix enforce_essential(const Eigen::Matrix3d& m) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d s = svd.singularValues();
    if (!(s(1) > 1e-12 * s(0))) {
        throw RankDeficiencyError("matrix is numerically rank-deficient; cannot enforce essential structure");
    }
    Eigen::Matrix3d d = Eigen::Matrix3d::Zero();
    d(0, 0) = 1.0;
    d(1, 1) = 1.0;
    return EssentialMatrix{svd.matrixU() * d * svd.matrixV().transpose()};
}

/// Row-major epipolar constraint vector: q . vec(E) == p'^T E p.
inline Vector9d epipolar_row(const Correspondence& c) {
    Vector9d q;
    q << c.u * c.x, c.u * c.y, c.u,
         c.v * c.x, c.v * c.y, c.v,
         c.x, c.y, 1.0;
    return q;
}

inline Eigen::Matrix3d unvec_row_major(const Vector9d& e) {
    Eigen::Matrix3d m;
    m << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
    return m;
}

inline Vector9d vec_row_major(const Eigen::Matrix3d& m) {
    Vector9d e;
    e << m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2);
    return e;
}

/// Everything the weighted eight-point solve produces, kept around for the
/// analytic gradient through the smallest eigenvector.
struct EightPointSolution {
    Matrix9d eigenvectors;      // columns, ascending eigenvalues
    Vector9d eigenvalues;
    Vector9d e0;                // canonical smallest eigenvector (unit norm)
    Eigen::Matrix3d E_raw;      // e0 reshaped row-major, Frobenius norm 1
    EssentialMatrix E;          // enforced and sign-canonical
};

inline EightPointSolution solve_weighted_eight_point(const CorrespondenceSet& set,
                                                     const std::vector<double>& weights) {
    if (weights.size() != set.size()) {
        throw LengthMismatchError("weights must align with the correspondence set");
    }
    std::size_t positive = 0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) throw Error("weights must be finite and nonnegative");
        if (w > 0.0) ++positive;
    }
    if (positive < 8) {
        throw InsufficientSupportError("weighted eight-point needs at least 8 strictly positive weights");
    }

    Matrix9d G = Matrix9d::Zero();
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (weights[i] == 0.0) continue;
        const Vector9d q = epipolar_row(set.rows[i]);
        G.noalias() += weights[i] * (q * q.transpose());
    }

    Eigen::SelfAdjointEigenSolver<Matrix9d> eig(G);
    if (eig.info() != Eigen::Success) throw Error("eigendecomposition failed");

    EightPointSolution sol;
    sol.eigenvectors = eig.eigenvectors();
    sol.eigenvalues = eig.eigenvalues();
    const double lambda_max = sol.eigenvalues(8);
    if (!(lambda_max > 0.0) || sol.eigenvalues(1) <= 1e-12 * lambda_max) {
        throw RankDeficiencyError("degenerate configuration: nullspace dimension exceeds one");
    }

    Vector9d e0 = sol.eigenvectors.col(0);
    double lead = 0.0, lead_val = 0.0;
    for (int i = 0; i < 9; ++i) {
        if (std::abs(e0(i)) > lead) {
            lead = std::abs(e0(i));
            lead_val = e0(i);
        }
    }
    if (lead_val < 0.0) e0 = -e0;
    sol.e0 = e0;
    sol.E_raw = unvec_row_major(e0);
    sol.E = EssentialMatrix{sign_canonical(enforce_essential(sol.E_raw).m)};
    return sol;
}

inline EssentialMatrix weighted_eight_point(const CorrespondenceSet& set,
                                            const std::vector<double>& weights) {
    return solve_weighted_eight_point(set, weights).E;
}

namespace detail {

/// Midpoint triangulation of the rays through a correspondence. Returns false
/// for near-parallel rays.
inline bool triangulate_midpoint(const CameraPose& pose, const Correspondence& c,
                                 Eigen::Vector3d* point) {
    const Eigen::Vector3d o1 = Eigen::Vector3d::Zero();
    const Eigen::Vector3d d1(c.x, c.y, 1.0);
    const Eigen::Vector3d o2 = -pose.R.transpose() * pose.t;
    const Eigen::Vector3d d2 = pose.R.transpose() * Eigen::Vector3d(c.u, c.v, 1.0);

    const double a = d1.dot(d1);
    const double b = d1.dot(d2);
    const double cc = d2.dot(d2);
    const Eigen::Vector3d w0 = o1 - o2;
    const double d = d1.dot(w0);
    const double e = d2.dot(w0);
    const double denom = a * cc - b * b;
    if (std::abs(denom) < 1e-14 * a * cc) return false;
    const double s1 = (b * e - cc * d) / denom;
    const double s2 = (a * e - b * d) / denom;
    *point = 0.5 * (o1 + s1 * d1 + o2 + s2 * d2);
    return true;
}

inline std::size_t count_cheiral(const CameraPose& pose, const CorrespondenceSet& support,
                                 std::size_t limit) {
    std::size_t count = 0;
    const std::size_t n = std::min(limit, support.size());
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Vector3d X;
        if (!triangulate_midpoint(pose, support.rows[i], &X)) continue;
        const double z1 = X.z();
        const double z2 = (pose.R * X + pose.t).z();
        if (z1 > 0.0 && z2 > 0.0) ++count;
    }
    return count;
}

}  // namespace detail

/// Depth test uses at most this many support rows.
inline constexpr std::size_t kCheiralitySupportLimit = 100;

/// Recover (R, t) from an essential matrix, picking the candidate with the
/// most support points in front of both cameras.
inline CameraPose decompose_essential(const EssentialMatrix& E, const CorrespondenceSet& support) {
    if (support.empty()) throw Error("decompose_essential needs a non-empty support set");

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(E.m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d U = svd.matrixU();
    Eigen::Matrix3d V = svd.matrixV();
    if (U.determinant() < 0.0) U.col(2) *= -1.0;
    if (V.determinant() < 0.0) V.col(2) *= -1.0;

    Eigen::Matrix3d W;
    W << 0.0, -1.0, 0.0,
         1.0, 0.0, 0.0,
         0.0, 0.0, 1.0;
    const Eigen::Matrix3d R1 = U * W * V.transpose();
    const Eigen::Matrix3d R2 = U * W.transpose() * V.transpose();
    const Eigen::Vector3d t = U.col(2);

    const CameraPose candidates[4] = {
        CameraPose{R1, t}, CameraPose{R1, -t}, CameraPose{R2, t}, CameraPose{R2, -t}};

    std::size_t counts[4];
    for (int k = 0; k < 4; ++k) {
        counts[k] = detail::count_cheiral(candidates[k], support, kCheiralitySupportLimit);
    }
    const std::size_t* best = std::max_element(counts, counts + 4);
    const std::size_t winners = std::count(counts, counts + 4, *best);
    if (*best == 0 || winners > 1) {
        throw CheiralityTieError("no pose candidate attains a strict cheirality maximum");
    }
    return candidates[best - counts];
}

struct PoseError {
    double rotation_deg = 0.0;
    double translation_deg = 0.0;
};

inline PoseError pose_error(const CameraPose& est, const CameraPose& gt) {
    constexpr double kRad2Deg = 180.0 / M_PI;

    // acos((trace - 1) / 2), evaluated through asin near zero where acos
    // loses half the significant digits.
    const Eigen::Matrix3d Q = gt.R.transpose() * est.R;
    const double cr = std::clamp((Q.trace() - 1.0) / 2.0, -1.0, 1.0);
    double theta_r;
    if (cr > 0.99) {
        const double f = (Eigen::Matrix3d::Identity() - Q).norm();  // 2*sqrt(2)*sin(theta/2)
        theta_r = 2.0 * std::asin(std::clamp(f / (2.0 * std::sqrt(2.0)), 0.0, 1.0));
    } else {
        theta_r = std::acos(cr);
    }

    // Translation sign is unobservable; compare directions via |dot|.
    const Eigen::Vector3d a = est.t.normalized();
    Eigen::Vector3d b = gt.t.normalized();
    if (a.dot(b) < 0.0) b = -b;
    const double ct = std::clamp(a.dot(b), 0.0, 1.0);
    double theta_t;
    if (ct > 0.99) {
        theta_t = 2.0 * std::asin(std::clamp((a - b).norm() / 2.0, 0.0, 1.0));
    } else {
        theta_t = std::acos(ct);
    }
    return PoseError{theta_r * kRad2Deg, theta_t * kRad2Deg};
}

}  // namespace corrprune
