#pragma once

// Hybrid training loss: a clamped geometric term over exact virtual
// correspondences plus temperature-gated binary cross-entropy over every
// prediction head, summed across pruning modules.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "corrprune/geometry.hpp"
#include "corrprune/rng.hpp"
#include "corrprune/synthdata.hpp"
#include "corrprune/types.hpp"

namespace corrprune {

struct LossConfig {
    double beta = 0.5;        // classification weight
    double geo_clamp = 0.5;   // per-pair geometric loss cap
    double eps_label = kDefaultEpipolarThreshold;
    double ambiguity = 10.0;  // band multiplier lambda
    int n_virtual = 100;

    void validate() const {
        if (!(beta >= 0.0)) throw ConfigError("beta must be nonnegative");
        if (!(geo_clamp > 0.0)) throw ConfigError("geo_clamp must be positive");
        if (!(eps_label > 0.0)) throw ConfigError("eps_label must be positive");
        if (!(ambiguity > 1.0)) throw ConfigError("ambiguity factor lambda must exceed 1");
        if (n_virtual < 1) throw ConfigError("n_virtual must be at least 1");
    }
};

/// Exact correspondences synthesized from the ground-truth pose; every member
/// satisfies the epipolar constraint to machine precision.
struct VirtualPairSet {
    CorrespondenceSet pairs;
};

inline VirtualPairSet make_virtual_pairs(const CameraPose& pose, std::size_t n, Rng& rng) {
    if (n < 1) throw ConfigError("virtual pair count must be at least 1");
    VirtualPairSet vp;
    vp.pairs.rows.reserve(n);
    std::size_t attempts = 0;
    while (vp.pairs.rows.size() < n) {
        if (++attempts > 10000 * n) {
            throw FrustumEmptyError("shared viewing frustum is empty for this pose");
        }
        const Eigen::Vector3d X = synth::random_frustum_point(rng);
        double u, v;
        if (!synth::visible_in_second_view(pose, X, &u, &v)) continue;
        vp.pairs.rows.push_back(Correspondence{X.x() / X.z(), X.y() / X.z(), u, v});
    }
    return vp;
}

/// Mean clamped symmetric epipolar distance over the virtual pairs.
inline double geometric_loss(const EssentialMatrix& E, const VirtualPairSet& vp, double clamp) {
    double total = 0.0;
    for (const Correspondence& c : vp.pairs.rows) {
        total += std::min(symmetric_epipolar_distance(E, c), clamp);
    }
    return total / static_cast<double>(vp.pairs.size());
}

/// d(distance)/dE for one correspondence.
inline Eigen::Matrix3d epipolar_distance_grad(const Eigen::Matrix3d& E, const Correspondence& c) {
    const Eigen::Vector3d p(c.x, c.y, 1.0);
    const Eigen::Vector3d pp(c.u, c.v, 1.0);
    const Eigen::Vector3d l = E * p;
    const Eigen::Vector3d m = E.transpose() * pp;
    const double r = pp.dot(l);
    const double den = l(0) * l(0) + l(1) * l(1) + m(0) * m(0) + m(1) * m(1);
    const double d = r * r / den;
    const Eigen::Vector3d lv(l(0), l(1), 0.0);
    const Eigen::Vector3d mv(m(0), m(1), 0.0);
    const Eigen::Matrix3d dden = 2.0 * (lv * p.transpose() + pp * mv.transpose());
    return (2.0 * r / den) * (pp * p.transpose()) - (d / den) * dden;
}

inline Eigen::Matrix3d geometric_loss_grad(const Eigen::Matrix3d& E, const VirtualPairSet& vp,
                                           double clamp) {
    Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
    for (const Correspondence& c : vp.pairs.rows) {
        EssentialMatrix wrapped{E};
        if (symmetric_epipolar_distance(wrapped, c) < clamp) {
            g += epipolar_distance_grad(E, c);
        }
    }
    return g / static_cast<double>(vp.pairs.size());
}

/// Per-row temperature: 0 inside the ambiguous band (eps, lambda*eps), else 1.
/// Since the loss applies sigma(tau * logit), tau = 0 pins the probability at
/// 0.5 and detaches the row from the classification gradient.
inline std::vector<double> adaptive_temperature(const EssentialMatrix& E_gt,
                                                const CorrespondenceSet& set, double eps_label,
                                                double lambda) {
    if (!(lambda > 1.0)) throw ConfigError("ambiguity factor lambda must exceed 1");
    std::vector<double> tau;
    tau.reserve(set.size());
    for (const Correspondence& c : set.rows) {
        const double d = symmetric_epipolar_distance(E_gt, c);
        tau.push_back(d > eps_label && d < lambda * eps_label ? 0.0 : 1.0);
    }
    return tau;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Numerically stable BCE of sigma(z) against y in {0, 1}.
inline double bce_with_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

/// Sum over (logits, labels, tau) triples of the mean BCE of sigma(tau*logit).
inline double classification_loss(const std::vector<std::vector<double>>& logit_sets,
                                  const std::vector<LabelSet>& labels_per_set,
                                  const std::vector<std::vector<double>>& tau_per_set) {
    if (logit_sets.size() != labels_per_set.size() || logit_sets.size() != tau_per_set.size()) {
        throw LengthMismatchError("classification loss needs aligned triples");
    }
    double total = 0.0;
    for (std::size_t s = 0; s < logit_sets.size(); ++s) {
        const auto& z = logit_sets[s];
        const auto& y = labels_per_set[s].y;
        const auto& tau = tau_per_set[s];
        if (z.size() != y.size() || z.size() != tau.size() || z.empty()) {
            throw LengthMismatchError("logits, labels and tau must have equal nonzero length");
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            sum += bce_with_logit(tau[i] * z[i], static_cast<double>(y[i]));
        }
        total += sum / static_cast<double>(z.size());
    }
    return total;
}

inline double hybrid_loss(const EssentialMatrix& E, const VirtualPairSet& vp,
                          const std::vector<std::vector<double>>& logit_sets,
                          const std::vector<LabelSet>& labels_per_set,
                          const std::vector<std::vector<double>>& tau_per_set,
                          const LossConfig& cfg) {
    cfg.validate();
    return geometric_loss(E, vp, cfg.geo_clamp) +
           cfg.beta * classification_loss(logit_sets, labels_per_set, tau_per_set);
}

}  // namespace corrprune
