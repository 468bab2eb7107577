#pragma once

// Plain RANSAC baseline over the weighted eight-point solver: uniform
// 8-row samples, consensus counting under the verification threshold, and a
// final refit on the best consensus set.

#include <cstdint>
#include <numeric>
#include <vector>

#include "corrprune/geometry.hpp"
#include "corrprune/rng.hpp"

namespace corrprune {

struct RansacResult {
    EssentialMatrix E;
    std::vector<std::uint8_t> inlier_mask;
    std::size_t consensus = 0;
    std::size_t failed_trials = 0;
};

inline RansacResult ransac_essential(const CorrespondenceSet& set, int iterations,
                                     double eps_inlier, Rng& rng) {
    const std::size_t n = set.size();
    if (n < 8) throw InsufficientSupportError("RANSAC needs at least 8 correspondences");
    if (iterations < 1) throw ConfigError("RANSAC needs at least one iteration");

    RansacResult best;
    bool have_model = false;
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    const std::vector<double> sample_weights(8, 1.0);

    for (int trial = 0; trial < iterations; ++trial) {
        // partial Fisher-Yates: first 8 entries become the sample
        for (std::size_t i = 0; i < 8; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
            std::swap(indices[i], indices[j]);
        }
        CorrespondenceSet sample;
        sample.rows.reserve(8);
        for (std::size_t i = 0; i < 8; ++i) sample.rows.push_back(set.rows[indices[i]]);

        EssentialMatrix model;
        try {
            model = weighted_eight_point(sample, sample_weights);
        } catch (const Error&) {
            ++best.failed_trials;
            continue;
        }
        std::size_t count = 0;
        for (const Correspondence& c : set.rows) {
            if (symmetric_epipolar_distance(model, c) < eps_inlier) ++count;
        }
        if (!have_model || count > best.consensus) {
            best.E = model;
            best.consensus = count;
            have_model = true;
        }
    }
    if (!have_model) throw RankDeficiencyError("every RANSAC trial failed");

    // refit on the best consensus with uniform weights
    auto mask_of = [&](const EssentialMatrix& E) {
        std::vector<std::uint8_t> mask(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            mask[i] = symmetric_epipolar_distance(E, set.rows[i]) < eps_inlier ? 1 : 0;
        }
        return mask;
    };
    std::vector<std::uint8_t> mask = mask_of(best.E);
    const auto support = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
    if (support >= 8) {
        std::vector<double> w(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) w[i] = mask[i] ? 1.0 : 0.0;
        try {
            best.E = weighted_eight_point(set, w);
            mask = mask_of(best.E);
        } catch (const Error&) {
            // keep the unrefit model
        }
    }
    best.inlier_mask = std::move(mask);
    best.consensus = static_cast<std::size_t>(std::count(best.inlier_mask.begin(), best.inlier_mask.end(), 1));
    return best;
}

}  // namespace corrprune
