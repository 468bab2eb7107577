#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <vector>

#include "corrprune/errors.hpp"

namespace corrprune {

/// One putative match between two views. Coordinates are normalized by the
/// camera intrinsics: p = (x, y, 1) in view 1, p' = (u, v, 1) in view 2.
struct Correspondence {
    double x = 0.0;
    double y = 0.0;
    double u = 0.0;
    double v = 0.0;
};

/// Sanity bound on normalized coordinates; generators and readers reject
/// anything outside it.
inline constexpr double kCoordBound = 10.0;

inline bool correspondence_valid(const Correspondence& c) {
    for (double t : {c.x, c.y, c.u, c.v}) {
        if (!std::isfinite(t) || std::abs(t) > kCoordBound) return false;
    }
    return true;
}

/// An ordered set of correspondences. Row order is significant and preserved
/// by every operation in the toolkit.
struct CorrespondenceSet {
    std::vector<Correspondence> rows;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }

    CorrespondenceSet subset(const std::vector<std::size_t>& indices) const {
        CorrespondenceSet out;
        out.rows.reserve(indices.size());
        for (std::size_t i : indices) out.rows.push_back(rows.at(i));
        return out;
    }
};

inline void validate_set(const CorrespondenceSet& set) {
    if (set.empty()) throw Error("correspondence set must contain at least one row");
    for (const Correspondence& c : set.rows) {
        if (!correspondence_valid(c)) throw Error("correspondence outside the valid coordinate range");
    }
}

/// Binary ground-truth inlier labels, aligned with a CorrespondenceSet.
struct LabelSet {
    std::vector<std::uint8_t> y;

    std::size_t size() const { return y.size(); }

    LabelSet subset(const std::vector<std::size_t>& indices) const {
        LabelSet out;
        out.y.reserve(indices.size());
        for (std::size_t i : indices) out.y.push_back(y.at(i));
        return out;
    }
};

/// Per-correspondence scores. `kind` records what the values mean.
struct ProbabilitySet {
    enum class Kind { logit, probability, binary };

    std::vector<double> values;
    Kind kind = Kind::logit;

    std::size_t size() const { return values.size(); }
};

}  // namespace corrprune
