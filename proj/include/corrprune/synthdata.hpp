#pragma once

// Deterministic synthetic epipolar scenes: ground-truth poses, exact inliers
// with optional Gaussian noise, uniform outliers, construction labels, and a
// bit-exact binary dataset format. Coordinates are camera-normalized; no
// intrinsics or pixels anywhere.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "corrprune/geometry.hpp"
#include "corrprune/rng.hpp"
#include "corrprune/types.hpp"

namespace corrprune {

/// Half field of view in normalized coordinates.
inline constexpr double kFov = 0.5;

/// Default squared symmetric-epipolar-distance threshold for labeling and
/// verification.
inline constexpr double kDefaultEpipolarThreshold = 1e-4;

inline constexpr double kMinSceneDepth = 2.0;
inline constexpr double kMaxSceneDepth = 8.0;

struct ScenePair {
    CameraPose pose;
    EssentialMatrix E_gt;
    CorrespondenceSet set;
    LabelSet labels;
    double sigma = 0.0;
    double outlier_rate = 0.0;
    std::uint64_t seed = 0;  // provenance only; not serialized
};

using Dataset = std::vector<ScenePair>;

struct DatasetSpec {
    std::size_t num_pairs = 100;
    std::size_t n = 512;
    double outlier_rate = 0.5;
    double noise_sigma = 1e-3;
    double max_angle_deg = 30.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (num_pairs < 1) throw ConfigError("num_pairs must be at least 1");
        if (n < 32) throw ConfigError("N per pair must be at least 32");
        if (!(outlier_rate >= 0.0 && outlier_rate < 1.0)) throw ConfigError("outlier_rate must be in [0, 1)");
        if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
        if (!(max_angle_deg > 0.0 && max_angle_deg <= 120.0)) throw ConfigError("max rotation angle must be in (0, 120]");
    }
};

namespace synth {

inline Eigen::Vector3d random_unit(Rng& rng) {
    Eigen::Vector3d v;
    do {
        v = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    } while (v.norm() < 1e-9);
    return v.normalized();
}

/// Random point in the view-1 frustum.
inline Eigen::Vector3d random_frustum_point(Rng& rng) {
    const double z = rng.uniform(kMinSceneDepth, kMaxSceneDepth);
    return {rng.uniform(-kFov, kFov) * z, rng.uniform(-kFov, kFov) * z, z};
}

inline bool visible_in_second_view(const CameraPose& pose, const Eigen::Vector3d& X, double* u,
                                   double* v) {
    const Eigen::Vector3d X2 = pose.R * X + pose.t;
    if (X2.z() <= 0.1) return false;
    *u = X2.x() / X2.z();
    *v = X2.y() / X2.z();
    return std::abs(*u) <= kFov && std::abs(*v) <= kFov;
}

/// Round through f32; dataset files store coordinates in single precision and
/// labels are computed on what the file will actually contain. The volatile
/// keeps the narrowing from being folded away (gcc's SLP pass elides the
/// round-trip at -O3 otherwise).
inline double quantize(double v) {
    volatile float f = static_cast<float>(v);
    return static_cast<double>(f);
}

}  // namespace synth

/// Rotation uniform over axes with angle uniform in (0, max_angle]; the
/// translation direction is re-sampled until at least 30% of a frustum probe
/// is visible in both views.
inline CameraPose sample_pose(Rng& rng, double max_angle_deg) {
    if (!(max_angle_deg > 0.0 && max_angle_deg <= 120.0)) {
        throw ConfigError("max rotation angle must be in (0, 120]");
    }
    const Eigen::Vector3d axis = synth::random_unit(rng);
    const double angle = (1.0 - rng.uniform()) * max_angle_deg * M_PI / 180.0;
    const Eigen::Matrix3d R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();

    constexpr int kProbe = 50;
    std::vector<Eigen::Vector3d> probe;
    probe.reserve(kProbe);
    for (int i = 0; i < kProbe; ++i) probe.push_back(synth::random_frustum_point(rng));

    for (int attempt = 0; attempt < 100; ++attempt) {
        const CameraPose pose{R, synth::random_unit(rng)};
        int visible = 0;
        double u, v;
        for (const auto& X : probe) {
            if (synth::visible_in_second_view(pose, X, &u, &v)) ++visible;
        }
        if (visible * 10 >= kProbe * 3) return pose;
    }
    throw VisibilityFailureError("no translation direction kept 30% of the frustum visible");
}

/// Generate one scene pair. Inliers are exact projections with Gaussian noise
/// on (u, v); outliers are independent uniform image points, re-sampled if
/// they accidentally satisfy the epipolar constraint so that construction
/// labels agree exactly with recomputed labels at sigma = 0.
inline ScenePair generate_pair(const DatasetSpec& spec, Rng& rng) {
    spec.validate();
    ScenePair pair;
    pair.sigma = spec.noise_sigma;
    pair.outlier_rate = spec.outlier_rate;
    pair.pose = sample_pose(rng, spec.max_angle_deg);
    pair.E_gt = essential_from_pose(pair.pose);

    // guard the ceiling against fp noise in (1 - rate) * n
    const auto n_inliers = static_cast<std::size_t>(
        std::ceil((1.0 - spec.outlier_rate) * static_cast<double>(spec.n) - 1e-9));
    const std::size_t n_outliers = spec.n - n_inliers;

    std::vector<Correspondence> rows;
    std::vector<std::uint8_t> labels;
    rows.reserve(spec.n);
    labels.reserve(spec.n);

    std::size_t guard = 0;
    while (rows.size() < n_inliers) {
        if (++guard > 10000 * spec.n) throw VisibilityFailureError("could not place inliers in the shared frustum");
        const Eigen::Vector3d X = synth::random_frustum_point(rng);
        double u, v;
        if (!synth::visible_in_second_view(pair.pose, X, &u, &v)) continue;
        Correspondence c;
        c.x = synth::quantize(X.x() / X.z());
        c.y = synth::quantize(X.y() / X.z());
        c.u = synth::quantize(u + spec.noise_sigma * rng.normal());
        c.v = synth::quantize(v + spec.noise_sigma * rng.normal());
        rows.push_back(c);
        labels.push_back(1);
    }
    guard = 0;
    while (rows.size() < spec.n) {
        if (++guard > 10000 * spec.n) throw VisibilityFailureError("could not place epipolar-inconsistent outliers");
        Correspondence c;
        c.x = synth::quantize(rng.uniform(-kFov, kFov));
        c.y = synth::quantize(rng.uniform(-kFov, kFov));
        c.u = synth::quantize(rng.uniform(-kFov, kFov));
        c.v = synth::quantize(rng.uniform(-kFov, kFov));
        if (symmetric_epipolar_distance(pair.E_gt, c) < kDefaultEpipolarThreshold) continue;
        rows.push_back(c);
        labels.push_back(0);
    }

    // Fisher-Yates shuffle, labels move with rows.
    for (std::size_t i = rows.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(rows[i - 1], rows[j]);
        std::swap(labels[i - 1], labels[j]);
    }
    pair.set.rows = std::move(rows);
    pair.labels.y = std::move(labels);

    // Cross-check construction labels against recomputation.
    const LabelSet recomputed = label_correspondences(pair.E_gt, pair.set, kDefaultEpipolarThreshold);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < spec.n; ++i) {
        if (recomputed.y[i] == pair.labels.y[i]) ++agree;
    }
    if (spec.noise_sigma == 0.0 ? agree != spec.n
                                : agree * 100 < spec.n * 99) {
        throw Error("generated labels disagree with recomputation beyond tolerance");
    }
    return pair;
}

/// Deterministic dataset: pair i is generated from sub-seed (seed, i).
inline Dataset generate_dataset(const DatasetSpec& spec) {
    spec.validate();
    Dataset data;
    data.reserve(spec.num_pairs);
    for (std::size_t i = 0; i < spec.num_pairs; ++i) {
        Rng rng(Rng::derive(spec.seed, i));
        ScenePair pair = generate_pair(spec, rng);
        pair.seed = spec.seed;
        data.push_back(std::move(pair));
    }
    return data;
}

// ---------------------------------------------------------------------------
// Dataset file format (little-endian):
//   magic "CPDS0001" (8 bytes); u32 pair count;
//   per pair: u32 N, f64[9] E_gt row-major, f64[9] R row-major, f64[3] t,
//             f64 sigma, f64 outlier_rate,
//             N records of f32 x, y, u, v, then N bytes of {0,1} labels.
// ---------------------------------------------------------------------------

namespace io {

inline void put_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
}

template <typename T>
void put(std::string& buf, T v) {
    put_bytes(buf, &v, sizeof(T));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw TruncationError("file ends prematurely");
    }

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

inline void write_file(const std::string& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline void check_magic(Reader& r, const char* expected8) {
    r.need(8);
    const std::string got(r.buf.data() + r.pos, 8);
    r.pos += 8;
    if (got.substr(0, 4) != std::string(expected8).substr(0, 4)) {
        throw BadMagicError("bad magic: expected " + std::string(expected8));
    }
    if (got != expected8) {
        throw VersionMismatchError("unsupported format version " + got);
    }
}

}  // namespace io

inline constexpr char kDatasetMagic[] = "CPDS0001";

inline std::string serialize_dataset(const Dataset& pairs) {
    std::string buf;
    io::put_bytes(buf, kDatasetMagic, 8);
    io::put<std::uint32_t>(buf, static_cast<std::uint32_t>(pairs.size()));
    for (const ScenePair& p : pairs) {
        io::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.set.size()));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) io::put<double>(buf, p.E_gt.m(i, j));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) io::put<double>(buf, p.pose.R(i, j));
        for (int i = 0; i < 3; ++i) io::put<double>(buf, p.pose.t(i));
        io::put<double>(buf, p.sigma);
        io::put<double>(buf, p.outlier_rate);
        for (const Correspondence& c : p.set.rows) {
            io::put<float>(buf, static_cast<float>(c.x));
            io::put<float>(buf, static_cast<float>(c.y));
            io::put<float>(buf, static_cast<float>(c.u));
            io::put<float>(buf, static_cast<float>(c.v));
        }
        for (std::uint8_t y : p.labels.y) io::put<std::uint8_t>(buf, y);
    }
    return buf;
}

inline void write_dataset(const std::string& path, const Dataset& pairs) {
    io::write_file(path, serialize_dataset(pairs));
}

inline Dataset parse_dataset(const std::string& buf) {
    io::Reader r{buf};
    io::check_magic(r, kDatasetMagic);
    const auto count = r.get<std::uint32_t>();
    Dataset out;
    out.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        ScenePair p;
        const auto n = r.get<std::uint32_t>();
        if (n < 1) throw IoError("pair with zero correspondences");
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) p.E_gt.m(i, j) = r.get<double>();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) p.pose.R(i, j) = r.get<double>();
        for (int i = 0; i < 3; ++i) p.pose.t(i) = r.get<double>();
        p.sigma = r.get<double>();
        p.outlier_rate = r.get<double>();
        p.set.rows.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            Correspondence c;
            c.x = r.get<float>();
            c.y = r.get<float>();
            c.u = r.get<float>();
            c.v = r.get<float>();
            if (!correspondence_valid(c)) throw IoError("correspondence outside the valid range");
            p.set.rows.push_back(c);
        }
        p.labels.y.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            const auto y = r.get<std::uint8_t>();
            if (y > 1) throw IoError("label byte must be 0 or 1");
            p.labels.y.push_back(y);
        }
        out.push_back(std::move(p));
    }
    if (r.pos != buf.size()) throw IoError("trailing bytes after the last pair");
    return out;
}

inline Dataset read_dataset(const std::string& path) {
    return parse_dataset(io::read_file(path));
}

/// Inspection export: one row per correspondence.
inline void export_dataset_csv(const std::string& path, const Dataset& pairs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "pair_id,x,y,u,v,label\n";
    char line[160];
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const ScenePair& p = pairs[k];
        for (std::size_t i = 0; i < p.set.size(); ++i) {
            const Correspondence& c = p.set.rows[i];
            std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g,%.9g,%d\n", k, c.x, c.y, c.u, c.v,
                          static_cast<int>(p.labels.y[i]));
            out << line;
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace corrprune
