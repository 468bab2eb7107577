#pragma once

// Evaluation: precision/recall/F over the verification output, pose-accuracy
// fractions at angular thresholds (three aggregation variants), dataset-level
// evaluation of a checkpoint or the RANSAC baseline, and report emission as a
// text table, CSV, or JSON lines.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrprune/pipeline.hpp"
#include "corrprune/ransac.hpp"
#include "corrprune/synthdata.hpp"

namespace corrprune {

struct PrfResult {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

/// Confusion-matrix metrics with the all-zero-denominator convention.
inline PrfResult prf(const ProbabilitySet& pred, const LabelSet& labels) {
    if (pred.size() != labels.size()) throw LengthMismatchError("prediction/label length mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.values[i] != 0.0;
        const bool y = labels.y[i] != 0;
        if (p && y) ++tp;
        if (p && !y) ++fp;
        if (!p && y) ++fn;
    }
    PrfResult r;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

/// Fraction of pairs with max(theta_R, theta_t) <= threshold.
inline double pose_map(const std::vector<PoseError>& errors, double threshold_deg) {
    if (errors.empty()) throw Error("pose_map needs a non-empty error list");
    std::size_t ok = 0;
    for (const PoseError& e : errors) {
        if (std::max(e.rotation_deg, e.translation_deg) <= threshold_deg) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(errors.size());
}

/// Mean of the max-fraction accuracy over 5-degree bins up to the threshold.
inline double pose_map_binned(const std::vector<PoseError>& errors, double threshold_deg) {
    double sum = 0.0;
    int bins = 0;
    for (double t = 5.0; t <= threshold_deg + 1e-9; t += 5.0) {
        sum += pose_map(errors, t);
        ++bins;
    }
    return bins > 0 ? sum / bins : pose_map(errors, threshold_deg);
}

/// Rotation and translation errors pooled as separate samples.
inline double pose_map_pooled(const std::vector<PoseError>& errors, double threshold_deg) {
    if (errors.empty()) throw Error("pose_map needs a non-empty error list");
    std::size_t ok = 0;
    for (const PoseError& e : errors) {
        if (e.rotation_deg <= threshold_deg) ++ok;
        if (e.translation_deg <= threshold_deg) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(2 * errors.size());
}

struct PairRecord {
    std::size_t index = 0;
    double precision = 0.0, recall = 0.0, f = 0.0;
    double theta_r = 180.0, theta_t = 180.0;
    bool failed = false;
    double ms = 0.0;
};

struct MetricsReport {
    std::string method = "learned";
    double precision = 0.0, recall = 0.0, f_score = 0.0;
    double map5 = 0.0, map20 = 0.0;                 // max-fraction variant
    double map5_binned = 0.0, map20_binned = 0.0;   // 5-degree-bin average
    double map5_pooled = 0.0, map20_pooled = 0.0;   // pooled angle samples
    double mean_ms = 0.0;
    std::size_t failures = 0;
    std::vector<PairRecord> pairs;
};

inline void finalize_report(MetricsReport& rep) {
    if (rep.pairs.empty()) return;
    std::vector<PoseError> errors;
    errors.reserve(rep.pairs.size());
    double psum = 0.0, rsum = 0.0, msum = 0.0;
    for (const PairRecord& p : rep.pairs) {
        psum += p.precision;
        rsum += p.recall;
        msum += p.ms;
        errors.push_back(PoseError{p.theta_r, p.theta_t});
        if (p.failed) ++rep.failures;
    }
    const auto n = static_cast<double>(rep.pairs.size());
    rep.precision = psum / n;
    rep.recall = rsum / n;
    rep.f_score = rep.precision + rep.recall > 0.0
                      ? 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall)
                      : 0.0;
    rep.map5 = pose_map(errors, 5.0);
    rep.map20 = pose_map(errors, 20.0);
    rep.map5_binned = pose_map_binned(errors, 5.0);
    rep.map20_binned = pose_map_binned(errors, 20.0);
    rep.map5_pooled = pose_map_pooled(errors, 5.0);
    rep.map20_pooled = pose_map_pooled(errors, 20.0);
    rep.mean_ms = msum / n;
}

struct EvalOptions {
    double eps_verify = kDefaultEpipolarThreshold;
    bool oracle_logits = false;  // diagnostic: inject ground-truth labels as logits
};

/// Per-pair: forward pass, verification metrics against the labels, pose
/// recovery from the estimated model. Failed pairs count 180-degree errors
/// (in the denominator of every pose metric, never the numerator).
inline MetricsReport evaluate(const Dataset& data, const ParamStore& ps, const StatStore& stats,
                              const NetworkConfig& net, const EvalOptions& opts = {}) {
    if (data.empty()) throw Error("evaluation dataset is empty");
    MetricsReport rep;
    rep.method = opts.oracle_logits ? "oracle" : "learned";
    for (std::size_t idx = 0; idx < data.size(); ++idx) {
        const ScenePair& pair = data[idx];
        PairRecord rec;
        rec.index = idx;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            std::vector<double> oracle;
            if (opts.oracle_logits) {
                oracle.reserve(pair.labels.size());
                for (auto y : pair.labels.y) oracle.push_back(static_cast<double>(y));
            }
            const PipelineForward fw = pipeline_forward(pair.set, ps, stats, net, opts.eps_verify,
                                                        false, opts.oracle_logits ? &oracle : nullptr);
            const PrfResult m = prf(fw.P, pair.labels);
            rec.precision = m.precision;
            rec.recall = m.recall;
            rec.f = m.f;

            CorrespondenceSet support;
            for (std::size_t i = 0; i < fw.P.size(); ++i) {
                if (fw.P.values[i] != 0.0) support.rows.push_back(pair.set.rows[i]);
            }
            if (support.empty()) support = fw.final_set;
            const CameraPose pose = decompose_essential(fw.E, support);
            const PoseError err = pose_error(pose, pair.pose);
            rec.theta_r = err.rotation_deg;
            rec.theta_t = err.translation_deg;
        } catch (const Error&) {
            rec.failed = true;
        }
        rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        rep.pairs.push_back(rec);
    }
    finalize_report(rep);
    return rep;
}

/// RANSAC baseline over the same dataset and metrics.
inline MetricsReport evaluate_ransac(const Dataset& data, int iterations, double eps_inlier,
                                     std::uint64_t seed) {
    if (data.empty()) throw Error("evaluation dataset is empty");
    MetricsReport rep;
    rep.method = "ransac";
    for (std::size_t idx = 0; idx < data.size(); ++idx) {
        const ScenePair& pair = data[idx];
        PairRecord rec;
        rec.index = idx;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            Rng rng(Rng::derive(seed, idx, 0x4A5));
            const RansacResult rr = ransac_essential(pair.set, iterations, eps_inlier, rng);
            ProbabilitySet pred;
            pred.kind = ProbabilitySet::Kind::binary;
            for (auto b : rr.inlier_mask) pred.values.push_back(static_cast<double>(b));
            const PrfResult m = prf(pred, pair.labels);
            rec.precision = m.precision;
            rec.recall = m.recall;
            rec.f = m.f;
            CorrespondenceSet support;
            for (std::size_t i = 0; i < rr.inlier_mask.size(); ++i) {
                if (rr.inlier_mask[i]) support.rows.push_back(pair.set.rows[i]);
            }
            if (support.empty()) support = pair.set;
            const CameraPose pose = decompose_essential(rr.E, support);
            const PoseError err = pose_error(pose, pair.pose);
            rec.theta_r = err.rotation_deg;
            rec.theta_t = err.translation_deg;
        } catch (const Error&) {
            rec.failed = true;
        }
        rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        rep.pairs.push_back(rec);
    }
    finalize_report(rep);
    return rep;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

enum class ReportFormat { text_table, csv, json_lines };

inline ReportFormat report_format_from_string(const std::string& s) {
    if (s == "text" || s == "text-table") return ReportFormat::text_table;
    if (s == "csv") return ReportFormat::csv;
    if (s == "jsonl" || s == "json-lines") return ReportFormat::json_lines;
    throw ConfigError("unknown report format: " + s);
}

inline std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline void emit_report_text(std::ostream& out, const std::vector<MetricsReport>& reports) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s %8s %8s %10s\n", "method", "mAP5", "mAP20",
                  "P", "R", "F", "ART(ms)");
    out << line;
    for (const MetricsReport& r : reports) {
        std::snprintf(line, sizeof(line), "%-12s %8.4f %8.4f %8.4f %8.4f %8.4f %10.2f\n",
                      r.method.c_str(), r.map5, r.map20, r.precision, r.recall, r.f_score, r.mean_ms);
        out << line;
    }
}

inline void emit_report_csv(std::ostream& out, const std::vector<MetricsReport>& reports) {
    out << "method,scope,pair_id,precision,recall,f,theta_r,theta_t,failed,ms,"
           "map5,map20,map5_binned,map20_binned,map5_pooled,map20_pooled\n";
    for (const MetricsReport& r : reports) {
        for (const PairRecord& p : r.pairs) {
            out << r.method << ",pair," << p.index << ',' << fmt9(p.precision) << ',' << fmt9(p.recall)
                << ',' << fmt9(p.f) << ',' << fmt9(p.theta_r) << ',' << fmt9(p.theta_t) << ','
                << (p.failed ? 1 : 0) << ',' << fmt9(p.ms) << ",0,0,0,0,0,0\n";
        }
        out << r.method << ",aggregate,-1," << fmt9(r.precision) << ',' << fmt9(r.recall) << ','
            << fmt9(r.f_score) << ",0,0," << r.failures << ',' << fmt9(r.mean_ms) << ','
            << fmt9(r.map5) << ',' << fmt9(r.map20) << ',' << fmt9(r.map5_binned) << ','
            << fmt9(r.map20_binned) << ',' << fmt9(r.map5_pooled) << ',' << fmt9(r.map20_pooled)
            << '\n';
    }
}

inline void emit_report_jsonl(std::ostream& out, const std::vector<MetricsReport>& reports) {
    for (const MetricsReport& r : reports) {
        for (const PairRecord& p : r.pairs) {
            nlohmann::json j;
            j["kind"] = "pair";
            j["method"] = r.method;
            j["index"] = p.index;
            j["precision"] = p.precision;
            j["recall"] = p.recall;
            j["f"] = p.f;
            j["theta_r"] = p.theta_r;
            j["theta_t"] = p.theta_t;
            j["failed"] = p.failed;
            j["ms"] = p.ms;
            out << j.dump() << '\n';
        }
        nlohmann::json j;
        j["kind"] = "aggregate";
        j["method"] = r.method;
        j["precision"] = r.precision;
        j["recall"] = r.recall;
        j["f"] = r.f_score;
        j["map5"] = r.map5;
        j["map20"] = r.map20;
        j["map5_binned"] = r.map5_binned;
        j["map20_binned"] = r.map20_binned;
        j["map5_pooled"] = r.map5_pooled;
        j["map20_pooled"] = r.map20_pooled;
        j["failures"] = r.failures;
        j["mean_ms"] = r.mean_ms;
        out << j.dump() << '\n';
    }
}

inline void emit_report(const std::vector<MetricsReport>& reports, const std::string& path,
                        ReportFormat format) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    switch (format) {
        case ReportFormat::text_table: emit_report_text(out, reports); break;
        case ReportFormat::csv: emit_report_csv(out, reports); break;
        case ReportFormat::json_lines: emit_report_jsonl(out, reports); break;
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace corrprune
