#pragma once

// Iterative pruning pipeline: per module an up-projection, L fused blocks,
// a guiding tap plus a final head, and sort-and-prune; then weighted
// eight-point model estimation on the surviving subset and full-size
// verification of the original set.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "corrprune/geometry.hpp"
#include "corrprune/network.hpp"
#include "corrprune/types.hpp"

namespace corrprune {

/// Indices of the ceil(rate * N) largest logits; ties broken by smallest
/// original index; result sorted ascending so relative order is preserved.
inline std::vector<std::size_t> prune_keep_indices(const std::vector<double>& logits, double rate) {
    const std::size_t n = logits.size();
    // fp-noise guard so e.g. 0.1 * 30 does not ceil to 4
    const auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
    if (k == 0) throw EmptyResultError("pruning would keep zero rows");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    order.resize(std::min(k, n));
    std::sort(order.begin(), order.end());
    return order;
}

struct SortPruneResult {
    CorrespondenceSet set;
    std::vector<ProbabilitySet> side_channels;
    std::vector<std::size_t> kept;
};

inline SortPruneResult sort_and_prune(const CorrespondenceSet& set, const ProbabilitySet& logits,
                                      const std::vector<ProbabilitySet>& side_channels, double rate) {
    if (logits.size() != set.size()) throw LengthMismatchError("logits must align with the set");
    for (const auto& sc : side_channels) {
        if (sc.size() != set.size()) throw LengthMismatchError("side channel must align with the set");
    }
    SortPruneResult out;
    out.kept = prune_keep_indices(logits.values, rate);
    out.set = set.subset(out.kept);
    for (const auto& sc : side_channels) {
        ProbabilitySet pruned;
        pruned.kind = sc.kind;
        for (std::size_t i : out.kept) pruned.values.push_back(sc.values[i]);
        out.side_channels.push_back(std::move(pruned));
    }
    return out;
}

/// Map logits to eight-point weights.
inline double weight_transform(double logit) { return std::max(0.0, std::tanh(logit)); }

inline double weight_transform_grad(double logit) {
    const double t = std::tanh(logit);
    return t > 0.0 ? 1.0 - t * t : 0.0;
}

/// Fallback support size when too few transformed weights are positive.
inline constexpr std::size_t kWeightFallbackTopK = 16;

/// relu(tanh(logit)) per row; if fewer than 8 weights end up positive, fall
/// back to uniform weights over the top-k logits so estimation stays defined.
inline std::pair<std::vector<double>, bool> estimation_weights(const std::vector<double>& logits) {
    std::vector<double> w(logits.size());
    std::size_t positive = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        w[i] = weight_transform(logits[i]);
        if (w[i] > 0.0) ++positive;
    }
    if (positive >= 8) return {w, false};

    std::vector<std::size_t> order(logits.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    std::fill(w.begin(), w.end(), 0.0);
    const std::size_t k = std::min(kWeightFallbackTopK, logits.size());
    for (std::size_t i = 0; i < k; ++i) w[order[i]] = 1.0;
    return {w, true};
}

/// One pruning module: up-projection, L blocks, two prediction heads.
struct ModuleNet {
    Linear up1, up2;
    Relu up_act;
    std::vector<Block> blocks;
    PredictionHead guide, pred;
    int po = 1;

    ModuleNet() = default;

    ModuleNet(const std::string& prefix, const NetworkConfig& cfg) : po(cfg.po) {
        up1 = Linear(prefix + ".up.l1");
        up2 = Linear(prefix + ".up.l2");
        for (int j = 0; j < cfg.L; ++j) blocks.emplace_back(prefix + ".blk" + std::to_string(j), cfg);
        guide = PredictionHead(prefix + ".guide", cfg);
        pred = PredictionHead(prefix + ".pred", cfg);
    }

    static void declare(ParamStore& ps, StatStore& stats, Rng& rng, const std::string& prefix,
                        const NetworkConfig& cfg, int input_channels) {
        const auto d = static_cast<std::size_t>(cfg.d);
        Linear::declare(ps, rng, prefix + ".up.l1", d, static_cast<std::size_t>(input_channels));
        Linear::declare(ps, rng, prefix + ".up.l2", d, d);
        for (int j = 0; j < cfg.L; ++j) {
            Block::declare(ps, rng, prefix + ".blk" + std::to_string(j), cfg);
        }
        PredictionHead::declare(ps, stats, rng, prefix + ".guide", cfg);
        PredictionHead::declare(ps, stats, rng, prefix + ".pred", cfg);
    }

    struct Output {
        Eigen::VectorXd guide_logits;
        Eigen::VectorXd logits;
    };

    Output forward(const ParamStore& ps, const StatStore& stats, const Eigen::MatrixXd& X,
                   bool training) {
        Eigen::MatrixXd F = up2.forward(ps, up_act.forward(up1.forward(ps, X)));
        Output out;
        for (std::size_t j = 0; j < blocks.size(); ++j) {
            F = blocks[j].forward(ps, F);
            if (static_cast<int>(j) + 1 == po) {
                out.guide_logits = guide.forward(ps, stats, F, training);
            }
        }
        out.logits = pred.forward(ps, stats, F, training);
        return out;
    }

    Eigen::MatrixXd backward(const ParamStore& ps, GradStore& gs, const Eigen::VectorXd& dguide,
                             const Eigen::VectorXd& dlogits) const {
        Eigen::MatrixXd dF = pred.backward(ps, gs, dlogits);
        for (std::size_t j = blocks.size(); j-- > 0;) {
            if (static_cast<int>(j) + 1 == po) dF += guide.backward(ps, gs, dguide);
            dF = blocks[j].backward(ps, gs, dF);
        }
        return up1.backward(ps, gs, up_act.backward(up2.backward(ps, gs, dF)));
    }

    void collect_stat_updates(std::vector<std::tuple<std::string, Eigen::RowVectorXd, Eigen::RowVectorXd>>* out) const {
        guide.collect_stat_updates(out);
        pred.collect_stat_updates(out);
    }
};

inline std::string module_prefix(int i) { return "m" + std::to_string(i + 1); }

/// Declare all learnable parameters and batch-norm state for a configuration.
/// Traversal order is fixed, so a seed fully determines the initialization.
inline void declare_parameters(ParamStore& ps, StatStore& stats, const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    for (int i = 0; i < cfg.modules; ++i) {
        ModuleNet::declare(ps, stats, rng, module_prefix(i), cfg, cfg.module_input_channels(i));
    }
}

struct ModuleTrace {
    std::unique_ptr<ModuleNet> net;        // null in oracle mode
    Eigen::MatrixXd input;                 // rows x k
    std::vector<std::size_t> rows;         // global row ids feeding this module
    std::vector<double> guide_logits;      // per module row
    std::vector<double> logits;
    std::vector<std::size_t> kept_local;   // indices into this module's rows
    std::vector<double> pruned_guide;
    std::vector<double> pruned_logits;
    CorrespondenceSet set_out;
};

struct PipelineForward {
    std::vector<ModuleTrace> modules;
    CorrespondenceSet final_set;                 // last pruned subset
    std::vector<std::size_t> final_rows;         // global ids of final_set rows
    std::vector<double> weights;
    bool weight_fallback = false;
    EightPointSolution eight_point;
    EssentialMatrix E;                           // enforced, sign-canonical
    ProbabilitySet P;                            // binary verification, full size
    std::vector<double> distances;               // raw distances, full size
};

inline Eigen::MatrixXd module_input_matrix(const CorrespondenceSet& set,
                                           const std::vector<double>* guide,
                                           const std::vector<double>* logits) {
    const auto n = static_cast<Eigen::Index>(set.size());
    Eigen::MatrixXd X(n, guide ? 6 : 4);
    for (Eigen::Index r = 0; r < n; ++r) {
        const Correspondence& c = set.rows[static_cast<std::size_t>(r)];
        X(r, 0) = c.x;
        X(r, 1) = c.y;
        X(r, 2) = c.u;
        X(r, 3) = c.v;
        if (guide) {
            X(r, 4) = (*guide)[static_cast<std::size_t>(r)];
            X(r, 5) = (*logits)[static_cast<std::size_t>(r)];
        }
    }
    return X;
}

/// Full forward pass. With `oracle_logits` set (one value per original row),
/// every head's output is replaced by the oracle values at that module's rows
/// and the feature trunk is skipped; the geometry path is exercised as-is.
inline PipelineForward pipeline_forward(const CorrespondenceSet& C, const ParamStore& ps,
                                        const StatStore& stats, const NetworkConfig& cfg,
                                        double eps_verify, bool training,
                                        const std::vector<double>* oracle_logits = nullptr) {
    cfg.validate();
    const std::size_t n0 = C.size();
    // final subset must still support eight-point estimation
    std::size_t remaining = n0;
    for (int i = 0; i < cfg.modules; ++i) {
        remaining = static_cast<std::size_t>(
            std::ceil(cfg.prune_rate * static_cast<double>(remaining) - 1e-9));
    }
    if (remaining < 8) {
        throw InsufficientSupportError("input set too small: final pruned subset has fewer than 8 rows");
    }
    if (oracle_logits && oracle_logits->size() != n0) {
        throw LengthMismatchError("oracle logits must cover the full set");
    }

    PipelineForward fw;
    CorrespondenceSet current = C;
    std::vector<std::size_t> rows(n0);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> carry_guide, carry_logits;

    for (int i = 0; i < cfg.modules; ++i) {
        ModuleTrace trace;
        trace.rows = rows;
        trace.input = module_input_matrix(current, i == 0 ? nullptr : &carry_guide,
                                          i == 0 ? nullptr : &carry_logits);
        const std::size_t n = current.size();
        if (oracle_logits) {
            trace.guide_logits.resize(n);
            trace.logits.resize(n);
            for (std::size_t r = 0; r < n; ++r) {
                trace.guide_logits[r] = (*oracle_logits)[rows[r]];
                trace.logits[r] = (*oracle_logits)[rows[r]];
            }
        } else {
            trace.net = std::make_unique<ModuleNet>(module_prefix(i), cfg);
            ModuleNet::Output out = trace.net->forward(ps, stats, trace.input, training);
            trace.guide_logits.assign(out.guide_logits.data(), out.guide_logits.data() + n);
            trace.logits.assign(out.logits.data(), out.logits.data() + n);
        }

        trace.kept_local = prune_keep_indices(trace.logits, cfg.prune_rate);
        trace.set_out = current.subset(trace.kept_local);
        trace.pruned_guide.reserve(trace.kept_local.size());
        trace.pruned_logits.reserve(trace.kept_local.size());
        std::vector<std::size_t> next_rows;
        next_rows.reserve(trace.kept_local.size());
        for (std::size_t k : trace.kept_local) {
            trace.pruned_guide.push_back(trace.guide_logits[k]);
            trace.pruned_logits.push_back(trace.logits[k]);
            next_rows.push_back(rows[k]);
        }

        current = trace.set_out;
        rows = next_rows;
        carry_guide = trace.pruned_guide;
        carry_logits = trace.pruned_logits;
        fw.modules.push_back(std::move(trace));
    }

    fw.final_set = current;
    fw.final_rows = rows;
    auto [w, fallback] = estimation_weights(fw.modules.back().pruned_logits);
    fw.weights = std::move(w);
    fw.weight_fallback = fallback;
    fw.eight_point = solve_weighted_eight_point(fw.final_set, fw.weights);
    fw.E = fw.eight_point.E;
    fw.P = verify(fw.E, C, eps_verify);
    fw.distances = epipolar_distances(fw.E, C);
    return fw;
}

}  // namespace corrprune
