#pragma once

// Feature trunk: spatial / channel multi-head self-attention, fused
// transformer blocks with their ablation variants, and the channel-reducing
// prediction heads. Attention has no positional encoding; correspondences
// are an unordered set and every operation here is permutation-equivariant.

#include <Eigen/Dense>
#include <cassert>
#include <optional>
#include <string>
#include <vector>

#include "corrprune/layers.hpp"
#include "corrprune/tensor.hpp"

namespace corrprune {

enum class BlockVariant { s_then_c, c_then_s, c_then_c, s_then_s, vanilla, attention_only };
enum class PredictorVariant { prediction_block, simple_projection };

inline const char* to_string(BlockVariant v) {
    switch (v) {
        case BlockVariant::s_then_c: return "s-then-c";
        case BlockVariant::c_then_s: return "c-then-s";
        case BlockVariant::c_then_c: return "c-then-c";
        case BlockVariant::s_then_s: return "s-then-s";
        case BlockVariant::vanilla: return "vanilla";
        case BlockVariant::attention_only: return "attention-only";
    }
    return "?";
}

inline const char* to_string(PredictorVariant v) {
    return v == PredictorVariant::prediction_block ? "prediction-block" : "simple-projection";
}

inline BlockVariant block_variant_from_string(const std::string& s) {
    for (BlockVariant v : {BlockVariant::s_then_c, BlockVariant::c_then_s, BlockVariant::c_then_c,
                           BlockVariant::s_then_s, BlockVariant::vanilla, BlockVariant::attention_only}) {
        if (s == to_string(v)) return v;
    }
    throw UnknownVariantError("unknown block variant: " + s);
}

inline PredictorVariant predictor_variant_from_string(const std::string& s) {
    for (PredictorVariant v : {PredictorVariant::prediction_block, PredictorVariant::simple_projection}) {
        if (s == to_string(v)) return v;
    }
    throw UnknownVariantError("unknown predictor variant: " + s);
}

struct NetworkConfig {
    int d = 128;           // channels
    int L = 5;             // blocks per pruning module
    int H = 4;             // attention heads
    int po = 2;            // guiding tap position (1-based block index)
    double prune_rate = 0.5;
    int modules = 2;       // pruning module count I
    BlockVariant block_variant = BlockVariant::s_then_c;
    PredictorVariant predictor_variant = PredictorVariant::prediction_block;
    int ff_ratio = 2;

    void validate() const {
        if (d < 2) throw ConfigError("d must be at least 2");
        if (H < 1 || d % H != 0) throw ConfigError("d must be divisible by H");
        if (L < 1) throw ConfigError("L must be at least 1");
        if (po < 1 || po > L) throw ConfigError("po must satisfy 1 <= po <= L");
        if (!(prune_rate > 0.0 && prune_rate < 1.0)) throw ConfigError("prune_rate must be in (0, 1)");
        if (modules < 1) throw ConfigError("module count I must be at least 1");
        if (ff_ratio < 1) throw ConfigError("ff_ratio must be at least 1");
        if (predictor_variant == PredictorVariant::prediction_block && d % 4 != 0) {
            throw ConfigError("prediction-block predictor needs d divisible by 4");
        }
    }

    /// Input channel count of pruning module i (0-based): coordinates for the
    /// first, coordinates plus the two inherited logit channels afterwards.
    int module_input_channels(int i) const { return i == 0 ? 4 : 6; }
};

struct SpatialAttention {
    Linear lq, lk, lv, lo;
    int heads = 1;
    Eigen::MatrixXd Q, K, V;
    std::vector<Eigen::MatrixXd> A;  // per-head row-stochastic N x N

    SpatialAttention() = default;
    SpatialAttention(const std::string& prefix, int h)
        : lq(prefix + ".q"), lk(prefix + ".k"), lv(prefix + ".v"), lo(prefix + ".o"), heads(h) {}

    static void declare(ParamStore& ps, Rng& rng, const std::string& prefix, std::size_t d) {
        Linear::declare(ps, rng, prefix + ".q", d, d);
        Linear::declare(ps, rng, prefix + ".k", d, d);
        Linear::declare(ps, rng, prefix + ".v", d, d);
        Linear::declare(ps, rng, prefix + ".o", d, d);
    }

    Eigen::MatrixXd forward(const ParamStore& ps, const Eigen::MatrixXd& X) {
        const Eigen::Index d = X.cols();
        const Eigen::Index dh = d / heads;
        Q = lq.forward(ps, X);
        K = lk.forward(ps, X);
        V = lv.forward(ps, X);
        A.assign(heads, {});
        Eigen::MatrixXd O(X.rows(), d);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int h = 0; h < heads; ++h) {
            const auto Qh = Q.middleCols(h * dh, dh);
            const auto Kh = K.middleCols(h * dh, dh);
            A[h].noalias() = scale * (Qh * Kh.transpose());
            softmax_rows_inplace(A[h]);
            O.middleCols(h * dh, dh).noalias() = A[h] * V.middleCols(h * dh, dh);
        }
        return lo.forward(ps, O);
    }

    Eigen::MatrixXd backward(const ParamStore& ps, GradStore& gs, const Eigen::MatrixXd& dY) const {
        const Eigen::Index d = Q.cols();
        const Eigen::Index dh = d / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        const Eigen::MatrixXd dO = lo.backward(ps, gs, dY);
        Eigen::MatrixXd dQ(Q.rows(), d), dK(Q.rows(), d), dV(Q.rows(), d);
        Eigen::MatrixXd w;  // per-head workspace: dA, then dS
        for (int h = 0; h < heads; ++h) {
            const auto Qh = Q.middleCols(h * dh, dh);
            const auto Kh = K.middleCols(h * dh, dh);
            const auto Vh = V.middleCols(h * dh, dh);
            const auto dOh = dO.middleCols(h * dh, dh);
            w.noalias() = dOh * Vh.transpose();
            dV.middleCols(h * dh, dh).noalias() = A[h].transpose() * dOh;
            softmax_rows_backward_inplace(A[h], w);
            dQ.middleCols(h * dh, dh).noalias() = scale * (w * Kh);
            dK.middleCols(h * dh, dh).noalias() = scale * (w.transpose() * Qh);
        }
        return lq.backward(ps, gs, dQ) + lk.backward(ps, gs, dK) + lv.backward(ps, gs, dV);
    }
};

/// Attention over the channel dimension: per head a (d/H)^2 similarity from
/// Q^T K (scaled by 1/sqrt(N)), applied to Value, then a per-row output MLP.
/// When `internal_residual` is set the input is added back (the defining
/// skip of the channel-attention stage).
struct ChannelAttention {
    Linear lq, lk, lv, lp1, lp2;
    Gelu act;
    int heads = 1;
    bool internal_residual = true;
    Eigen::MatrixXd Q, K, V;
    std::vector<Eigen::MatrixXd> A;  // per-head row-stochastic dh x dh

    ChannelAttention() = default;
    ChannelAttention(const std::string& prefix, int h, bool residual)
        : lq(prefix + ".q"), lk(prefix + ".k"), lv(prefix + ".v"),
          lp1(prefix + ".p1"), lp2(prefix + ".p2"), heads(h), internal_residual(residual) {}

    static void declare(ParamStore& ps, Rng& rng, const std::string& prefix, std::size_t d) {
        Linear::declare(ps, rng, prefix + ".q", d, d);
        Linear::declare(ps, rng, prefix + ".k", d, d);
        Linear::declare(ps, rng, prefix + ".v", d, d);
        Linear::declare(ps, rng, prefix + ".p1", d, d);
        Linear::declare(ps, rng, prefix + ".p2", d, d);
    }

    Eigen::MatrixXd forward(const ParamStore& ps, const Eigen::MatrixXd& X) {
        const Eigen::Index d = X.cols();
        const Eigen::Index dh = d / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(X.rows()));
        Q = lq.forward(ps, X);
        K = lk.forward(ps, X);
        V = lv.forward(ps, X);
        A.assign(heads, {});
        Eigen::MatrixXd O(X.rows(), d);
        for (int h = 0; h < heads; ++h) {
            const auto Qh = Q.middleCols(h * dh, dh);
            const auto Kh = K.middleCols(h * dh, dh);
            A[h].noalias() = scale * (Qh.transpose() * Kh);
            softmax_rows_inplace(A[h]);
            O.middleCols(h * dh, dh).noalias() = V.middleCols(h * dh, dh) * A[h].transpose();
        }
        Eigen::MatrixXd y = lp2.forward(ps, act.forward(lp1.forward(ps, O)));
        if (internal_residual) y += X;
        return y;
    }

    Eigen::MatrixXd backward(const ParamStore& ps, GradStore& gs, const Eigen::MatrixXd& dY) const {
        const Eigen::Index d = Q.cols();
        const Eigen::Index dh = d / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(Q.rows()));
        const Eigen::MatrixXd dO = lp1.backward(ps, gs, act.backward(lp2.backward(ps, gs, dY)));
        Eigen::MatrixXd dQ(Q.rows(), d), dK(Q.rows(), d), dV(Q.rows(), d);
        Eigen::MatrixXd w;  // per-head workspace: dA, then dS
        for (int h = 0; h < heads; ++h) {
            const auto Qh = Q.middleCols(h * dh, dh);
            const auto Kh = K.middleCols(h * dh, dh);
            const auto Vh = V.middleCols(h * dh, dh);
            const auto dOh = dO.middleCols(h * dh, dh);
            w.noalias() = dOh.transpose() * Vh;
            dV.middleCols(h * dh, dh).noalias() = dOh * A[h];
            softmax_rows_backward_inplace(A[h], w);
            dQ.middleCols(h * dh, dh).noalias() = scale * (Kh * w.transpose());
            dK.middleCols(h * dh, dh).noalias() = scale * (Qh * w);
        }
        Eigen::MatrixXd dX = lq.backward(ps, gs, dQ) + lk.backward(ps, gs, dK) + lv.backward(ps, gs, dV);
        if (internal_residual) dX += dY;
        return dX;
    }
};

struct FeedForward {
    Linear l1, l2;
    Gelu act;

    FeedForward() = default;
    FeedForward(const std::string& prefix) : l1(prefix + ".l1"), l2(prefix + ".l2") {}

    static void declare(ParamStore& ps, Rng& rng, const std::string& prefix, std::size_t d,
                        int ff_ratio) {
        Linear::declare(ps, rng, prefix + ".l1", d * ff_ratio, d);
        Linear::declare(ps, rng, prefix + ".l2", d, d * ff_ratio);
    }

    Eigen::MatrixXd forward(const ParamStore& ps, const Eigen::MatrixXd& X) {
        return l2.forward(ps, act.forward(l1.forward(ps, X)));
    }

    Eigen::MatrixXd backward(const ParamStore& ps, GradStore& gs, const Eigen::MatrixXd& dY) const {
        return l1.backward(ps, gs, act.backward(l2.backward(ps, gs, dY)));
    }
};

namespace blockdetail {

inline bool slot1_spatial(BlockVariant v) {
    return v == BlockVariant::s_then_c || v == BlockVariant::s_then_s ||
           v == BlockVariant::vanilla || v == BlockVariant::attention_only;
}

inline bool slot2_spatial(BlockVariant v) {
    return v == BlockVariant::c_then_s || v == BlockVariant::s_then_s;
}

inline bool has_slot2(BlockVariant v) { return v != BlockVariant::vanilla; }
inline bool has_norm_ff(BlockVariant v) { return v != BlockVariant::attention_only; }

}  // namespace blockdetail

/// One fused transformer block. Default wiring: F1 = Att1(PN(F)) + F, then
/// Y = FF(Att2(PN(F1))) + F1, with the channel stage carrying its own skip.
/// Variants rewire the two attention slots or drop PreNorm/FF entirely.
struct Block {
    BlockVariant variant = BlockVariant::s_then_c;
    LayerNorm ln1, ln2;
    std::optional<SpatialAttention> s1, s2;
    std::optional<ChannelAttention> c1, c2;
    std::optional<FeedForward> ff;

    Block() = default;

    Block(const std::string& prefix, const NetworkConfig& cfg) : variant(cfg.block_variant) {
        using namespace blockdetail;
        if (has_norm_ff(variant)) {
            ln1 = LayerNorm(prefix + ".ln1");
            ff.emplace(prefix + ".ff");
        }
        if (slot1_spatial(variant)) {
            s1.emplace(prefix + ".att1", cfg.H);
        } else {
            c1.emplace(prefix + ".att1", cfg.H, false);
        }
        if (has_slot2(variant)) {
            if (has_norm_ff(variant)) ln2 = LayerNorm(prefix + ".ln2");
            if (slot2_spatial(variant)) {
                s2.emplace(prefix + ".att2", cfg.H);
            } else {
                c2.emplace(prefix + ".att2", cfg.H, true);
            }
        } else {
            ln2 = LayerNorm(prefix + ".ln2");  // vanilla keeps PN before FF
        }
    }

    static void declare(ParamStore& ps, Rng& rng, const std::string& prefix, const NetworkConfig& cfg) {
        using namespace blockdetail;
        const auto d = static_cast<std::size_t>(cfg.d);
        const BlockVariant v = cfg.block_variant;
        if (has_norm_ff(v)) {
            LayerNorm::declare(ps, prefix + ".ln1", d);
            FeedForward::declare(ps, rng, prefix + ".ff", d, cfg.ff_ratio);
        }
        if (slot1_spatial(v)) {
            SpatialAttention::declare(ps, rng, prefix + ".att1", d);
        } else {
            ChannelAttention::declare(ps, rng, prefix + ".att1", d);
        }
        if (has_slot2(v)) {
            if (has_norm_ff(v)) LayerNorm::declare(ps, prefix + ".ln2", d);
            if (slot2_spatial(v)) {
                SpatialAttention::declare(ps, rng, prefix + ".att2", d);
            } else {
                ChannelAttention::declare(ps, rng, prefix + ".att2", d);
            }
        } else {
            LayerNorm::declare(ps, prefix + ".ln2", d);
        }
    }

    Eigen::MatrixXd forward(const ParamStore& ps, const Eigen::MatrixXd& X) {
        using namespace blockdetail;
        const bool norms = has_norm_ff(variant);
        const Eigen::MatrixXd t1 = norms ? ln1.forward(ps, X) : X;
        const Eigen::MatrixXd a1 = s1 ? s1->forward(ps, t1) : c1->forward(ps, t1);
        const Eigen::MatrixXd F1 = a1 + X;

        Eigen::MatrixXd y;
        if (variant == BlockVariant::vanilla) {
            y = ff->forward(ps, ln2.forward(ps, F1)) + F1;
        } else if (variant == BlockVariant::attention_only) {
            y = c2->forward(ps, F1);  // skip supplied by the channel stage
        } else {
            const Eigen::MatrixXd t2 = ln2.forward(ps, F1);
            const Eigen::MatrixXd a2 = s2 ? s2->forward(ps, t2) : c2->forward(ps, t2);
            y = ff->forward(ps, a2) + F1;
        }
        assert(y.allFinite());
        return y;
    }

    Eigen::MatrixXd backward(const ParamStore& ps, GradStore& gs, const Eigen::MatrixXd& dY) const {
        using namespace blockdetail;
        Eigen::MatrixXd dF1;
        if (variant == BlockVariant::vanilla) {
            dF1 = dY + ln2.backward(ps, gs, ff->backward(ps, gs, dY));
        } else if (variant == BlockVariant::attention_only) {
            dF1 = c2->backward(ps, gs, dY);
        } else {
            const Eigen::MatrixXd da2 = ff->backward(ps, gs, dY);
            const Eigen::MatrixXd dt2 = s2 ? s2->backward(ps, gs, da2) : c2->backward(ps, gs, da2);
            dF1 = dY + ln2.backward(ps, gs, dt2);
        }
        const Eigen::MatrixXd da1 = s1 ? s1->backward(ps, gs, dF1) : c1->backward(ps, gs, dF1);
        if (has_norm_ff(variant)) {
            return dF1 + ln1.backward(ps, gs, da1);
        }
        return dF1 + da1;
    }
};

/// Channel-reducing classifier head: d -> d/2 -> d/4 -> 1 with instance and
/// batch normalization plus ReLU between stages, or a single projection.
struct PredictionHead {
    PredictorVariant variant = PredictorVariant::prediction_block;
    Linear l1, l2, l3;
    InstanceNorm in1, in2;
    BatchNorm bn1, bn2;
    Relu r1, r2;
    Linear proj;

    PredictionHead() = default;

    PredictionHead(const std::string& prefix, const NetworkConfig& cfg)
        : variant(cfg.predictor_variant) {
        if (variant == PredictorVariant::prediction_block) {
            l1 = Linear(prefix + ".s1.lin");
            bn1 = BatchNorm(prefix + ".s1.bn");
            l2 = Linear(prefix + ".s2.lin");
            bn2 = BatchNorm(prefix + ".s2.bn");
            l3 = Linear(prefix + ".s3.lin");
        } else {
            proj = Linear(prefix + ".lin");
        }
    }

    static void declare(ParamStore& ps, StatStore& stats, Rng& rng, const std::string& prefix,
                        const NetworkConfig& cfg) {
        const auto d = static_cast<std::size_t>(cfg.d);
        if (cfg.predictor_variant == PredictorVariant::prediction_block) {
            Linear::declare(ps, rng, prefix + ".s1.lin", d / 2, d);
            BatchNorm::declare(ps, stats, prefix + ".s1.bn", d / 2);
            Linear::declare(ps, rng, prefix + ".s2.lin", d / 4, d / 2);
            BatchNorm::declare(ps, stats, prefix + ".s2.bn", d / 4);
            Linear::declare(ps, rng, prefix + ".s3.lin", 1, d / 4);
        } else {
            Linear::declare(ps, rng, prefix + ".lin", 1, d);
        }
    }

    Eigen::VectorXd forward(const ParamStore& ps, const StatStore& stats, const Eigen::MatrixXd& X,
                            bool training) {
        if (variant == PredictorVariant::simple_projection) {
            return proj.forward(ps, X).col(0);
        }
        Eigen::MatrixXd h = r1.forward(bn1.forward(ps, stats, in1.forward(l1.forward(ps, X)), training));
        h = r2.forward(bn2.forward(ps, stats, in2.forward(l2.forward(ps, h)), training));
        return l3.forward(ps, h).col(0);
    }

    Eigen::MatrixXd backward(const ParamStore& ps, GradStore& gs, const Eigen::VectorXd& dlogits) const {
        const Eigen::MatrixXd dY = dlogits;
        if (variant == PredictorVariant::simple_projection) {
            return proj.backward(ps, gs, dY);
        }
        Eigen::MatrixXd dh = l3.backward(ps, gs, dY);
        dh = l2.backward(ps, gs, in2.backward(bn2.backward(ps, gs, r2.backward(dh))));
        dh = l1.backward(ps, gs, in1.backward(bn1.backward(ps, gs, r1.backward(dh))));
        return dh;
    }

    /// Batch statistics recorded during a training-mode forward, in a fixed
    /// order, for the single-writer running-average update.
    void collect_stat_updates(std::vector<std::tuple<std::string, Eigen::RowVectorXd, Eigen::RowVectorXd>>* out) const {
        if (variant != PredictorVariant::prediction_block) return;
        out->emplace_back(bn1.rmn.substr(0, bn1.rmn.size() - 3), bn1.batch_mean, bn1.batch_var_unbiased);
        out->emplace_back(bn2.rmn.substr(0, bn2.rmn.size() - 3), bn2.batch_mean, bn2.batch_var_unbiased);
    }
};

}  // namespace corrprune
