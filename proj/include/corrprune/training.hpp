#pragma once

// Training machinery: reverse-mode gradients through the full pipeline
// (classification heads, feature trunk, and the eight-point smallest
// eigenvector), Adam with bias correction, and the warmup / step-decay
// learning-rate schedule. Batch items are independent; gradients are reduced
// in item order so results are bitwise identical for any worker count.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "corrprune/loss.hpp"
#include "corrprune/pipeline.hpp"
#include "corrprune/synthdata.hpp"

namespace corrprune {

// ---------------------------------------------------------------------------
// Learning-rate schedule
// ---------------------------------------------------------------------------

struct LrSchedule {
    double base = 1e-3;
    std::int64_t warmup = 10000;
    double decay = 0.4;
    std::int64_t interval = 20000;

    void validate() const {
        if (!(base > 0.0)) throw ConfigError("base learning rate must be positive");
        if (warmup < 1) throw ConfigError("warmup must be at least 1 iteration");
        if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay factor must be in (0, 1]");
        if (interval < 1) throw ConfigError("decay interval must be at least 1");
    }
};

/// Linear warmup to the base rate, which then holds for one full interval;
/// afterwards the rate steps down by the decay factor once per interval
/// (first decay at warmup + interval + 1).
inline double lr_at(std::int64_t iter, const LrSchedule& s) {
    if (iter < 1) throw ConfigError("iteration index starts at 1");
    if (iter <= s.warmup) {
        return s.base * static_cast<double>(iter) / static_cast<double>(s.warmup);
    }
    const auto k = (iter - s.warmup - 1) / s.interval;
    return s.base * std::pow(s.decay, static_cast<double>(k));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct OptimizerState {
    GradStore m, v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimizerState init(const ParamStore& ps) {
        OptimizerState st;
        st.m = GradStore::zeros_like(ps);
        st.v = GradStore::zeros_like(ps);
        return st;
    }
};

inline void adam_step(ParamStore& ps, const GradStore& grads, OptimizerState& st, double lr) {
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (auto& [name, t] : ps.items()) {
        const Eigen::MatrixXd& g = grads.at(name);
        if (g.rows() != t.value.rows() || g.cols() != t.value.cols()) {
            throw ShapeMismatchError("gradient shape mismatch for " + name);
        }
        Eigen::MatrixXd& m = st.m.at(name);
        Eigen::MatrixXd& v = st.v.at(name);
        m = st.beta1 * m + (1.0 - st.beta1) * g;
        v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseProduct(g);
        t.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + st.eps);
    }
}

// ---------------------------------------------------------------------------
// Per-pair loss and gradients
// ---------------------------------------------------------------------------

struct LossBreakdown {
    double total = 0.0;
    double geometric = 0.0;
    double classification = 0.0;
};

struct PairOutcome {
    LossBreakdown loss;
    std::size_t tp = 0, fp = 0, fn = 0;  // verification vs labels
    bool weight_fallback = false;
};

inline constexpr double kEigengapFloor = 1e-10;
inline constexpr double kBnMomentum = 0.1;

using StatUpdate = std::tuple<std::string, Eigen::RowVectorXd, Eigen::RowVectorXd>;

/// Forward (and optionally backward) pass for one scene pair. Gradients are
/// accumulated into `grads`. The discrete kept-row selection is treated as
/// constant; the eight-point path uses the symmetric-eigenpair backward.
inline PairOutcome pair_loss(const ScenePair& pair, const ParamStore& ps, const StatStore& stats,
                             const NetworkConfig& net, const LossConfig& lossc, double eps_verify,
                             std::uint64_t virtual_seed, bool training, bool want_grads,
                             GradStore* grads, std::vector<StatUpdate>* stat_updates) {
    lossc.validate();
    PairOutcome out;
    PipelineForward fw = pipeline_forward(pair.set, ps, stats, net, eps_verify, training);
    out.weight_fallback = fw.weight_fallback;

    Rng vrng(virtual_seed);
    const VirtualPairSet vp = make_virtual_pairs(pair.pose, static_cast<std::size_t>(lossc.n_virtual), vrng);
    const std::vector<double> tau_full =
        adaptive_temperature(pair.E_gt, pair.set, lossc.eps_label, lossc.ambiguity);

    const int I = net.modules;
    std::vector<LabelSet> mod_labels(I);
    std::vector<std::vector<double>> mod_tau(I);
    for (int i = 0; i < I; ++i) {
        const auto& rows = fw.modules[i].rows;
        mod_labels[i] = pair.labels.subset(rows);
        mod_tau[i].reserve(rows.size());
        for (std::size_t r : rows) mod_tau[i].push_back(tau_full[r]);
    }

    double lc = 0.0;
    for (int i = 0; i < I; ++i) {
        std::vector<std::vector<double>> zsets{fw.modules[i].guide_logits, fw.modules[i].logits};
        for (const auto& z : zsets) {
            double sum = 0.0;
            for (std::size_t r = 0; r < z.size(); ++r) {
                sum += bce_with_logit(mod_tau[i][r] * z[r], static_cast<double>(mod_labels[i].y[r]));
            }
            lc += sum / static_cast<double>(z.size());
        }
    }

    const EssentialMatrix E_train{fw.eight_point.E_raw};
    const double le = geometric_loss(E_train, vp, lossc.geo_clamp);
    out.loss.geometric = le;
    out.loss.classification = lc;
    out.loss.total = le + lossc.beta * lc;

    for (std::size_t i = 0; i < pair.set.size(); ++i) {
        const bool pred = fw.P.values[i] != 0.0;
        const bool truth = pair.labels.y[i] != 0;
        if (pred && truth) ++out.tp;
        if (pred && !truth) ++out.fp;
        if (!pred && truth) ++out.fn;
    }

    if (!want_grads) return out;

    // Classification gradients per module head.
    std::vector<Eigen::VectorXd> dguide(I), dlogits(I);
    for (int i = 0; i < I; ++i) {
        const auto n = static_cast<Eigen::Index>(fw.modules[i].rows.size());
        dguide[i] = Eigen::VectorXd::Zero(n);
        dlogits[i] = Eigen::VectorXd::Zero(n);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            const double tau = mod_tau[i][static_cast<std::size_t>(r)];
            const double y = static_cast<double>(mod_labels[i].y[static_cast<std::size_t>(r)]);
            const double zg = fw.modules[i].guide_logits[static_cast<std::size_t>(r)];
            const double zm = fw.modules[i].logits[static_cast<std::size_t>(r)];
            dguide[i](r) = lossc.beta * inv_n * tau * (sigmoid(tau * zg) - y);
            dlogits[i](r) = lossc.beta * inv_n * tau * (sigmoid(tau * zm) - y);
        }
    }

    // Geometric gradient through the smallest eigenvector of the weighted
    // Gram matrix, then through relu(tanh) into the final module's logits.
    if (!fw.weight_fallback) {
        const auto& ep = fw.eight_point;
        if (ep.eigenvalues(1) - ep.eigenvalues(0) < kEigengapFloor) {
            throw EigengapCollapseError("eigengap below 1e-10: eigenvector gradient ill-posed");
        }
        const Eigen::Matrix3d dE = geometric_loss_grad(ep.E_raw, vp, lossc.geo_clamp);
        const Vector9d g9 = vec_row_major(dE);
        Vector9d h = Vector9d::Zero();
        for (int j = 1; j < 9; ++j) {
            h += (ep.eigenvectors.col(j).dot(g9) / (ep.eigenvalues(0) - ep.eigenvalues(j))) *
                 ep.eigenvectors.col(j);
        }
        auto& last = fw.modules[static_cast<std::size_t>(I - 1)];
        for (std::size_t r = 0; r < fw.final_set.size(); ++r) {
            const Vector9d q = epipolar_row(fw.final_set.rows[r]);
            const double dw = q.dot(h) * q.dot(ep.e0);
            const double dz = dw * weight_transform_grad(last.pruned_logits[r]);
            dlogits[I - 1](static_cast<Eigen::Index>(last.kept_local[r])) += dz;
        }
    }

    // Walk modules backwards; the 6-channel input of module i routes gradient
    // into the pruned logits of module i-1.
    for (int i = I - 1; i >= 0; --i) {
        const Eigen::MatrixXd dX = fw.modules[i].net->backward(ps, *grads, dguide[i], dlogits[i]);
        if (i > 0) {
            const auto& kept_prev = fw.modules[i - 1].kept_local;
            for (std::size_t j = 0; j < kept_prev.size(); ++j) {
                dguide[i - 1](static_cast<Eigen::Index>(kept_prev[j])) += dX(static_cast<Eigen::Index>(j), 4);
                dlogits[i - 1](static_cast<Eigen::Index>(kept_prev[j])) += dX(static_cast<Eigen::Index>(j), 5);
            }
        }
    }

    if (training && stat_updates) {
        for (int i = 0; i < I; ++i) fw.modules[i].net->collect_stat_updates(stat_updates);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

struct BatchItem {
    const ScenePair* pair = nullptr;
    std::uint64_t virtual_seed = 0;
};

struct BatchResult {
    LossBreakdown loss;  // mean over items
    std::size_t tp = 0, fp = 0, fn = 0;
    std::size_t fallback_count = 0;
    double f_score = 0.0;
};

inline unsigned worker_count(std::size_t items) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("CORRPRUNE_THREADS")) {
        const long v = std::atol(env);
        if (v >= 1) hw = static_cast<unsigned>(v);
    }
    return static_cast<unsigned>(std::min<std::size_t>(hw, std::max<std::size_t>(items, 1)));
}

inline double f_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

/// Mean-over-batch loss and gradients. Items run in parallel waves; the
/// reduction and the batch-norm running-statistic updates happen strictly in
/// item order, so the result does not depend on the worker count.
inline BatchResult compute_gradients(const std::vector<BatchItem>& batch, const ParamStore& ps,
                                     StatStore& stats, const NetworkConfig& net,
                                     const LossConfig& lossc, double eps_verify, bool training,
                                     GradStore* out_grads) {
    if (batch.empty()) throw Error("empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    *out_grads = GradStore::zeros_like(ps);
    BatchResult res;

    struct Slot {
        PairOutcome outcome;
        GradStore grads;
        std::vector<StatUpdate> stat_updates;
        std::exception_ptr error;
    };

    const unsigned workers = worker_count(batch.size());
    std::vector<Slot> slots(batch.size());

    for (std::size_t wave = 0; wave < batch.size(); wave += workers) {
        const std::size_t count = std::min<std::size_t>(workers, batch.size() - wave);
        std::vector<std::thread> pool;
        pool.reserve(count);
        for (std::size_t j = 0; j < count; ++j) {
            pool.emplace_back([&, j] {
                Slot& slot = slots[wave + j];
                try {
                    slot.grads = GradStore::zeros_like(ps);
                    slot.outcome = pair_loss(*batch[wave + j].pair, ps, stats, net, lossc, eps_verify,
                                             batch[wave + j].virtual_seed, training, true, &slot.grads,
                                             &slot.stat_updates);
                } catch (...) {
                    slot.error = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (std::size_t j = 0; j < count; ++j) {
            if (slots[wave + j].error) std::rethrow_exception(slots[wave + j].error);
        }
    }

    for (std::size_t j = 0; j < batch.size(); ++j) {
        Slot& slot = slots[j];
        out_grads->add_scaled(slot.grads, inv_b);
        res.loss.total += inv_b * slot.outcome.loss.total;
        res.loss.geometric += inv_b * slot.outcome.loss.geometric;
        res.loss.classification += inv_b * slot.outcome.loss.classification;
        res.tp += slot.outcome.tp;
        res.fp += slot.outcome.fp;
        res.fn += slot.outcome.fn;
        if (slot.outcome.weight_fallback) ++res.fallback_count;
        if (training) {
            for (const auto& [prefix, mean, var] : slot.stat_updates) {
                Eigen::MatrixXd& rm = stats.at(prefix + ".rm").value;
                Eigen::MatrixXd& rv = stats.at(prefix + ".rv").value;
                rm.col(0) = (1.0 - kBnMomentum) * rm.col(0) + kBnMomentum * mean.transpose();
                rv.col(0) = (1.0 - kBnMomentum) * rv.col(0) + kBnMomentum * var.transpose();
            }
        }
    }
    res.f_score = f_from_counts(res.tp, res.fp, res.fn);
    return res;
}

/// Loss only, same semantics as compute_gradients (training-mode forward).
inline BatchResult compute_loss(const std::vector<BatchItem>& batch, const ParamStore& ps,
                                const StatStore& stats, const NetworkConfig& net,
                                const LossConfig& lossc, double eps_verify, bool training) {
    if (batch.empty()) throw Error("empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    BatchResult res;
    for (const BatchItem& item : batch) {
        const PairOutcome o = pair_loss(*item.pair, ps, stats, net, lossc, eps_verify,
                                        item.virtual_seed, training, false, nullptr, nullptr);
        res.loss.total += inv_b * o.loss.total;
        res.loss.geometric += inv_b * o.loss.geometric;
        res.loss.classification += inv_b * o.loss.classification;
        res.tp += o.tp;
        res.fp += o.fp;
        res.fn += o.fn;
        if (o.weight_fallback) ++res.fallback_count;
    }
    res.f_score = f_from_counts(res.tp, res.fp, res.fn);
    return res;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::int64_t iterations = 2000;
    std::size_t batch = 32;
    std::uint64_t seed = 1;
    double eps_verify = kDefaultEpipolarThreshold;
    std::int64_t log_every = 50;
    std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
};

struct TrainLogRow {
    std::int64_t iteration = 0;
    double lr = 0.0;
    double loss = 0.0;
    double geometric = 0.0;
    double classification = 0.0;
    double f_score = 0.0;
};

struct TrainResult {
    std::int64_t iterations_completed = 0;
    std::int64_t skipped_steps = 0;
    std::vector<TrainLogRow> log;
    bool interrupted = false;
};

/// Seeded, deterministic loop: sample batch, forward, hybrid loss, gradients,
/// Adam step. Steps whose eigenvector gradient is ill-posed are skipped and
/// counted. `start_iteration` supports resuming from a checkpoint.
inline TrainResult train(const Dataset& data, ParamStore& ps, StatStore& stats, OptimizerState& opt,
                         const NetworkConfig& net, const LossConfig& lossc, const LrSchedule& sched,
                         const TrainOptions& opts, std::int64_t start_iteration = 0,
                         const std::function<void(const TrainLogRow&)>& log_hook = nullptr,
                         const std::function<void(std::int64_t)>& checkpoint_hook = nullptr,
                         const std::atomic<bool>* stop = nullptr) {
    if (data.empty()) throw Error("training dataset is empty");
    if (opts.batch < 1) throw ConfigError("batch size must be at least 1");
    sched.validate();
    lossc.validate();

    TrainResult result;
    for (std::int64_t iter = start_iteration + 1; iter <= start_iteration + opts.iterations; ++iter) {
        if (stop && stop->load()) {
            result.interrupted = true;
            break;
        }
        const double lr = lr_at(iter, sched);

        Rng batch_rng(Rng::derive(opts.seed, static_cast<std::uint64_t>(iter), 0xBA7C4ULL));
        std::vector<BatchItem> batch(opts.batch);
        for (std::size_t j = 0; j < opts.batch; ++j) {
            batch[j].pair = &data[batch_rng.below(data.size())];
            batch[j].virtual_seed = Rng::derive(opts.seed, static_cast<std::uint64_t>(iter), j + 1);
        }

        GradStore grads;
        BatchResult br;
        try {
            br = compute_gradients(batch, ps, stats, net, lossc, opts.eps_verify, true, &grads);
        } catch (const EigengapCollapseError&) {
            ++result.skipped_steps;
            result.iterations_completed = iter - start_iteration;
            continue;
        }
        adam_step(ps, grads, opt, lr);
        result.iterations_completed = iter - start_iteration;

        if (opts.log_every > 0 && iter % opts.log_every == 0) {
            const TrainLogRow row{iter, lr, br.loss.total, br.loss.geometric, br.loss.classification,
                                  br.f_score};
            result.log.push_back(row);
            if (log_hook) log_hook(row);
        }
        if (checkpoint_hook && opts.checkpoint_every > 0 && iter % opts.checkpoint_every == 0) {
            checkpoint_hook(iter);
        }
    }
    return result;
}

}  // namespace corrprune
