// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Run with criterion numbers as arguments to execute a subset,
// e.g. `acceptance 1 4 5`.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "corrprune/checkpoint.hpp"
#include "corrprune/config.hpp"
#include "corrprune/metrics.hpp"
#include "corrprune/training.hpp"

using namespace corrprune;

namespace {

double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-12);
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

double essential_gap(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    const Eigen::Matrix3d an = a / a.norm();
    const Eigen::Matrix3d bn = b / b.norm();
    return std::min((an - bn).norm(), (an + bn).norm());
}

Eigen::MatrixXd random_features(Rng& rng, Eigen::Index n, Eigen::Index d) {
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
    return x;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& p) {
    Eigen::MatrixXd y(x.rows(), x.cols());
    for (std::size_t i = 0; i < p.size(); ++i)
        y.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(p[i]));
    return y;
}

// Shared state so criterion 8 can reuse criterion 7's seed-7 training run.
struct Shared {
    std::optional<double> trained_f_seed7;
    Dataset train_data, holdout;
    bool datasets_ready = false;

    void ensure_datasets() {
        if (datasets_ready) return;
        DatasetSpec tr;
        tr.num_pairs = 200;
        tr.n = 256;
        tr.outlier_rate = 0.5;
        tr.noise_sigma = 1e-3;
        tr.seed = 7;
        DatasetSpec ho = tr;
        ho.num_pairs = 50;
        ho.seed = 8;
        train_data = generate_dataset(tr);
        holdout = generate_dataset(ho);
        datasets_ready = true;
    }
};

NetworkConfig desk_network(const std::string& variant = "s-then-c") {
    NetworkConfig net;
    net.d = 32;
    net.L = 3;
    net.H = 4;
    net.po = 2;
    net.modules = 2;
    net.block_variant = block_variant_from_string(variant);
    return net;
}

/// Criterion-7 protocol: init with `seed`, train 2000 iterations at batch 8,
/// return the held-out F-score. The criterion pins the model, the data and
/// the step budget but not the schedule; the default 10000-iteration warmup
/// is sized for full-scale runs, so the desk protocol scales it to 200
/// (one tenth of the run) with the same shape and base rate.
double desk_train_f(Shared& shared, const std::string& variant, std::uint64_t seed,
                    double* untrained_f = nullptr, double* map5 = nullptr,
                    double* wall_minutes = nullptr) {
    shared.ensure_datasets();
    const NetworkConfig net = desk_network(variant);
    LossConfig lossc;
    LrSchedule sched;
    sched.warmup = 200;
    ParamStore ps;
    StatStore st;
    Rng init(seed);
    declare_parameters(ps, st, net, init);
    OptimizerState opt = OptimizerState::init(ps);

    if (untrained_f) *untrained_f = evaluate(shared.holdout, ps, st, net, {}).f_score;

    TrainOptions opts;
    opts.iterations = 2000;
    opts.batch = 8;
    opts.seed = seed;
    opts.log_every = 0;
    const auto t0 = std::chrono::steady_clock::now();
    train(shared.train_data, ps, st, opt, net, lossc, sched, opts);
    if (wall_minutes) {
        *wall_minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    }
    const MetricsReport rep = evaluate(shared.holdout, ps, st, net, {});
    if (map5) *map5 = rep.map5;
    return rep.f_score;
}

// ---------------------------------------------------------------------------

bool criterion1(Shared&, std::string& detail) {
    int failures = 0;
    double total_ms = 0.0;
    const int repeats = 200;
    for (int rep = 0; rep < repeats; ++rep) {
        Rng rng(5000 + rep);
        const CameraPose pose = sample_pose(rng, 30.0);
        const EssentialMatrix E_gt = essential_from_pose(pose);
        const VirtualPairSet vp = make_virtual_pairs(pose, 100, rng);
        const std::vector<double> w(100, 1.0);
        const auto t0 = std::chrono::steady_clock::now();
        const EssentialMatrix E = weighted_eight_point(vp.pairs, w);
        total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (essential_gap(E.m, E_gt.m) >= 1e-6) ++failures;
    }
    const double mean_ms = total_ms / repeats;
    std::ostringstream os;
    os << failures << "/200 failures, " << mean_ms << " ms per solve";
    detail = os.str();
    return failures == 0 && mean_ms < 1.0;
}

bool criterion2(Shared&, std::string& detail) {
    const std::vector<std::string> variants = {"s-then-c", "c-then-s", "c-then-c",
                                               "s-then-s", "vanilla", "attention-only"};
    double worst_block = 0.0, worst_forward = 0.0;
    int multiset_failures = 0;
    for (int t = 0; t < 50; ++t) {
        Rng rng(9000 + t);
        NetworkConfig cfg = desk_network(variants[static_cast<std::size_t>(t) % variants.size()]);
        cfg.d = 32;
        cfg.L = 2;
        cfg.H = 4;
        cfg.po = 2;
        cfg.modules = 1;
        ParamStore ps;
        StatStore st;
        declare_parameters(ps, st, cfg, rng);

        // single block equivariance
        Block blk("m1.blk0", cfg);
        const Eigen::MatrixXd x = random_features(rng, 64, cfg.d);
        const auto perm = random_permutation(rng, 64);
        worst_block = std::max(worst_block,
                               max_rel_diff(blk.forward(ps, permute_rows(x, perm)),
                                            permute_rows(blk.forward(ps, x), perm)));

        // full per-feature forward (up -> blocks -> heads) on a random scene
        DatasetSpec spec;
        spec.n = 64;
        spec.num_pairs = 1;
        spec.seed = 700 + static_cast<std::uint64_t>(t);
        const ScenePair pair = generate_dataset(spec)[0];
        const PipelineForward fw = pipeline_forward(pair.set, ps, st, cfg, 1e-4, true);
        CorrespondenceSet permuted;
        for (std::size_t i : perm) permuted.rows.push_back(pair.set.rows[i]);
        const PipelineForward fwp = pipeline_forward(permuted, ps, st, cfg, 1e-4, true);
        for (std::size_t i = 0; i < perm.size(); ++i) {
            const double ref = fw.modules[0].logits[perm[i]];
            const double got = fwp.modules[0].logits[i];
            worst_forward = std::max(worst_forward,
                                     std::abs(got - ref) / std::max({std::abs(ref), std::abs(got), 1e-12}));
        }

        // kept multiset invariance needs pairwise-distinct logits
        std::vector<double> sorted = fw.modules[0].logits;
        std::sort(sorted.begin(), sorted.end());
        bool distinct = true;
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            if (sorted[i] == sorted[i - 1]) distinct = false;
        }
        if (distinct) {
            auto key = [](const Correspondence& c) { return std::make_tuple(c.x, c.y, c.u, c.v); };
            std::vector<std::tuple<double, double, double, double>> a, b;
            for (const auto& c : fw.final_set.rows) a.push_back(key(c));
            for (const auto& c : fwp.final_set.rows) b.push_back(key(c));
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            if (a != b) ++multiset_failures;
        }
    }
    std::ostringstream os;
    os << "worst block rel err " << worst_block << ", worst forward rel err " << worst_forward
       << ", multiset failures " << multiset_failures;
    detail = os.str();
    return worst_block < 1e-5 && worst_forward < 1e-5 && multiset_failures == 0;
}

bool criterion3(Shared&, std::string& detail) {
    NetworkConfig net;
    net.d = 8;
    net.L = 2;
    net.H = 2;
    net.po = 2;
    net.modules = 1;
    LossConfig lossc;

    DatasetSpec spec;
    spec.n = 32;
    spec.num_pairs = 1;
    spec.outlier_rate = 0.5;
    spec.noise_sigma = 1e-3;
    spec.seed = 42;
    ScenePair pair = generate_dataset(spec)[0];
    pair.set.rows.resize(16);
    pair.labels.y.resize(16);

    ParamStore ps;
    StatStore stats;
    Rng init(137);
    declare_parameters(ps, stats, net, init);
    ps.at("m1.pred.s3.lin.b").value.setConstant(1.0);

    const std::vector<BatchItem> batch{{&pair, 999}};
    {
        const PipelineForward fw = pipeline_forward(pair.set, ps, stats, net, 1e-4, true);
        if (fw.weight_fallback) {
            detail = "weight fallback triggered; eigenvector path not live";
            return false;
        }
    }

    GradStore grads;
    compute_gradients(batch, ps, stats, net, lossc, 1e-4, true, &grads);

    const double h = 1e-4;
    std::size_t checked = 0;
    double worst = 0.0;
    for (auto& [name, t] : ps.items()) {
        for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
            for (Eigen::Index j = 0; j < t.value.cols(); ++j) {
                const double saved = t.value(i, j);
                t.value(i, j) = saved + h;
                const double lp = compute_loss(batch, ps, stats, net, lossc, 1e-4, true).loss.total;
                t.value(i, j) = saved - h;
                const double lm = compute_loss(batch, ps, stats, net, lossc, 1e-4, true).loss.total;
                t.value(i, j) = saved;
                const double fd = (lp - lm) / (2.0 * h);
                const double an = grads.at(name)(i, j);
                if (std::max(std::abs(fd), std::abs(an)) <= 1e-6) continue;
                worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
                ++checked;
            }
        }
    }

    // eight-point eigenvector path, checked separately by perturbing the
    // weights and differencing the canonical eigenvector entries
    Rng rng(36);
    const CameraPose pose = sample_pose(rng, 30.0);
    VirtualPairSet vp = make_virtual_pairs(pose, 30, rng);
    for (auto& c : vp.pairs.rows) {
        c.u += 1e-3 * rng.normal();
        c.v += 1e-3 * rng.normal();
    }
    std::vector<double> w(vp.pairs.size());
    for (auto& v : w) v = rng.uniform(0.2, 1.0);
    const EightPointSolution sol = solve_weighted_eight_point(vp.pairs, w);
    Vector9d g9;
    for (int i = 0; i < 9; ++i) g9(i) = rng.normal();
    Vector9d hv = Vector9d::Zero();
    for (int j = 1; j < 9; ++j) {
        hv += (sol.eigenvectors.col(j).dot(g9) / (sol.eigenvalues(0) - sol.eigenvalues(j))) *
              sol.eigenvectors.col(j);
    }
    double worst_eig = 0.0;
    std::size_t checked_eig = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const Vector9d q = epipolar_row(vp.pairs.rows[i]);
        const double analytic = q.dot(hv) * q.dot(sol.e0);
        const double saved = w[i];
        w[i] = saved + h;
        const double lp = g9.dot(solve_weighted_eight_point(vp.pairs, w).e0);
        w[i] = saved - h;
        const double lm = g9.dot(solve_weighted_eight_point(vp.pairs, w).e0);
        w[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        if (std::max(std::abs(fd), std::abs(analytic)) <= 1e-6) continue;
        worst_eig = std::max(worst_eig, std::abs(fd - analytic) / std::max(std::abs(fd), std::abs(analytic)));
        ++checked_eig;
    }

    std::ostringstream os;
    os << "network: worst rel err " << worst << " over " << checked
       << " params; eigenvector path: worst rel err " << worst_eig << " over " << checked_eig
       << " weights";
    detail = os.str();
    return checked > 500 && worst < 1e-3 && checked_eig >= 10 && worst_eig < 1e-3;
}

bool criterion4(Shared&, std::string& detail) {
    double worst = 1.0;  // track worst |rowsum - 1|
    worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        Rng rng(11000 + t);
        const int d = 32, H = 4;
        ParamStore ps;
        SpatialAttention::declare(ps, rng, "s", d);
        ChannelAttention::declare(ps, rng, "c", d);
        SpatialAttention sa("s", H);
        ChannelAttention ca("c", H, true);
        const auto n = static_cast<Eigen::Index>(2 + rng.below(79));
        const Eigen::MatrixXd x = random_features(rng, n, d);
        sa.forward(ps, x);
        ca.forward(ps, x);
        for (const auto& A : sa.A) {
            for (Eigen::Index i = 0; i < A.rows(); ++i) worst = std::max(worst, std::abs(A.row(i).sum() - 1.0));
        }
        for (const auto& A : ca.A) {
            for (Eigen::Index i = 0; i < A.rows(); ++i) worst = std::max(worst, std::abs(A.row(i).sum() - 1.0));
        }
    }
    std::ostringstream os;
    os << "worst |rowsum - 1| = " << worst;
    detail = os.str();
    return worst < 1e-6;
}

bool criterion5(Shared&, std::string& detail) {
    std::size_t mismatches = 0;
    for (int t = 0; t < 100; ++t) {
        DatasetSpec spec;
        spec.n = 128;
        spec.num_pairs = 1;
        spec.outlier_rate = 0.4;
        spec.noise_sigma = 2e-3;  // noisy: some rows near the threshold
        spec.seed = 20000 + static_cast<std::uint64_t>(t);
        const ScenePair pair = generate_dataset(spec)[0];
        const ProbabilitySet p = verify(pair.E_gt, pair.set, kDefaultEpipolarThreshold);
        const LabelSet l = label_correspondences(pair.E_gt, pair.set, kDefaultEpipolarThreshold);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p.values[i] != static_cast<double>(l.y[i])) ++mismatches;
        }
    }
    std::ostringstream os;
    os << mismatches << " elementwise mismatches over 100 sets";
    detail = os.str();
    return mismatches == 0;
}

bool criterion6(Shared&, std::string& detail) {
    DatasetSpec spec;
    spec.num_pairs = 20;
    spec.n = 64;
    spec.outlier_rate = 0.5;
    spec.noise_sigma = 0.0;
    spec.seed = 606;
    const Dataset data = generate_dataset(spec);

    NetworkConfig net = desk_network();
    net.d = 32;
    net.L = 2;
    net.po = 1;
    ParamStore ps;
    StatStore st;
    Rng init(606);
    declare_parameters(ps, st, net, init);

    std::size_t label_mismatches = 0;
    double worst_angle = 0.0;
    for (const ScenePair& pair : data) {
        std::vector<double> oracle;
        for (auto y : pair.labels.y) oracle.push_back(static_cast<double>(y));
        const PipelineForward fw = pipeline_forward(pair.set, ps, st, net, 1e-4, false, &oracle);
        for (std::size_t i = 0; i < fw.P.size(); ++i) {
            if (fw.P.values[i] != static_cast<double>(pair.labels.y[i])) ++label_mismatches;
        }
        const CameraPose rec = decompose_essential(fw.E, fw.final_set);
        const PoseError err = pose_error(rec, pair.pose);
        worst_angle = std::max({worst_angle, err.rotation_deg, err.translation_deg});
    }
    EvalOptions opts;
    opts.oracle_logits = true;
    const MetricsReport rep = evaluate(data, ps, st, net, opts);
    std::ostringstream os;
    os << label_mismatches << " P/label mismatches, F = " << rep.f_score << ", worst pose angle "
       << worst_angle << " deg";
    detail = os.str();
    return label_mismatches == 0 && rep.f_score == 1.0 && worst_angle < 1e-3;
}

bool criterion7(Shared& shared, std::string& detail) {
    double untrained = 0.0, map5 = 0.0, minutes = 0.0;
    const double trained = desk_train_f(shared, "s-then-c", 7, &untrained, &map5, &minutes);
    shared.trained_f_seed7 = trained;
    std::ostringstream os;
    os << "held-out F " << trained << " (untrained " << untrained << ", delta "
       << trained - untrained << "), mAP5 " << map5 << ", " << minutes
       << " min (2000 iterations, batch 8, warmup scaled to 200)";
    detail = os.str();
    return trained >= 0.85 && trained - untrained >= 0.30 && map5 >= 0.60 && minutes <= 30.0;
}

bool criterion8(Shared& shared, std::string& detail) {
    const std::vector<std::uint64_t> seeds = {7, 8, 9};
    double sum_stc = 0.0, sum_attn = 0.0;
    for (std::uint64_t s : seeds) {
        if (s == 7 && shared.trained_f_seed7) {
            sum_stc += *shared.trained_f_seed7;
        } else {
            sum_stc += desk_train_f(shared, "s-then-c", s);
        }
    }
    for (std::uint64_t s : seeds) sum_attn += desk_train_f(shared, "attention-only", s);
    const double mean_stc = sum_stc / 3.0;
    const double mean_attn = sum_attn / 3.0;
    std::ostringstream os;
    os << "mean F: s-then-c " << mean_stc << " vs attention-only " << mean_attn << " (gap "
       << mean_stc - mean_attn << ")";
    detail = os.str();
    return mean_stc - mean_attn >= 0.05;
}

bool criterion9(Shared&, std::string& detail) {
    // Literal protocol: 30%-inlier noise-free pairs, 2000 iterations, default
    // inlier threshold (= eps_verify), success = both angles within 1 degree.
    DatasetSpec spec;
    spec.num_pairs = 100;
    spec.n = 256;
    spec.outlier_rate = 0.7;  // 30% inliers
    spec.noise_sigma = 0.0;
    spec.seed = 909;
    const Dataset data = generate_dataset(spec);
    const MetricsReport literal = evaluate_ransac(data, 2000, kDefaultEpipolarThreshold, 909);
    std::size_t ok = 0;
    for (const auto& p : literal.pairs) {
        if (std::max(p.theta_r, p.theta_t) <= 1.0) ++ok;
    }

    // Report-shape clause: the eval report carries the baseline row.
    DatasetSpec small = spec;
    small.num_pairs = 5;
    small.outlier_rate = 0.3;
    const Dataset small_data = generate_dataset(small);
    NetworkConfig net = desk_network();
    ParamStore ps;
    StatStore st;
    Rng init(909);
    declare_parameters(ps, st, net, init);
    const MetricsReport learned = evaluate(small_data, ps, st, net, {});
    const MetricsReport baseline = evaluate_ransac(small_data, 500, kDefaultEpipolarThreshold, 909);
    std::ostringstream table;
    emit_report_text(table, {learned, baseline});
    const bool row_ok = table.str().find("ransac") != std::string::npos &&
                        table.str().find("mAP5") != std::string::npos &&
                        table.str().find("ART(ms)") != std::string::npos;

    // Diagnostic context: the same protocol at 30% outliers.
    DatasetSpec easy = spec;
    easy.outlier_rate = 0.3;
    const Dataset easy_data = generate_dataset(easy);
    const MetricsReport flipped = evaluate_ransac(easy_data, 2000, 1e-6, 909);
    std::size_t ok_flipped = 0;
    for (const auto& p : flipped.pairs) {
        if (std::max(p.theta_r, p.theta_t) <= 1.0) ++ok_flipped;
    }

    std::ostringstream os;
    os << ok << "/100 pairs within 1 degree at the stated 30%-inlier protocol (need 99); "
       << "baseline row in report: " << (row_ok ? "yes" : "no")
       << ". Context: 30%-outlier variant passes " << ok_flipped
       << "/100; see the decisions ledger for the feasibility analysis.";
    detail = os.str();
    return ok >= 99 && row_ok;
}

bool criterion10(Shared&, std::string& detail) {
    // fixed-seed training determinism
    RunConfig cfg;
    cfg.d = 16;
    cfg.L = 2;
    cfg.H = 4;
    cfg.po = 1;
    cfg.I = 2;
    cfg.pairs = 6;
    cfg.n = 64;
    cfg.iterations = 10;
    cfg.batch = 4;
    cfg.seed = 17;
    const Dataset data = generate_dataset(cfg.dataset());
    auto run = [&]() {
        Checkpoint ckpt = init_checkpoint(cfg);
        const TrainResult r = train(data, ckpt.params, ckpt.stats, ckpt.opt, cfg.network(),
                                    cfg.loss(), cfg.schedule(), cfg.train_options());
        ckpt.iteration = r.iterations_completed;
        return serialize_checkpoint(ckpt);
    };
    const std::string ck_a = run();
    const std::string ck_b = run();
    const bool train_deterministic = ck_a == ck_b;

    // dataset and checkpoint roundtrips are bytewise
    const std::string ds = serialize_dataset(data);
    const bool ds_roundtrip = serialize_dataset(parse_dataset(ds)) == ds;
    const bool ck_roundtrip = serialize_checkpoint(parse_checkpoint(ck_a)) == ck_a;

    // corrupted headers are rejected without partial state
    bool guards_ok = true;
    {
        std::string bad = ds;
        bad[0] = 'X';
        try {
            parse_dataset(bad);
            guards_ok = false;
        } catch (const BadMagicError&) {
        }
        std::string trunc = ck_a;
        trunc.resize(trunc.size() / 3);
        try {
            parse_checkpoint(trunc);
            guards_ok = false;
        } catch (const TruncationError&) {
        }
        std::string badck = ck_a;
        badck[1] = 'x';
        try {
            parse_checkpoint(badck);
            guards_ok = false;
        } catch (const BadMagicError&) {
        }
    }

    std::ostringstream os;
    os << "train-twice identical: " << (train_deterministic ? "yes" : "no") << "; roundtrips: dataset "
       << (ds_roundtrip ? "ok" : "BAD") << ", checkpoint " << (ck_roundtrip ? "ok" : "BAD")
       << "; header guards: " << (guards_ok ? "ok" : "BAD");
    detail = os.str();
    return train_deterministic && ds_roundtrip && ck_roundtrip && guards_ok;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> filter;
    for (int i = 1; i < argc; ++i) filter.insert(std::atoi(argv[i]));

    struct Entry {
        int id;
        const char* name;
        std::function<bool(Shared&, std::string&)> run;
    };
    const std::vector<Entry> criteria = {
        {1, "eight-point exactness (200 seeded repeats, < 1 ms per solve)", criterion1},
        {2, "permutation equivariance suite (blocks, forward, kept multiset)", criterion2},
        {3, "gradient check vs central differences (network + eigenvector path)", criterion3},
        {4, "attention softmax rows sum to 1 on 100 random inputs", criterion4},
        {5, "verify == label_correspondences elementwise on 100 noisy sets", criterion5},
        {6, "oracle-logit pipeline reproduces labels and the exact pose", criterion6},
        {7, "desk training reaches held-out F >= 0.85, delta >= 0.30, mAP5 >= 0.60", criterion7},
        {8, "s-then-c beats attention-only by >= 0.05 mean F over 3 seeds", criterion8},
        {9, "RANSAC baseline: 30%-inlier pairs within 1 degree on >= 99/100", criterion9},
        {10, "determinism and file formats", criterion10},
    };

    Shared shared;
    int failures = 0;
    for (const Entry& c : criteria) {
        if (!filter.empty() && !filter.count(c.id)) continue;
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(shared, detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %d: %s — %s\n", ok ? "PASS" : "FAIL", c.id, c.name,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures == 0) {
        std::printf("all criteria passed\n");
    } else {
        std::printf("%d criterion(s) failed\n", failures);
    }
    return failures == 0 ? 0 : 1;
}
