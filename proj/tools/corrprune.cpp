// Command-line front end: dataset generation, training, evaluation with an
// optional RANSAC baseline row, single-pair pruning, and the block/predictor
// ablation sweep.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "corrprune/checkpoint.hpp"
#include "corrprune/config.hpp"
#include "corrprune/metrics.hpp"
#include "corrprune/training.hpp"

namespace {

using namespace corrprune;

std::atomic<bool> g_stop{false};

void handle_sigint(int) { g_stop.store(true); }

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> overrides;  // from dedicated flags

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "configuration file (key = value lines)");
        cmd->add_option("--set", sets, "override a config key, e.g. --set d=64")->take_all();
    }

    RunConfig resolve() const {
        std::vector<std::pair<std::string, std::string>> all = overrides;
        for (const std::string& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            all.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        return parse_config(config_path, all);
    }
};

/// Register a flag that lands in the config override list when given.
void config_flag(CLI::App* cmd, CommonArgs& common, const std::string& flag, const std::string& key,
                 const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&common, key](const std::string& v) { common.overrides.emplace_back(key, v); }, help);
}

void echo_config(const RunConfig& cfg) {
    std::cerr << "resolved configuration:\n" << config_to_text(cfg);
}

void atomic_write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const std::string tmp = path + ".tmp";
    save_checkpoint(tmp, ckpt);
    std::filesystem::rename(tmp, path);
}

int cmd_generate(const CommonArgs& common, const std::string& out, const std::string& csv) {
    const RunConfig cfg = common.resolve();
    echo_config(cfg);
    const Dataset data = generate_dataset(cfg.dataset());
    write_dataset(out, data);
    std::cerr << "wrote " << data.size() << " pairs to " << out << "\n";
    if (!csv.empty()) {
        export_dataset_csv(csv, data);
        std::cerr << "wrote inspection csv to " << csv << "\n";
    }
    return 0;
}

int cmd_train(const CommonArgs& common, const std::string& dataset_path, const std::string& out,
              const std::string& resume, const std::string& log_path) {
    Checkpoint ckpt;
    if (!resume.empty()) {
        RunConfig merged = load_checkpoint(resume).config;
        // command-line overrides apply on top of the snapshot
        if (common.config_path.empty() && common.overrides.empty() && common.sets.empty()) {
            ckpt = load_checkpoint(resume);
        } else {
            std::vector<std::pair<std::string, std::string>> all = common.overrides;
            for (const std::string& s : common.sets) {
                const auto eq = s.find('=');
                if (eq == std::string::npos) throw ConfigError("--set expects key=value");
                all.emplace_back(s.substr(0, eq), s.substr(eq + 1));
            }
            for (const auto& [k, v] : all) configdetail::assign(merged, k, v, "command line");
            merged.validate();
            ckpt = load_checkpoint(resume, &merged);
        }
    } else {
        ckpt = init_checkpoint(common.resolve());
    }
    echo_config(ckpt.config);

    const Dataset data = read_dataset(dataset_path);
    std::ofstream log;
    if (!log_path.empty()) {
        const bool fresh = !std::filesystem::exists(log_path);
        log.open(log_path, std::ios::app);
        if (!log) throw IoError("cannot open " + log_path);
        if (fresh) log << "iteration,lr,loss,L_e,L_c,train_f\n";
    }

    std::signal(SIGINT, handle_sigint);
    const TrainOptions opts = ckpt.config.train_options();
    const TrainResult result = train(
        data, ckpt.params, ckpt.stats, ckpt.opt, ckpt.config.network(), ckpt.config.loss(),
        ckpt.config.schedule(), opts, ckpt.iteration,
        [&](const TrainLogRow& row) {
            if (log) {
                log << row.iteration << ',' << fmt9(row.lr) << ',' << fmt9(row.loss) << ','
                    << fmt9(row.geometric) << ',' << fmt9(row.classification) << ','
                    << fmt9(row.f_score) << '\n';
                log.flush();
            }
        },
        [&](std::int64_t iter) {
            ckpt.iteration = iter;
            atomic_write_checkpoint(out, ckpt);
        },
        &g_stop);

    ckpt.iteration += result.iterations_completed;
    atomic_write_checkpoint(out, ckpt);
    std::cerr << "completed " << result.iterations_completed << " iterations ("
              << result.skipped_steps << " skipped), checkpoint at " << out
              << (result.interrupted ? " (interrupted)" : "") << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& ckpt_path, const std::string& dataset_path,
             const std::string& report_path, const std::string& format, bool with_ransac,
             bool strict, bool oracle) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!common.config_path.empty() || !common.overrides.empty() || !common.sets.empty()) {
        RunConfig merged = ckpt.config;
        std::vector<std::pair<std::string, std::string>> all = common.overrides;
        for (const std::string& s : common.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value");
            all.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& [k, v] : all) configdetail::assign(merged, k, v, "command line");
        merged.validate();
        ckpt = load_checkpoint(ckpt_path, &merged);
    }
    echo_config(ckpt.config);
    const Dataset data = read_dataset(dataset_path);

    EvalOptions opts;
    opts.eps_verify = ckpt.config.eps_verify;
    opts.oracle_logits = oracle;
    std::vector<MetricsReport> reports;
    reports.push_back(evaluate(data, ckpt.params, ckpt.stats, ckpt.config.network(), opts));
    if (with_ransac) {
        reports.push_back(evaluate_ransac(data, static_cast<int>(ckpt.config.ransac_iters),
                                          ckpt.config.eps_verify, ckpt.config.seed));
    }

    if (report_path.empty()) {
        emit_report_text(std::cout, reports);
    } else {
        emit_report(reports, report_path, report_format_from_string(format));
        std::cerr << "wrote report to " << report_path << "\n";
    }
    std::size_t failures = 0;
    for (const auto& r : reports) failures += r.failures;
    if (strict && failures > 0) {
        std::cerr << failures << " pair(s) failed hard\n";
        return 1;
    }
    return 0;
}

CorrespondenceSet read_pair_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw IoError("empty csv " + path);
    std::vector<std::string> cols;
    std::stringstream hs(header);
    std::string tok;
    while (std::getline(hs, tok, ',')) cols.push_back(tok);
    int ix = -1, iy = -1, iu = -1, iv = -1;
    for (int i = 0; i < static_cast<int>(cols.size()); ++i) {
        if (cols[i] == "x") ix = i;
        if (cols[i] == "y") iy = i;
        if (cols[i] == "u") iu = i;
        if (cols[i] == "v") iv = i;
    }
    if (ix < 0 || iy < 0 || iu < 0 || iv < 0) {
        throw IoError(path + ": need columns x, y, u, v");
    }
    CorrespondenceSet set;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (configdetail::trim(line).empty()) continue;
        std::stringstream ls(line);
        std::vector<std::string> vals;
        while (std::getline(ls, tok, ',')) vals.push_back(tok);
        const int need = std::max(std::max(ix, iy), std::max(iu, iv));
        if (static_cast<int>(vals.size()) <= need) {
            throw IoError(path + ":" + std::to_string(lineno) + ": short row");
        }
        Correspondence c;
        try {
            c.x = std::stod(vals[ix]);
            c.y = std::stod(vals[iy]);
            c.u = std::stod(vals[iu]);
            c.v = std::stod(vals[iv]);
        } catch (const std::exception&) {
            throw IoError(path + ":" + std::to_string(lineno) + ": bad number");
        }
        if (!correspondence_valid(c)) {
            throw IoError(path + ":" + std::to_string(lineno) + ": coordinate out of range");
        }
        set.rows.push_back(c);
    }
    return set;
}

int cmd_prune(const std::string& ckpt_path, const std::string& dataset_path, std::int64_t index,
              const std::string& csv_in, const std::string& out) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    echo_config(ckpt.config);

    CorrespondenceSet set;
    if (!csv_in.empty()) {
        set = read_pair_csv(csv_in);
    } else {
        const Dataset data = read_dataset(dataset_path);
        if (index < 0 || static_cast<std::size_t>(index) >= data.size()) {
            throw ConfigError("pair index out of range");
        }
        set = data[static_cast<std::size_t>(index)].set;
    }

    const PipelineForward fw = pipeline_forward(set, ckpt.params, ckpt.stats, ckpt.config.network(),
                                                ckpt.config.eps_verify, false);
    std::vector<std::uint8_t> in_final(set.size(), 0);
    for (std::size_t r : fw.final_rows) in_final[r] = 1;

    std::ostream* out_stream = &std::cout;
    std::ofstream file;
    if (!out.empty()) {
        file.open(out, std::ios::trunc);
        if (!file) throw IoError("cannot open " + out);
        out_stream = &file;
    }
    char buf[64];
    *out_stream << "# essential_matrix_row_major";
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            std::snprintf(buf, sizeof(buf), ",%.17g", fw.E.m(i, j));
            *out_stream << buf;
        }
    }
    *out_stream << "\nrow,x,y,u,v,distance,verified,in_final_subset\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        const Correspondence& c = set.rows[i];
        *out_stream << i << ',' << fmt9(c.x) << ',' << fmt9(c.y) << ',' << fmt9(c.u) << ','
                    << fmt9(c.v) << ',' << fmt9(fw.distances[i]) << ','
                    << (fw.P.values[i] != 0.0 ? 1 : 0) << ',' << static_cast<int>(in_final[i]) << '\n';
    }
    return 0;
}

int cmd_ablate(const CommonArgs& common, const std::string& dataset_path,
               const std::string& holdout_path, const std::string& out, const std::string& format) {
    const RunConfig base = common.resolve();
    echo_config(base);
    const Dataset train_data = read_dataset(dataset_path);
    const Dataset holdout = holdout_path.empty() ? train_data : read_dataset(holdout_path);

    const std::vector<std::string> block_variants = {"s-then-c", "c-then-s", "c-then-c",
                                                     "s-then-s", "vanilla", "attention-only"};
    const std::vector<std::string> predictor_variants = {"prediction-block", "simple-projection"};

    std::ostream* out_stream = &std::cout;
    std::ofstream file;
    if (!out.empty()) {
        file.open(out, std::ios::trunc);
        if (!file) throw IoError("cannot open " + out);
        out_stream = &file;
    }
    const bool csv = format == "csv";
    if (csv) {
        *out_stream << "block_variant,predictor_variant,precision,recall,f,map5,map20\n";
    } else {
        char line[160];
        std::snprintf(line, sizeof(line), "%-16s %-18s %8s %8s %8s %8s %8s\n", "block", "predictor",
                      "P", "R", "F", "mAP5", "mAP20");
        *out_stream << line;
    }

    for (const std::string& bv : block_variants) {
        for (const std::string& pv : predictor_variants) {
            RunConfig cfg = base;
            cfg.block_variant = bv;
            cfg.predictor_variant = pv;
            cfg.validate();
            Checkpoint ckpt = init_checkpoint(cfg);
            train(train_data, ckpt.params, ckpt.stats, ckpt.opt, cfg.network(), cfg.loss(),
                  cfg.schedule(), cfg.train_options(), 0, nullptr, nullptr, &g_stop);
            EvalOptions eopts;
            eopts.eps_verify = cfg.eps_verify;
            const MetricsReport rep = evaluate(holdout, ckpt.params, ckpt.stats, cfg.network(), eopts);
            if (csv) {
                *out_stream << bv << ',' << pv << ',' << fmt9(rep.precision) << ',' << fmt9(rep.recall)
                            << ',' << fmt9(rep.f_score) << ',' << fmt9(rep.map5) << ','
                            << fmt9(rep.map20) << '\n';
            } else {
                char line[160];
                std::snprintf(line, sizeof(line), "%-16s %-18s %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                              bv.c_str(), pv.c_str(), rep.precision, rep.recall, rep.f_score,
                              rep.map5, rep.map20);
                *out_stream << line;
            }
            out_stream->flush();
            std::cerr << "ablate: " << bv << " + " << pv << " done (F = " << rep.f_score << ")\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"correspondence pruning toolkit"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, ablate_args;

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
    std::string gen_out, gen_csv;
    gen->add_option("--out", gen_out, "output dataset file")->required();
    gen->add_option("--csv", gen_csv, "also export an inspection csv");
    gen_args.add_to(gen);
    config_flag(gen, gen_args, "--pairs", "pairs", "number of pairs");
    config_flag(gen, gen_args, "--n", "n", "correspondences per pair");
    config_flag(gen, gen_args, "--outlier-rate", "outlier_rate", "outlier fraction in [0,1)");
    config_flag(gen, gen_args, "--noise", "noise", "gaussian noise sigma");
    config_flag(gen, gen_args, "--max-angle", "max_angle", "max rotation angle (degrees)");
    config_flag(gen, gen_args, "--seed", "seed", "random seed");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    std::string tr_dataset, tr_out, tr_resume, tr_log;
    tr->add_option("--dataset", tr_dataset, "training dataset file")->required();
    tr->add_option("--out", tr_out, "checkpoint output path")->required();
    tr->add_option("--resume", tr_resume, "resume from a checkpoint");
    tr->add_option("--log", tr_log, "append metrics csv here");
    train_args.add_to(tr);
    config_flag(tr, train_args, "--iterations", "iterations", "training iterations");
    config_flag(tr, train_args, "--batch", "batch", "batch size");
    config_flag(tr, train_args, "--seed", "seed", "random seed");
    config_flag(tr, train_args, "--d", "d", "channel dimension");
    config_flag(tr, train_args, "--L", "L", "blocks per module");
    config_flag(tr, train_args, "--H", "H", "attention heads");
    config_flag(tr, train_args, "--po", "po", "guiding tap block index");
    config_flag(tr, train_args, "--block-variant", "block_variant", "block structure variant");
    config_flag(tr, train_args, "--predictor-variant", "predictor_variant", "prediction head variant");
    config_flag(tr, train_args, "--checkpoint-every", "checkpoint_every", "periodic checkpoint interval");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_dataset, ev_report, ev_format = "text";
    bool ev_ransac = false, ev_strict = false, ev_oracle = false;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--dataset", ev_dataset, "evaluation dataset file")->required();
    ev->add_option("--report", ev_report, "report output path (stdout if omitted)");
    ev->add_option("--format", ev_format, "text | csv | jsonl");
    ev->add_flag("--ransac", ev_ransac, "add the RANSAC baseline row");
    ev->add_flag("--strict", ev_strict, "exit nonzero on any hard per-pair failure");
    ev->add_flag("--oracle", ev_oracle, "diagnostic: replace logits with ground-truth labels");
    eval_args.add_to(ev);
    config_flag(ev, eval_args, "--ransac-iters", "ransac_iters", "baseline iterations");

    // prune
    auto* pr = app.add_subcommand("prune", "prune one pair and emit per-row results");
    std::string pr_ckpt, pr_dataset, pr_csv, pr_out;
    std::int64_t pr_index = 0;
    pr->add_option("--checkpoint", pr_ckpt, "checkpoint file")->required();
    pr->add_option("--dataset", pr_dataset, "dataset file");
    pr->add_option("--index", pr_index, "pair index within the dataset");
    pr->add_option("--csv", pr_csv, "read the pair from a csv instead (columns x,y,u,v)");
    pr->add_option("--out", pr_out, "output csv (stdout if omitted)");

    // ablate
    auto* ab = app.add_subcommand("ablate", "sweep block and predictor variants");
    std::string ab_dataset, ab_holdout, ab_out, ab_format = "text";
    ab->add_option("--dataset", ab_dataset, "training dataset file")->required();
    ab->add_option("--holdout", ab_holdout, "held-out dataset (defaults to the training set)");
    ab->add_option("--out", ab_out, "report output path (stdout if omitted)");
    ab->add_option("--format", ab_format, "text | csv");
    ablate_args.add_to(ab);
    config_flag(ab, ablate_args, "--iterations", "iterations", "training iterations per variant");
    config_flag(ab, ablate_args, "--batch", "batch", "batch size");
    config_flag(ab, ablate_args, "--seed", "seed", "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_args, gen_out, gen_csv);
        if (tr->parsed()) return cmd_train(train_args, tr_dataset, tr_out, tr_resume, tr_log);
        if (ev->parsed()) {
            return cmd_eval(eval_args, ev_ckpt, ev_dataset, ev_report, ev_format, ev_ransac,
                            ev_strict, ev_oracle);
        }
        if (pr->parsed()) {
            if (pr_csv.empty() && pr_dataset.empty()) {
                throw ConfigError("prune needs --dataset with --index, or --csv");
            }
            return cmd_prune(pr_ckpt, pr_dataset, pr_index, pr_csv, pr_out);
        }
        if (ab->parsed()) return cmd_ablate(ablate_args, ab_dataset, ab_holdout, ab_out, ab_format);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
