#pragma once

// Run configuration: one flat key = value namespace covering the network,
// loss, schedule, training, and data-generation knobs. File values are
// overridden by command-line values; unknown keys are hard errors.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "corrprune/loss.hpp"
#include "corrprune/network.hpp"
#include "corrprune/synthdata.hpp"
#include "corrprune/training.hpp"

namespace corrprune {

struct RunConfig {
    // network
    int d = 128;
    int L = 5;
    int H = 4;
    int po = 2;
    double prune_rate = 0.5;
    int I = 2;
    std::string block_variant = "s-then-c";
    std::string predictor_variant = "prediction-block";
    int ff_ratio = 2;

    // loss and verification
    double beta = 0.5;
    double geo_clamp = 0.5;
    double eps_label = kDefaultEpipolarThreshold;
    double eps_verify = kDefaultEpipolarThreshold;
    double lambda = 10.0;
    int n_virtual = 100;

    // schedule
    double lr = 1e-3;
    std::int64_t warmup = 10000;
    double decay_factor = 0.4;
    std::int64_t decay_interval = 20000;

    // training
    std::int64_t iterations = 2000;
    std::int64_t batch = 32;
    std::uint64_t seed = 1;
    std::int64_t log_every = 50;
    std::int64_t checkpoint_every = 500;

    // synthetic data
    std::int64_t pairs = 100;
    std::int64_t n = 512;
    double outlier_rate = 0.5;
    double noise = 1e-3;
    double max_angle = 30.0;

    // evaluation
    std::int64_t ransac_iters = 2000;

    NetworkConfig network() const {
        NetworkConfig c;
        c.d = d;
        c.L = L;
        c.H = H;
        c.po = po;
        c.prune_rate = prune_rate;
        c.modules = I;
        c.block_variant = block_variant_from_string(block_variant);
        c.predictor_variant = predictor_variant_from_string(predictor_variant);
        c.ff_ratio = ff_ratio;
        return c;
    }

    LossConfig loss() const {
        LossConfig c;
        c.beta = beta;
        c.geo_clamp = geo_clamp;
        c.eps_label = eps_label;
        c.ambiguity = lambda;
        c.n_virtual = n_virtual;
        return c;
    }

    LrSchedule schedule() const {
        LrSchedule s;
        s.base = lr;
        s.warmup = warmup;
        s.decay = decay_factor;
        s.interval = decay_interval;
        return s;
    }

    DatasetSpec dataset() const {
        DatasetSpec s;
        s.num_pairs = static_cast<std::size_t>(pairs);
        s.n = static_cast<std::size_t>(n);
        s.outlier_rate = outlier_rate;
        s.noise_sigma = noise;
        s.max_angle_deg = max_angle;
        s.seed = seed;
        return s;
    }

    TrainOptions train_options() const {
        TrainOptions o;
        o.iterations = iterations;
        o.batch = static_cast<std::size_t>(batch);
        o.seed = seed;
        o.eps_verify = eps_verify;
        o.log_every = log_every;
        o.checkpoint_every = checkpoint_every;
        return o;
    }

    void validate() const {
        network().validate();
        loss().validate();
        schedule().validate();
        if (!(eps_verify > 0.0)) throw ConfigError("eps_verify must be positive");
        if (iterations < 0) throw ConfigError("iterations must be nonnegative");
        if (batch < 1) throw ConfigError("batch must be at least 1");
        if (pairs < 1) throw ConfigError("pairs must be at least 1");
        if (n < 32) throw ConfigError("n must be at least 32");
        if (!(outlier_rate >= 0.0 && outlier_rate < 1.0)) throw ConfigError("outlier_rate must be in [0, 1)");
        if (!(noise >= 0.0)) throw ConfigError("noise must be nonnegative");
        if (!(max_angle > 0.0 && max_angle <= 120.0)) throw ConfigError("max_angle must be in (0, 120]");
        if (ransac_iters < 1) throw ConfigError("ransac_iters must be at least 1");
    }
};

namespace configdetail {

using FieldRef = std::variant<int RunConfig::*, double RunConfig::*, std::int64_t RunConfig::*,
                              std::uint64_t RunConfig::*, std::string RunConfig::*>;

/// Declaration order fixes the echo format.
inline const std::vector<std::pair<std::string, FieldRef>>& fields() {
    static const std::vector<std::pair<std::string, FieldRef>> f = {
        {"d", &RunConfig::d},
        {"L", &RunConfig::L},
        {"H", &RunConfig::H},
        {"po", &RunConfig::po},
        {"prune_rate", &RunConfig::prune_rate},
        {"I", &RunConfig::I},
        {"block_variant", &RunConfig::block_variant},
        {"predictor_variant", &RunConfig::predictor_variant},
        {"ff_ratio", &RunConfig::ff_ratio},
        {"beta", &RunConfig::beta},
        {"geo_clamp", &RunConfig::geo_clamp},
        {"eps_label", &RunConfig::eps_label},
        {"eps_verify", &RunConfig::eps_verify},
        {"lambda", &RunConfig::lambda},
        {"n_virtual", &RunConfig::n_virtual},
        {"lr", &RunConfig::lr},
        {"warmup", &RunConfig::warmup},
        {"decay_factor", &RunConfig::decay_factor},
        {"decay_interval", &RunConfig::decay_interval},
        {"iterations", &RunConfig::iterations},
        {"batch", &RunConfig::batch},
        {"seed", &RunConfig::seed},
        {"log_every", &RunConfig::log_every},
        {"checkpoint_every", &RunConfig::checkpoint_every},
        {"pairs", &RunConfig::pairs},
        {"n", &RunConfig::n},
        {"outlier_rate", &RunConfig::outlier_rate},
        {"noise", &RunConfig::noise},
        {"max_angle", &RunConfig::max_angle},
        {"ransac_iters", &RunConfig::ransac_iters},
    };
    return f;
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline void assign(RunConfig& cfg, const std::string& key, const std::string& value,
                   const std::string& where) {
    for (const auto& [name, ref] : fields()) {
        if (name != key) continue;
        try {
            std::visit(
                [&](auto member) {
                    using T = std::remove_reference_t<decltype(cfg.*member)>;
                    if constexpr (std::is_same_v<T, std::string>) {
                        cfg.*member = value;
                    } else if constexpr (std::is_same_v<T, double>) {
                        std::size_t used = 0;
                        cfg.*member = std::stod(value, &used);
                        if (used != value.size()) throw std::invalid_argument(value);
                    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                        std::size_t used = 0;
                        cfg.*member = std::stoull(value, &used);
                        if (used != value.size()) throw std::invalid_argument(value);
                    } else {
                        std::size_t used = 0;
                        const long long v = std::stoll(value, &used);
                        if (used != value.size()) throw std::invalid_argument(value);
                        cfg.*member = static_cast<T>(v);
                    }
                },
                ref);
        } catch (const std::exception&) {
            throw ConfigError(where + ": bad value '" + value + "' for key '" + key + "'");
        }
        return;
    }
    throw ConfigError(where + ": unknown key '" + key + "'");
}

}  // namespace configdetail

/// Full-precision echo of the resolved configuration; parsing it back yields
/// an identical RunConfig.
inline std::string config_to_text(const RunConfig& cfg) {
    std::ostringstream out;
    char buf[64];
    for (const auto& [name, ref] : configdetail::fields()) {
        std::visit(
            [&](auto member) {
                using T = std::decay_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, std::string>) {
                    out << name << " = " << cfg.*member << '\n';
                } else if constexpr (std::is_same_v<T, double>) {
                    std::snprintf(buf, sizeof(buf), "%.17g", cfg.*member);
                    out << name << " = " << buf << '\n';
                } else {
                    out << name << " = " << cfg.*member << '\n';
                }
            },
            ref);
    }
    return out.str();
}

/// Line-based "key = value" text. '#' starts a comment. Later lines override
/// earlier ones; command-line overrides are applied afterwards by the caller.
inline RunConfig parse_config_text(const std::string& text, const std::string& origin = "config") {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string t = configdetail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        const std::string where = origin + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = configdetail::trim(t.substr(0, eq));
        const std::string value = configdetail::trim(t.substr(eq + 1));
        if (key.empty() || value.empty()) throw ConfigError(where + ": expected 'key = value'");
        configdetail::assign(cfg, key, value, where);
    }
    return cfg;
}

/// File plus "key=value" override strings (e.g. from command-line flags);
/// defaults fill whatever neither mentions. Validates the result.
inline RunConfig parse_config(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = parse_config_text(ss.str(), path);
    }
    for (const auto& [key, value] : overrides) {
        configdetail::assign(cfg, key, value, "command line");
    }
    cfg.validate();
    return cfg;
}

}  // namespace corrprune
