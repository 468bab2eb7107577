#pragma once

// Versioned binary checkpoint: the resolved configuration as text, then every
// tensor (parameters, optimizer moments, batch-norm running statistics, and
// the iteration counter) as f32 row-major data. Loading rebuilds the expected
// tensor set from the configuration and verifies names and shapes before any
// state is returned.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "corrprune/config.hpp"
#include "corrprune/pipeline.hpp"
#include "corrprune/synthdata.hpp"
#include "corrprune/training.hpp"

namespace corrprune {

inline constexpr char kCheckpointMagic[] = "CPCK0001";

struct Checkpoint {
    RunConfig config;
    ParamStore params;
    StatStore stats;
    OptimizerState opt;
    std::int64_t iteration = 0;
};

/// Fresh checkpoint for a configuration: seeded parameter initialization,
/// default statistics, zeroed optimizer state.
inline Checkpoint init_checkpoint(const RunConfig& cfg) {
    cfg.validate();
    Checkpoint ckpt;
    ckpt.config = cfg;
    Rng rng(cfg.seed);
    declare_parameters(ckpt.params, ckpt.stats, cfg.network(), rng);
    ckpt.opt = OptimizerState::init(ckpt.params);
    return ckpt;
}

namespace ckptdetail {

inline void put_tensor(std::string& buf, const std::string& name, const Eigen::MatrixXd& value,
                       std::size_t rank) {
    io::put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    io::put_bytes(buf, name.data(), name.size());
    io::put<std::uint8_t>(buf, static_cast<std::uint8_t>(rank));
    io::put<std::uint32_t>(buf, static_cast<std::uint32_t>(value.rows()));
    if (rank == 2) io::put<std::uint32_t>(buf, static_cast<std::uint32_t>(value.cols()));
    for (Eigen::Index i = 0; i < value.rows(); ++i) {
        for (Eigen::Index j = 0; j < value.cols(); ++j) {
            io::put<float>(buf, static_cast<float>(value(i, j)));
        }
    }
}

struct RawTensor {
    std::vector<std::uint32_t> shape;
    Eigen::MatrixXd value;
};

inline std::map<std::string, RawTensor> parse_tensors(io::Reader& r, std::uint32_t count) {
    std::map<std::string, RawTensor> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto name_len = r.get<std::uint32_t>();
        r.need(name_len);
        std::string name(r.buf.data() + r.pos, name_len);
        r.pos += name_len;
        const auto rank = r.get<std::uint8_t>();
        if (rank < 1 || rank > 2) throw IoError("tensor rank must be 1 or 2: " + name);
        RawTensor t;
        t.shape.push_back(r.get<std::uint32_t>());
        if (rank == 2) t.shape.push_back(r.get<std::uint32_t>());
        const auto rows = static_cast<Eigen::Index>(t.shape[0]);
        const auto cols = static_cast<Eigen::Index>(rank == 2 ? t.shape[1] : 1);
        t.value.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                t.value(i, j) = static_cast<double>(r.get<float>());
            }
        }
        if (out.count(name)) throw IoError("duplicate tensor: " + name);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

inline void fill_store(ParamStore& store, const std::string& prefix,
                       std::map<std::string, RawTensor>& raw) {
    for (auto& [name, t] : store.items()) {
        const std::string key = prefix + name;
        auto it = raw.find(key);
        if (it == raw.end()) throw ShapeMismatchError("checkpoint is missing tensor " + key);
        if (it->second.shape != t.shape) {
            throw ShapeMismatchError("tensor " + key + " has mismatched shape");
        }
        t.value = it->second.value;
        raw.erase(it);
    }
}

}  // namespace ckptdetail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string buf;
    io::put_bytes(buf, kCheckpointMagic, 8);
    const std::string cfg_text = config_to_text(ckpt.config);
    io::put<std::uint32_t>(buf, static_cast<std::uint32_t>(cfg_text.size()));
    io::put_bytes(buf, cfg_text.data(), cfg_text.size());

    // one deterministic name -> tensor view over all state
    std::map<std::string, std::pair<const Eigen::MatrixXd*, std::size_t>> all;
    for (const auto& [name, t] : ckpt.params.items()) all["param." + name] = {&t.value, t.rank()};
    for (const auto& [name, t] : ckpt.stats.items()) all["stat." + name] = {&t.value, t.rank()};
    for (const auto& [name, g] : ckpt.opt.m.items()) all["adam.m." + name] = {&g, 2};
    for (const auto& [name, g] : ckpt.opt.v.items()) all["adam.v." + name] = {&g, 2};
    Eigen::MatrixXd step(1, 1);
    step(0, 0) = static_cast<double>(ckpt.iteration);
    Eigen::MatrixXd adam_step_count(1, 1);
    adam_step_count(0, 0) = static_cast<double>(ckpt.opt.step);
    all["trainer.iteration"] = {&step, 1};
    all["trainer.adam_step"] = {&adam_step_count, 1};

    io::put<std::uint32_t>(buf, static_cast<std::uint32_t>(all.size()));
    for (const auto& [name, entry] : all) {
        ckptdetail::put_tensor(buf, name, *entry.first, entry.second);
    }
    return buf;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    io::write_file(path, serialize_checkpoint(ckpt));
}

/// Parse and verify. When `expected` is set, the checkpoint must match that
/// configuration's architecture (shape errors name the offending tensor); the
/// embedded snapshot is used otherwise. The returned state is complete or the
/// call throws; no partial loads.
inline Checkpoint parse_checkpoint(const std::string& buf, const RunConfig* expected = nullptr) {
    io::Reader r{buf};
    io::check_magic(r, kCheckpointMagic);
    const auto cfg_len = r.get<std::uint32_t>();
    r.need(cfg_len);
    const std::string cfg_text(r.buf.data() + r.pos, cfg_len);
    r.pos += cfg_len;

    Checkpoint ckpt;
    ckpt.config = parse_config_text(cfg_text, "checkpoint config");
    if (expected) ckpt.config = *expected;
    ckpt.config.validate();

    const auto tensor_count = r.get<std::uint32_t>();
    auto raw = ckptdetail::parse_tensors(r, tensor_count);
    if (r.pos != buf.size()) throw IoError("trailing bytes after the last tensor");

    Rng rng(ckpt.config.seed);
    declare_parameters(ckpt.params, ckpt.stats, ckpt.config.network(), rng);
    ckpt.opt = OptimizerState::init(ckpt.params);

    ckptdetail::fill_store(ckpt.params, "param.", raw);
    ckptdetail::fill_store(ckpt.stats, "stat.", raw);
    for (auto& [name, g] : ckpt.opt.m.items()) {
        const std::string key = "adam.m." + name;
        auto it = raw.find(key);
        if (it == raw.end()) throw ShapeMismatchError("checkpoint is missing tensor " + key);
        if (it->second.value.rows() != g.rows() || it->second.value.cols() != g.cols()) {
            throw ShapeMismatchError("tensor " + key + " has mismatched shape");
        }
        g = it->second.value;
        raw.erase(it);
    }
    for (auto& [name, g] : ckpt.opt.v.items()) {
        const std::string key = "adam.v." + name;
        auto it = raw.find(key);
        if (it == raw.end()) throw ShapeMismatchError("checkpoint is missing tensor " + key);
        if (it->second.value.rows() != g.rows() || it->second.value.cols() != g.cols()) {
            throw ShapeMismatchError("tensor " + key + " has mismatched shape");
        }
        g = it->second.value;
        raw.erase(it);
    }
    auto iter_it = raw.find("trainer.iteration");
    if (iter_it == raw.end()) throw ShapeMismatchError("checkpoint is missing tensor trainer.iteration");
    ckpt.iteration = static_cast<std::int64_t>(iter_it->second.value(0, 0));
    raw.erase(iter_it);
    auto step_it = raw.find("trainer.adam_step");
    if (step_it == raw.end()) throw ShapeMismatchError("checkpoint is missing tensor trainer.adam_step");
    ckpt.opt.step = static_cast<std::int64_t>(step_it->second.value(0, 0));
    raw.erase(step_it);

    if (!raw.empty()) {
        throw ShapeMismatchError("checkpoint has unexpected tensor " + raw.begin()->first);
    }
    return ckpt;
}

inline Checkpoint load_checkpoint(const std::string& path, const RunConfig* expected = nullptr) {
    return parse_checkpoint(io::read_file(path), expected);
}

}  // namespace corrprune
