#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "corrprune/errors.hpp"
#include "corrprune/rng.hpp"

namespace corrprune {

/// Named real tensor of rank 1 or 2. Rank-1 tensors are stored as n x 1.
struct Tensor {
    std::vector<std::uint32_t> shape;
    Eigen::MatrixXd value;

    std::size_t rank() const { return shape.size(); }
    std::size_t count() const { return static_cast<std::size_t>(value.size()); }
};

/// Name -> tensor map with deterministic (lexicographic) iteration order.
/// Shapes are fixed at declaration.
class ParamStore {
public:
    Tensor& declare(const std::string& name, std::vector<std::uint32_t> shape) {
        if (items_.count(name)) throw Error("tensor declared twice: " + name);
        if (shape.empty() || shape.size() > 2) throw ShapeMismatchError("tensor rank must be 1 or 2: " + name);
        Tensor t;
        t.shape = shape;
        const auto rows = static_cast<Eigen::Index>(shape[0]);
        const auto cols = static_cast<Eigen::Index>(shape.size() == 2 ? shape[1] : 1);
        t.value = Eigen::MatrixXd::Zero(rows, cols);
        return items_.emplace(name, std::move(t)).first->second;
    }

    bool contains(const std::string& name) const { return items_.count(name) != 0; }

    Tensor& at(const std::string& name) {
        auto it = items_.find(name);
        if (it == items_.end()) throw Error("unknown tensor: " + name);
        return it->second;
    }

    const Tensor& at(const std::string& name) const {
        auto it = items_.find(name);
        if (it == items_.end()) throw Error("unknown tensor: " + name);
        return it->second;
    }

    const std::map<std::string, Tensor>& items() const { return items_; }
    std::map<std::string, Tensor>& items() { return items_; }

    std::size_t tensor_count() const { return items_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [k, t] : items_) n += t.count();
        return n;
    }

private:
    std::map<std::string, Tensor> items_;
};

/// Running statistics (batch-norm) live in their own store so learnable
/// parameters and state never mix.
using StatStore = ParamStore;

/// Per-parameter gradients, shaped like a ParamStore.
class GradStore {
public:
    GradStore() = default;

    static GradStore zeros_like(const ParamStore& ps) {
        GradStore g;
        for (const auto& [name, t] : ps.items()) {
            g.grads_.emplace(name, Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
        }
        return g;
    }

    Eigen::MatrixXd& at(const std::string& name) {
        auto it = grads_.find(name);
        if (it == grads_.end()) throw Error("unknown gradient: " + name);
        return it->second;
    }

    const Eigen::MatrixXd& at(const std::string& name) const {
        auto it = grads_.find(name);
        if (it == grads_.end()) throw Error("unknown gradient: " + name);
        return it->second;
    }

    void add_scaled(const GradStore& other, double scale) {
        for (auto& [name, g] : grads_) g += scale * other.at(name);
    }

    void setZero() {
        for (auto& [name, g] : grads_) g.setZero();
    }

    const std::map<std::string, Eigen::MatrixXd>& items() const { return grads_; }
    std::map<std::string, Eigen::MatrixXd>& items() { return grads_; }

private:
    std::map<std::string, Eigen::MatrixXd> grads_;
};

/// Xavier-uniform initialization: U(+-sqrt(6 / (fan_in + fan_out))).
/// Fill order is row-major so initialization is replayable.
inline void init_xavier(Tensor& t, Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.value.cols(); ++j) {
            t.value(i, j) = rng.uniform(-a, a);
        }
    }
}

}  // namespace corrprune
