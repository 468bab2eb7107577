#pragma once

// Differentiable building blocks. Every layer caches what its backward pass
// needs during forward; backward accumulates parameter gradients into a
// GradStore and returns the input gradient.

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "corrprune/tensor.hpp"

namespace corrprune {

inline constexpr double kNormEps = 1e-5;

struct Linear {
    std::string wn, bn;
    Eigen::MatrixXd x;  // saved input

    Linear() = default;
    Linear(std::string prefix) : wn(prefix + ".w"), bn(prefix + ".b") {}

    static void declare(ParamStore& ps, Rng& rng, const std::string& prefix, std::size_t out,
                        std::size_t in) {
        Tensor& w = ps.declare(prefix + ".w", {static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in)});
        init_xavier(w, rng, in, out);
        ps.declare(prefix + ".b", {static_cast<std::uint32_t>(out)});
    }

    Eigen::MatrixXd forward(const ParamStore& ps, const Eigen::MatrixXd& X) {
        const Tensor& w = ps.at(wn);
        const Tensor& b = ps.at(bn);
        if (X.cols() != w.value.cols()) {
            throw ShapeMismatchError("linear " + wn + ": input has " + std::to_string(X.cols()) +
                                     " channels, weight expects " + std::to_string(w.value.cols()));
        }
        x = X;
        Eigen::MatrixXd y = X * w.value.transpose();
        y.rowwise() += b.value.col(0).transpose();
        return y;
    }

    Eigen::MatrixXd backward(const ParamStore& ps, GradStore& gs, const Eigen::MatrixXd& dY) const {
        const Tensor& w = ps.at(wn);
        gs.at(wn).noalias() += dY.transpose() * x;
        gs.at(bn).col(0).noalias() += dY.colwise().sum().transpose();
        return dY * w.value;
    }
};

/// Per-row layer normalization over channels with learned scale and shift.
struct LayerNorm {
    std::string gn, bn;
    Eigen::MatrixXd xhat;
    Eigen::VectorXd inv_std;  // per row

    LayerNorm() = default;
    LayerNorm(std::string prefix) : gn(prefix + ".g"), bn(prefix + ".b") {}

    static void declare(ParamStore& ps, const std::string& prefix, std::size_t d) {
        Tensor& g = ps.declare(prefix + ".g", {static_cast<std::uint32_t>(d)});
        g.value.setOnes();
        ps.declare(prefix + ".b", {static_cast<std::uint32_t>(d)});
    }

    Eigen::MatrixXd forward(const ParamStore& ps, const Eigen::MatrixXd& X) {
        const Eigen::VectorXd mean = X.rowwise().mean();
        Eigen::MatrixXd centered = X.colwise() - mean;
        const Eigen::VectorXd var = centered.array().square().rowwise().mean();
        inv_std = (var.array() + kNormEps).rsqrt();
        xhat = centered.array().colwise() * inv_std.array();
        Eigen::MatrixXd y = xhat.array().rowwise() * ps.at(gn).value.col(0).transpose().array();
        y.rowwise() += ps.at(bn).value.col(0).transpose();
        return y;
    }

    Eigen::MatrixXd backward(const ParamStore& ps, GradStore& gs, const Eigen::MatrixXd& dY) const {
        const double d = static_cast<double>(dY.cols());
        gs.at(gn).col(0).noalias() += (dY.array() * xhat.array()).colwise().sum().matrix().transpose();
        gs.at(bn).col(0).noalias() += dY.colwise().sum().transpose();
        const Eigen::MatrixXd dxhat = dY.array().rowwise() * ps.at(gn).value.col(0).transpose().array();
        const Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
        const Eigen::VectorXd sum_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum();
        Eigen::MatrixXd dx = d * dxhat;
        dx.colwise() -= sum_dxhat;
        dx -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
        dx.array().colwise() *= (inv_std.array() / d);
        return dx;
    }
};

/// Per-channel normalization across the rows of one instance; no affine part.
struct InstanceNorm {
    Eigen::MatrixXd xhat;
    Eigen::RowVectorXd inv_std;  // per channel

    Eigen::MatrixXd forward(const Eigen::MatrixXd& X) {
        const Eigen::RowVectorXd mean = X.colwise().mean();
        Eigen::MatrixXd centered = X.rowwise() - mean;
        const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
        inv_std = (var.array() + kNormEps).rsqrt();
        xhat = centered.array().rowwise() * inv_std.array();
        return xhat;
    }

    Eigen::MatrixXd backward(const Eigen::MatrixXd& dY) const {
        const double n = static_cast<double>(dY.rows());
        const Eigen::RowVectorXd sum_dy = dY.colwise().sum();
        const Eigen::RowVectorXd sum_dy_xhat = (dY.array() * xhat.array()).colwise().sum();
        Eigen::MatrixXd dx = n * dY;
        dx.rowwise() -= sum_dy;
        dx -= (xhat.array().rowwise() * sum_dy_xhat.array()).matrix();
        dx.array().rowwise() *= (inv_std.array() / n);
        return dx;
    }
};

/// Batch normalization over rows per channel. Training mode normalizes with
/// batch statistics and records them; inference uses frozen running averages.
struct BatchNorm {
    std::string gn, bn, rmn, rvn;
    Eigen::MatrixXd xhat;
    Eigen::RowVectorXd inv_std;
    Eigen::RowVectorXd batch_mean, batch_var_unbiased;  // recorded for stat updates
    bool ran_training = false;

    BatchNorm() = default;
    BatchNorm(std::string prefix)
        : gn(prefix + ".g"), bn(prefix + ".b"), rmn(prefix + ".rm"), rvn(prefix + ".rv") {}

    static void declare(ParamStore& ps, StatStore& stats, const std::string& prefix, std::size_t d) {
        Tensor& g = ps.declare(prefix + ".g", {static_cast<std::uint32_t>(d)});
        g.value.setOnes();
        ps.declare(prefix + ".b", {static_cast<std::uint32_t>(d)});
        stats.declare(prefix + ".rm", {static_cast<std::uint32_t>(d)});
        Tensor& rv = stats.declare(prefix + ".rv", {static_cast<std::uint32_t>(d)});
        rv.value.setOnes();
    }

    Eigen::MatrixXd forward(const ParamStore& ps, const StatStore& stats, const Eigen::MatrixXd& X,
                            bool training) {
        ran_training = training;
        if (training) {
            const double n = static_cast<double>(X.rows());
            batch_mean = X.colwise().mean();
            Eigen::MatrixXd centered = X.rowwise() - batch_mean;
            const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
            batch_var_unbiased = n > 1.0 ? Eigen::RowVectorXd(var * n / (n - 1.0)) : var;
            inv_std = (var.array() + kNormEps).rsqrt();
            xhat = centered.array().rowwise() * inv_std.array();
        } else {
            const Eigen::RowVectorXd rm = stats.at(rmn).value.col(0).transpose();
            const Eigen::RowVectorXd rv = stats.at(rvn).value.col(0).transpose();
            inv_std = (rv.array() + kNormEps).rsqrt();
            xhat = (X.rowwise() - rm).array().rowwise() * inv_std.array();
        }
        Eigen::MatrixXd y = xhat.array().rowwise() * ps.at(gn).value.col(0).transpose().array();
        y.rowwise() += ps.at(bn).value.col(0).transpose();
        return y;
    }

    Eigen::MatrixXd backward(const ParamStore& ps, GradStore& gs, const Eigen::MatrixXd& dY) const {
        gs.at(gn).col(0).noalias() += (dY.array() * xhat.array()).colwise().sum().matrix().transpose();
        gs.at(bn).col(0).noalias() += dY.colwise().sum().transpose();
        const Eigen::MatrixXd dxhat = dY.array().rowwise() * ps.at(gn).value.col(0).transpose().array();
        if (!ran_training) {
            return (dxhat.array().rowwise() * inv_std.array()).matrix();
        }
        const double n = static_cast<double>(dY.rows());
        const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().sum();
        Eigen::MatrixXd dx = n * dxhat;
        dx.rowwise() -= sum_dxhat;
        dx -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
        dx.array().rowwise() *= (inv_std.array() / n);
        return dx;
    }
};

struct Relu {
    Eigen::MatrixXd x;

    Eigen::MatrixXd forward(const Eigen::MatrixXd& X) {
        x = X;
        return X.cwiseMax(0.0);
    }

    Eigen::MatrixXd backward(const Eigen::MatrixXd& dY) const {
        return (x.array() > 0.0).select(dY, 0.0);
    }
};

inline double gelu_scalar(double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); }

inline double gelu_grad_scalar(double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
    return cdf + v * pdf;
}

struct Gelu {
    Eigen::MatrixXd x;

    Eigen::MatrixXd forward(const Eigen::MatrixXd& X) {
        x = X;
        return X.unaryExpr([](double v) { return gelu_scalar(v); });
    }

    Eigen::MatrixXd backward(const Eigen::MatrixXd& dY) const {
        return dY.cwiseProduct(x.unaryExpr([](double v) { return gelu_grad_scalar(v); }));
    }
};

/// In-place row softmax. Materialized steps keep exp() on Eigen's packet path
/// and avoid large temporaries in the attention hot loop.
inline void softmax_rows_inplace(Eigen::MatrixXd& a) {
    a.colwise() -= a.rowwise().maxCoeff().eval();
    a = a.array().exp();
    a.array().colwise() /= a.rowwise().sum().array().eval();
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& S) {
    Eigen::MatrixXd a = S;
    softmax_rows_inplace(a);
    return a;
}

/// Turns dA into dS in place given the softmax output A.
inline void softmax_rows_backward_inplace(const Eigen::MatrixXd& A, Eigen::MatrixXd& dA) {
    const Eigen::VectorXd dot = (A.array() * dA.array()).rowwise().sum();
    dA = A.array() * (dA.colwise() - dot).array();
}

inline Eigen::MatrixXd softmax_rows_backward(const Eigen::MatrixXd& A, const Eigen::MatrixXd& dA) {
    Eigen::MatrixXd d = dA;
    softmax_rows_backward_inplace(A, d);
    return d;
}

}  // namespace corrprune
