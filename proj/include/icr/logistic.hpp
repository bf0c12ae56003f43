#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "icr/error.hpp"

namespace icr {

struct LogisticOptions {
    /// Per-class weights n / (2 n_class) when true.
    bool balanced = true;
    int max_iter = 1000;
    /// Inverse L2 strength on the weights (the intercept is not penalized); infinity disables it.
    double C = 1.0;
    /// Stop when the max-abs gradient of the mean objective falls below this.
    double tol = 1e-6;
};

struct LogisticModel {
    Eigen::VectorXd weights;
    double intercept = 0.0;
    int iterations = 0;
    bool converged = false;

    template <class Matrix>
    Eigen::VectorXd decision(const Matrix& x) const {
        return (x * weights).array() + intercept;
    }

    template <class Matrix>
    std::vector<double> predict_proba(const Matrix& x) const {
        const Eigen::VectorXd z = decision(x);
        std::vector<double> p(static_cast<std::size_t>(z.size()));
        for (Eigen::Index i = 0; i < z.size(); ++i) p[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-z[i]));
        return p;
    }
};

namespace detail {

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace detail

/// Weighted maximum-likelihood logistic regression fitted by full-batch gradient descent
/// with Armijo backtracking. `Matrix` is any Eigen dense or sparse double matrix (rows are samples).
template <class Matrix>
LogisticModel fit_logistic(const Matrix& x, const std::vector<int>& y, const LogisticOptions& opts = {}) {
    const Eigen::Index n = x.rows(), d = x.cols();
    if (static_cast<Eigen::Index>(y.size()) != n) throw Error("feature rows and labels differ in count");
    double n_pos = 0;
    for (int v : y) n_pos += v == 1;
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n == 0 || n_pos == 0 || n_neg == 0) throw SingleClassTraining();

    Eigen::VectorXd sample_w(n), target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool pos = y[static_cast<std::size_t>(i)] == 1;
        target[i] = pos ? 1.0 : 0.0;
        sample_w[i] = opts.balanced ? static_cast<double>(n) / (2.0 * (pos ? n_pos : n_neg)) : 1.0;
    }
    const double l2 = std::isfinite(opts.C) ? 1.0 / opts.C : 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);

    auto objective = [&](const Eigen::VectorXd& w, double b) {
        const Eigen::VectorXd z = (x * w).array() + b;
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) loss += sample_w[i] * (detail::softplus(z[i]) - target[i] * z[i]);
        return inv_n * (loss + 0.5 * l2 * w.squaredNorm());
    };

    LogisticModel m;
    m.weights = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd w = m.weights;
    double b = 0.0;
    double step = 1.0;
    double f = objective(w, b);
    for (int it = 0; it < opts.max_iter; ++it) {
        const Eigen::VectorXd z = (x * w).array() + b;
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i) r[i] = sample_w[i] * (1.0 / (1.0 + std::exp(-z[i])) - target[i]);
        const Eigen::VectorXd gw = inv_n * (Eigen::VectorXd(x.transpose() * r) + l2 * w);
        const double gb = inv_n * r.sum();
        const double gmax = std::max(gw.size() ? gw.cwiseAbs().maxCoeff() : 0.0, std::abs(gb));
        m.iterations = it;
        if (gmax < opts.tol) {
            m.converged = true;
            break;
        }
        const double gnorm2 = gw.squaredNorm() + gb * gb;
        step *= 2.0;
        while (true) {
            Eigen::VectorXd w_new = w - step * gw;
            const double b_new = b - step * gb;
            const double f_new = objective(w_new, b_new);
            if (f_new <= f - 0.5 * step * gnorm2 || step < 1e-16) {
                w = std::move(w_new);
                b = b_new;
                f = f_new;
                break;
            }
            step *= 0.5;
        }
        m.iterations = it + 1;
    }
    m.weights = w;
    m.intercept = b;
    return m;
}

}  // namespace icr
