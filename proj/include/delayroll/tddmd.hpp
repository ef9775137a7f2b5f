#pragma once

// Time-delayed dynamic mode decomposition: the best-fit linear map from a
// window of n states to the next state, obtained by pseudoinverse least squares.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "delayroll/core_data.hpp"
#include "delayroll/errors.hpp"

namespace delayroll {

/// Moore-Penrose inverse via SVD. Singular values below
/// rel_tol * (largest singular value) are treated as zero.
inline Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& m, double rel_tol = 1e-10) {
    if (m.size() == 0) throw InvalidArgument("pseudoinverse: empty matrix");
    if (!(rel_tol >= 0.0)) throw InvalidArgument("pseudoinverse: rel_tol must be non-negative");
    if (!m.allFinite()) throw NumericalError("pseudoinverse: matrix has non-finite entries");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw NumericalError("pseudoinverse: SVD did not converge");
    const Eigen::VectorXd& s = svd.singularValues();
    const double cutoff = s.size() > 0 ? rel_tol * s[0] : 0.0;
    Eigen::VectorXd s_inv(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) s_inv[i] = (s[i] > cutoff && s[i] > 0.0) ? 1.0 / s[i] : 0.0;
    return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

/// Last block row [A_0 ... A_{n-1}] of the delay-augmented operator.
/// The shift rows above it are implicit.
struct TDDMDModel {
    Eigen::MatrixXd a_hat;  ///< d x (n d)
    std::size_t n = 0;
    Eigen::Index d = 0;
    double rel_tol = 1e-10;

    /// Coefficient block acting on window entry k.
    Eigen::MatrixXd block(std::size_t k) const {
        return a_hat.middleCols(static_cast<Eigen::Index>(k) * d, d);
    }
};

namespace detail {

inline void check_bursts(const BurstDataset& data, const char* who) {
    if (data.bursts.empty()) throw InvalidArgument(std::string(who) + ": empty burst dataset");
    if (data.n < 1 || data.d < 1) throw InvalidArgument(std::string(who) + ": invalid burst shape");
    for (const auto& b : data.bursts) {
        if (b.size() != data.n + 1) throw InvalidArgument(std::string(who) + ": burst length is not n+1");
        for (const auto& s : b) {
            if (s.size() != data.d) throw InvalidArgument(std::string(who) + ": state dimension mismatch");
        }
    }
}

inline void check_window(std::span<const State> window, std::size_t n, Eigen::Index d, const char* who) {
    if (window.size() != n) {
        throw InvalidArgument(std::string(who) + ": window has " + std::to_string(window.size()) +
                              " states, expected " + std::to_string(n));
    }
    for (const auto& s : window) {
        if (s.size() != d) throw InvalidArgument(std::string(who) + ": window state dimension mismatch");
    }
}

} // namespace detail

/// Fits A_TD = Y X^+ on the augmented window matrices
///   X = [w_{0:n-1}^1 ... w_{0:n-1}^J],  Y = [w_{1:n}^1 ... w_{1:n}^J]
/// and keeps the last d rows.
inline TDDMDModel fit_tddmd(const BurstDataset& data, double rel_tol = 1e-10) {
    detail::check_bursts(data, "fit_tddmd");
    const auto n = static_cast<Eigen::Index>(data.n);
    const Eigen::Index d = data.d;
    const auto J = static_cast<Eigen::Index>(data.size());

    Eigen::MatrixXd X(n * d, J), Y(n * d, J);
    for (Eigen::Index j = 0; j < J; ++j) {
        const auto& burst = data.bursts[static_cast<std::size_t>(j)];
        for (Eigen::Index k = 0; k < n; ++k) {
            X.block(k * d, j, d, 1) = burst[static_cast<std::size_t>(k)];
            Y.block(k * d, j, d, 1) = burst[static_cast<std::size_t>(k + 1)];
        }
    }
    const Eigen::MatrixXd a_td = Y * pseudoinverse(X, rel_tol);
    return {a_td.bottomRows(d), data.n, d, rel_tol};
}

/// Plain DMD: A = Y X^+ over every within-burst transition (n J columns).
inline Eigen::MatrixXd fit_dmd(const BurstDataset& data, double rel_tol = 1e-10) {
    detail::check_bursts(data, "fit_dmd");
    const Eigen::Index d = data.d;
    const auto cols = static_cast<Eigen::Index>(data.size() * data.n);
    Eigen::MatrixXd X(d, cols), Y(d, cols);
    Eigen::Index c = 0;
    for (const auto& burst : data.bursts) {
        for (std::size_t k = 0; k < data.n; ++k, ++c) {
            X.col(c) = burst[k];
            Y.col(c) = burst[k + 1];
        }
    }
    return Y * pseudoinverse(X, rel_tol);
}

/// Full nd x nd companion operator: identity shift blocks above a_hat.
inline Eigen::MatrixXd companion_matrix(const TDDMDModel& model) {
    const auto nd = static_cast<Eigen::Index>(model.n) * model.d;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nd, nd);
    if (model.n > 1) a.topRightCorner(nd - model.d, nd - model.d).setIdentity();
    a.bottomRows(model.d) = model.a_hat;
    return a;
}

inline State predict_next(const TDDMDModel& model, std::span<const State> window) {
    detail::check_window(window, model.n, model.d, "predict_next");
    State out = State::Zero(model.d);
    for (std::size_t k = 0; k < model.n; ++k) out.noalias() += model.block(k) * window[k];
    return out;
}

/// The initial window followed by `steps` predictions, each fed back into
/// the sliding window.
inline Trajectory rollout_tddmd(const TDDMDModel& model, std::span<const State> initial_window, std::size_t steps,
                                double dt = 1.0, double t0 = 0.0) {
    detail::check_window(initial_window, model.n, model.d, "rollout_tddmd");
    std::vector<State> states(initial_window.begin(), initial_window.end());
    states.reserve(model.n + steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::span<const State> window(states.data() + states.size() - model.n, model.n);
        State next = predict_next(model, window);
        if (!next.allFinite()) throw DivergedError("tddmd rollout", s + 1, "non-finite prediction");
        states.push_back(std::move(next));
    }
    return Trajectory(std::move(states), dt, t0);
}

/// Rollout of a model fit on normalized data, from a window in native units.
inline Trajectory rollout_tddmd(const TDDMDModel& model, const Normalizer& norm,
                                std::span<const State> initial_window, std::size_t steps, double dt = 1.0,
                                double t0 = 0.0) {
    std::vector<State> window;
    window.reserve(initial_window.size());
    for (const auto& s : initial_window) window.push_back(normalize(norm, s));
    return denormalize(norm, rollout_tddmd(model, window, steps, dt, t0));
}

} // namespace delayroll
