#pragma once

// Test-only reference implementations. These follow the model definition
// with plain loops and share no code path with the library's forward and
// backward passes.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "delayroll/tdtf.hpp"

namespace delayroll::oracle {

inline double act(Activation a, double x) {
    switch (a) {
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return std::max(0.0, x);
        case Activation::gelu: return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    }
    return x;
}

/// Straight transcription of the time-delayed transformer, one scalar at a time.
inline std::vector<double> forward(const TDTFConfig& cfg, const TDTFParams& p, const std::vector<State>& window) {
    const std::size_t n = cfg.n;
    const auto d = static_cast<std::size_t>(cfg.d);
    const auto di = static_cast<std::size_t>(cfg.d_in());
    const auto h = static_cast<std::size_t>(cfg.h);

    std::vector<std::vector<double>> z(n, std::vector<double>(di, 0.0));
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> y(di, 0.0);
        for (std::size_t i = 0; i < d; ++i) y[i] = window[k][static_cast<Eigen::Index>(i)];
        if (cfg.pos_enc) y[d] = static_cast<double>(k) / static_cast<double>(n);
        std::vector<double> hid(h, 0.0);
        for (std::size_t r = 0; r < h; ++r) {
            double a = p.b[static_cast<Eigen::Index>(r)];
            for (std::size_t c = 0; c < di; ++c) a += p.U(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * y[c];
            hid[r] = act(cfg.activation, a);
        }
        for (std::size_t r = 0; r < di; ++r) {
            for (std::size_t c = 0; c < h; ++c) z[k][r] += p.W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * hid[c];
        }
    }
    std::vector<double> s(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t r = 0; r < di; ++r) {
            for (std::size_t c = 0; c < di; ++c) {
                s[k] += z[n - 1][r] * p.B(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * z[k][c];
            }
        }
    }
    const double smax = *std::max_element(s.begin(), s.end());
    double denom = 0.0;
    for (double v : s) denom += std::exp(v - smax);
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = window[n - 1][static_cast<Eigen::Index>(i)];
    for (std::size_t k = 0; k < n; ++k) {
        const double alpha = std::exp(s[k] - smax) / denom;
        for (std::size_t i = 0; i < d; ++i) {
            double vz = 0.0;
            for (std::size_t c = 0; c < di; ++c) vz += p.V(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) * z[k][c];
            out[i] += alpha * vz;
        }
    }
    return out;
}

inline double loss(const TDTFConfig& cfg, const TDTFParams& p, const std::vector<std::vector<State>>& batch) {
    double total = 0.0;
    for (const auto& burst : batch) {
        const std::vector<State> window(burst.begin(), burst.end() - 1);
        const auto o = forward(cfg, p, window);
        for (std::size_t i = 0; i < o.size(); ++i) {
            const double r = o[i] - burst.back()[static_cast<Eigen::Index>(i)];
            total += r * r;
        }
    }
    return total / static_cast<double>(batch.size());
}

/// Central finite differences of the reference loss with respect to every
/// parameter, in the flattened U, b, W, B, V order.
inline Eigen::VectorXd finite_difference_gradient(const TDTFConfig& cfg, const TDTFParams& p,
                                                  const std::vector<std::vector<State>>& batch, double step = 1e-5) {
    const Eigen::VectorXd theta = p.flatten();
    Eigen::VectorXd g(theta.size());
    TDTFParams q = p;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd t = theta;
        t[i] = theta[i] + step;
        q.assign_flat(t);
        const double up = loss(cfg, q, batch);
        t[i] = theta[i] - step;
        q.assign_flat(t);
        const double down = loss(cfg, q, batch);
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// Largest elementwise |analytic - fd| / max(|analytic|, 1e-8).
inline double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double denom = std::max(std::abs(analytic[i]), 1e-8);
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

inline std::vector<std::vector<State>> random_batch(std::mt19937_64& rng, std::size_t count, std::size_t n,
                                                    Eigen::Index d) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<State>> batch(count);
    for (auto& burst : batch) {
        for (std::size_t k = 0; k <= n; ++k) {
            State s(d);
            for (Eigen::Index i = 0; i < d; ++i) s[i] = u(rng);
            burst.push_back(s);
        }
    }
    return batch;
}

inline TDTFParams random_params(std::mt19937_64& rng, const TDTFConfig& cfg, double scale = 0.7) {
    std::normal_distribution<double> nd(0.0, scale);
    TDTFParams p = TDTFParams::zeros(cfg);
    Eigen::VectorXd flat(static_cast<Eigen::Index>(p.scalar_count()));
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = nd(rng);
    p.assign_flat(flat);
    return p;
}

} // namespace delayroll::oracle
