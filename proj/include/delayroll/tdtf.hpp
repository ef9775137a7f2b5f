#pragma once

// Time-delayed transformer.
//
// For a window w_0..w_{n-1} the model computes
//
//   y_k = [w_k; k/n]                 (or w_k without positional encoding)
//   z_k = W sigma(U y_k + b)         (feedforward shared across the window)
//   s_k = <z_{n-1}, B z_k>           (single query: the last window entry)
//   a   = softmax(s)
//   o   = w_{n-1} + sum_k a_k V z_k  (residual increment)
//
// and is trained on mean squared one-step error with AdamW. Gradients are
// derived by hand; see `gradients`.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "delayroll/core_data.hpp"
#include "delayroll/errors.hpp"

namespace delayroll {

enum class Activation { tanh, relu, gelu };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::gelu: return "gelu";
    }
    return "tanh";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "gelu") return Activation::gelu;
    throw InvalidArgument("unknown activation '" + s + "' (expected tanh, relu or gelu)");
}

struct TDTFConfig {
    std::size_t n = 1;
    Eigen::Index d = 1;
    Eigen::Index h = 10;
    bool pos_enc = true;
    Activation activation = Activation::tanh;
    std::uint64_t seed = 0;

    Eigen::Index d_in() const noexcept { return pos_enc ? d + 1 : d; }

    void validate() const {
        if (n < 1) throw InvalidArgument("tdtf: n must be >= 1");
        if (d < 1) throw InvalidArgument("tdtf: d must be >= 1");
        if (h < 1) throw InvalidArgument("tdtf: h must be >= 1");
    }
};

/// Learnable arrays. Gradients and optimizer moments reuse this layout.
struct TDTFParams {
    Eigen::MatrixXd U;  ///< h x d_in
    Eigen::VectorXd b;  ///< h
    Eigen::MatrixXd W;  ///< d_in x h
    Eigen::MatrixXd B;  ///< d_in x d_in, query-key
    Eigen::MatrixXd V;  ///< d x d_in, value

    static TDTFParams zeros(const TDTFConfig& cfg) {
        const auto di = cfg.d_in();
        return {Eigen::MatrixXd::Zero(cfg.h, di), Eigen::VectorXd::Zero(cfg.h), Eigen::MatrixXd::Zero(di, cfg.h),
                Eigen::MatrixXd::Zero(di, di), Eigen::MatrixXd::Zero(cfg.d, di)};
    }

    std::size_t scalar_count() const {
        return static_cast<std::size_t>(U.size() + b.size() + W.size() + B.size() + V.size());
    }

    bool all_finite() const {
        return U.allFinite() && b.allFinite() && W.allFinite() && B.allFinite() && V.allFinite();
    }

    bool same_shape(const TDTFParams& o) const {
        return U.rows() == o.U.rows() && U.cols() == o.U.cols() && b.size() == o.b.size() &&
               W.rows() == o.W.rows() && W.cols() == o.W.cols() && B.rows() == o.B.rows() &&
               B.cols() == o.B.cols() && V.rows() == o.V.rows() && V.cols() == o.V.cols();
    }

    /// Concatenation U, b, W, B, V (each column-major).
    Eigen::VectorXd flatten() const {
        Eigen::VectorXd out(static_cast<Eigen::Index>(scalar_count()));
        Eigen::Index off = 0;
        const auto put = [&](const auto& m) {
            out.segment(off, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
            off += m.size();
        };
        put(U);
        put(b);
        put(W);
        put(B);
        put(V);
        return out;
    }

    void assign_flat(const Eigen::VectorXd& flat) {
        if (flat.size() != static_cast<Eigen::Index>(scalar_count())) {
            throw InvalidArgument("TDTFParams: flat vector has wrong length");
        }
        Eigen::Index off = 0;
        const auto get = [&](auto& m) {
            Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = flat.segment(off, m.size());
            off += m.size();
        };
        get(U);
        get(b);
        get(W);
        get(B);
        get(V);
    }
};

/// Learnable scalar count, h d_in + h + d_in h + d_in^2 + d d_in. Independent of n.
inline std::size_t parameter_count(const TDTFConfig& cfg) {
    const auto h = static_cast<std::size_t>(cfg.h);
    const auto di = static_cast<std::size_t>(cfg.d_in());
    const auto d = static_cast<std::size_t>(cfg.d);
    return h * di + h + di * h + di * di + d * di;
}

inline void check_params(const TDTFConfig& cfg, const TDTFParams& p) {
    const auto di = cfg.d_in();
    if (p.U.rows() != cfg.h || p.U.cols() != di || p.b.size() != cfg.h || p.W.rows() != di ||
        p.W.cols() != cfg.h || p.B.rows() != di || p.B.cols() != di || p.V.rows() != cfg.d || p.V.cols() != di) {
        throw InvalidArgument("tdtf: parameter shapes do not match the configuration");
    }
}

/// Uniform(-s, s) with s = 1/sqrt(fan_in) for every matrix, zero bias.
inline TDTFParams init_params(const TDTFConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const auto fill = [&rng](Eigen::MatrixXd& m) {
        const double s = 1.0 / std::sqrt(static_cast<double>(m.cols()));
        std::uniform_real_distribution<double> dist(-s, s);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
        }
    };
    TDTFParams p = TDTFParams::zeros(cfg);
    fill(p.U);
    fill(p.W);
    fill(p.B);
    fill(p.V);
    return p;
}

// ---------------------------------------------------------------------------
// Layers

inline Eigen::VectorXd positional_encode(const State& w, std::size_t k, std::size_t n) {
    if (n == 0 || k >= n) {
        throw InvalidArgument("positional_encode: index " + std::to_string(k) + " outside [0, " +
                              std::to_string(n) + ")");
    }
    Eigen::VectorXd y(w.size() + 1);
    y.head(w.size()) = w;
    y[w.size()] = static_cast<double>(k) / static_cast<double>(n);
    return y;
}

inline double activate(Activation act, double x) {
    switch (act) {
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::gelu: return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    }
    return x;
}

inline double activate_derivative(Activation act, double x) {
    switch (act) {
        case Activation::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::gelu: {
            const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
            const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
            return cdf + x * pdf;
        }
    }
    return 1.0;
}

/// W sigma(U y + b).
inline Eigen::VectorXd feedforward(const Eigen::VectorXd& y, const TDTFParams& p, Activation act) {
    if (y.size() != p.U.cols() || p.b.size() != p.U.rows() || p.W.cols() != p.U.rows()) {
        throw InvalidArgument("feedforward: shape mismatch");
    }
    Eigen::VectorXd hidden = p.U * y + p.b;
    for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden[i] = activate(act, hidden[i]);
    return p.W * hidden;
}

/// Max-shifted softmax.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& scores) {
    if (!scores.allFinite()) throw NumericalError("softmax: non-finite attention score");
    Eigen::VectorXd e = (scores.array() - scores.maxCoeff()).exp();
    return e / e.sum();
}

/// Single-query attention weights: softmax_k <z_{n-1}, B z_k>.
inline Eigen::VectorXd attention_weights(std::span<const Eigen::VectorXd> z, const Eigen::MatrixXd& B) {
    if (z.empty()) throw InvalidArgument("attention: need at least one key");
    const auto di = z.back().size();
    if (B.rows() != di || B.cols() != di) throw InvalidArgument("attention: query-key matrix shape mismatch");
    const Eigen::VectorXd bt_q = B.transpose() * z.back();
    Eigen::VectorXd s(static_cast<Eigen::Index>(z.size()));
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (z[k].size() != di) throw InvalidArgument("attention: key dimension mismatch");
        s[static_cast<Eigen::Index>(k)] = bt_q.dot(z[k]);
    }
    return softmax(s);
}

inline Eigen::VectorXd attention(std::span<const Eigen::VectorXd> z, const Eigen::MatrixXd& B,
                                 const Eigen::MatrixXd& V) {
    const Eigen::VectorXd a = attention_weights(z, B);
    if (V.cols() != z.back().size()) throw InvalidArgument("attention: value matrix shape mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(V.rows());
    for (std::size_t k = 0; k < z.size(); ++k) out.noalias() += a[static_cast<Eigen::Index>(k)] * (V * z[k]);
    return out;
}

/// Per-call work counters, used to check the O(n) cost of a prediction.
struct EvalCounters {
    std::size_t feedforward = 0;
    std::size_t scores = 0;
};

namespace detail {

inline void check_window_shape(const TDTFConfig& cfg, std::span<const State> window) {
    if (window.size() != cfg.n) {
        throw InvalidArgument("tdtf: window has " + std::to_string(window.size()) + " states, expected " +
                              std::to_string(cfg.n));
    }
    for (const auto& s : window) {
        if (s.size() != cfg.d) throw InvalidArgument("tdtf: window state dimension mismatch");
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
struct ForwardCache {
    Eigen::MatrixXd Y;      ///< d_in x n encoded inputs
    Eigen::MatrixXd A;      ///< h x n pre-activations
    Eigen::MatrixXd G;      ///< h x n activations
    Eigen::MatrixXd Z;      ///< d_in x n feedforward outputs
    Eigen::VectorXd bt_q;   ///< B^T z_{n-1}
    Eigen::VectorXd alpha;  ///< n attention weights
    Eigen::VectorXd c;      ///< sum_k alpha_k z_k
    State out;              ///< prediction
};

inline ForwardCache forward_cached(const TDTFConfig& cfg, const TDTFParams& p, std::span<const State> window,
                                   EvalCounters* counters = nullptr) {
    const auto n = static_cast<Eigen::Index>(cfg.n);
    const Eigen::Index d = cfg.d;
    ForwardCache fc;
    fc.Y.resize(cfg.d_in(), n);
    for (Eigen::Index k = 0; k < n; ++k) {
        fc.Y.col(k).head(d) = window[static_cast<std::size_t>(k)];
        if (cfg.pos_enc) fc.Y(d, k) = static_cast<double>(k) / static_cast<double>(n);
    }
    fc.A = (p.U * fc.Y).colwise() + p.b;
    fc.G = fc.A.unaryExpr([act = cfg.activation](double x) { return activate(act, x); });
    fc.Z.noalias() = p.W * fc.G;
    if (counters) counters->feedforward += static_cast<std::size_t>(n);

    fc.bt_q.noalias() = p.B.transpose() * fc.Z.col(n - 1);
    const Eigen::VectorXd scores = fc.Z.transpose() * fc.bt_q;
    if (counters) counters->scores += static_cast<std::size_t>(n);
    fc.alpha = softmax(scores);
    fc.c.noalias() = fc.Z * fc.alpha;
    fc.out = window.back() + p.V * fc.c;
    return fc;
}

} // namespace detail

/// One-step prediction w_{n-1} + att(ff(y_0), ..., ff(y_{n-1})).
inline State forward(const TDTFConfig& cfg, const TDTFParams& params, std::span<const State> window,
                     EvalCounters* counters = nullptr) {
    detail::check_window_shape(cfg, window);
    check_params(cfg, params);
    return detail::forward_cached(cfg, params, window, counters).out;
}

using BurstBatch = std::span<const std::vector<State>>;

namespace detail {

inline void check_batch(const TDTFConfig& cfg, BurstBatch batch) {
    if (batch.empty()) throw InvalidArgument("tdtf: empty batch");
    for (const auto& burst : batch) {
        if (burst.size() != cfg.n + 1) {
            throw InvalidArgument("tdtf: burst has " + std::to_string(burst.size()) + " states, expected n+1 = " +
                                  std::to_string(cfg.n + 1));
        }
        for (const auto& s : burst) {
            if (s.size() != cfg.d) throw InvalidArgument("tdtf: burst state dimension mismatch");
        }
    }
}

inline std::span<const State> window_of(const std::vector<State>& burst) {
    return {burst.data(), burst.size() - 1};
}

} // namespace detail

/// Mean over the batch of |w_n - forward(w_0..w_{n-1})|^2.
inline double loss(const TDTFConfig& cfg, const TDTFParams& params, BurstBatch batch) {
    detail::check_batch(cfg, batch);
    check_params(cfg, params);
    double total = 0.0;
    for (const auto& burst : batch) {
        total += (detail::forward_cached(cfg, params, detail::window_of(burst)).out - burst.back()).squaredNorm();
    }
    return total / static_cast<double>(batch.size());
}

/// Reverse-mode gradient of `loss`. Contributions are accumulated in burst
/// order. If `loss_out` is given it receives the batch loss.
inline TDTFParams gradients(const TDTFConfig& cfg, const TDTFParams& p, BurstBatch batch,
                            double* loss_out = nullptr) {
    detail::check_batch(cfg, batch);
    check_params(cfg, p);
    const auto n = static_cast<Eigen::Index>(cfg.n);
    const double scale = 1.0 / static_cast<double>(batch.size());
    TDTFParams g = TDTFParams::zeros(cfg);
    double total = 0.0;

    for (const auto& burst : batch) {
        const auto fc = detail::forward_cached(cfg, p, detail::window_of(burst));
        const State r = fc.out - burst.back();
        total += r.squaredNorm();

        const Eigen::VectorXd g_out = 2.0 * scale * r;
        g.V.noalias() += g_out * fc.c.transpose();
        const Eigen::VectorXd g_c = p.V.transpose() * g_out;

        // softmax Jacobian: ds_k = a_k (da_k - sum_r a_r da_r)
        const Eigen::VectorXd g_alpha = fc.Z.transpose() * g_c;
        const Eigen::VectorXd g_s = (fc.alpha.array() * (g_alpha.array() - fc.alpha.dot(g_alpha))).matrix();

        // value path, then the key path of s_k = q^T B z_k
        Eigen::MatrixXd g_Z = g_c * fc.alpha.transpose();
        g_Z.noalias() += fc.bt_q * g_s.transpose();
        const Eigen::VectorXd z_gs = fc.Z * g_s;
        const auto q = fc.Z.col(n - 1);
        g.B.noalias() += q * z_gs.transpose();
        // query path: z_{n-1} is also the query
        g_Z.col(n - 1).noalias() += p.B * z_gs;

        g.W.noalias() += g_Z * fc.G.transpose();
        Eigen::MatrixXd g_A = p.W.transpose() * g_Z;
        for (Eigen::Index j = 0; j < g_A.cols(); ++j) {
            for (Eigen::Index i = 0; i < g_A.rows(); ++i) {
                g_A(i, j) *= activate_derivative(cfg.activation, fc.A(i, j));
            }
        }
        g.U.noalias() += g_A * fc.Y.transpose();
        g.b += g_A.rowwise().sum();
    }
    if (!g.all_finite()) throw NumericalError("gradients: non-finite gradient");
    if (loss_out) *loss_out = total * scale;
    return g;
}

// ---------------------------------------------------------------------------
// Optimizer and training

struct TrainConfig {
    double lr = 1e-2;
    std::size_t batch_size = 100;
    std::size_t epochs = 500;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lr > 0.0)) throw InvalidArgument("train: lr must be positive");
        if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
        if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
        if (!(weight_decay >= 0.0)) throw InvalidArgument("train: weight_decay must be non-negative");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
            throw InvalidArgument("train: beta1 and beta2 must lie in (0, 1)");
        }
        if (!(eps_adam > 0.0)) throw InvalidArgument("train: eps_adam must be positive");
    }
};

struct AdamWState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
};

/// Decoupled weight decay Adam:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
inline void adamw_step(TDTFParams& params, const TDTFParams& grads, AdamWState& state, const TrainConfig& tc,
                       std::size_t step_index) {
    if (step_index < 1) throw InvalidArgument("adamw_step: step_index must be >= 1");
    if (!params.same_shape(grads)) throw InvalidArgument("adamw_step: gradient shape mismatch");
    Eigen::VectorXd theta = params.flatten();
    const Eigen::VectorXd g = grads.flatten();
    if (state.m.size() == 0) state.m = Eigen::VectorXd::Zero(theta.size());
    if (state.v.size() == 0) state.v = Eigen::VectorXd::Zero(theta.size());
    if (state.m.size() != theta.size() || state.v.size() != theta.size()) {
        throw InvalidArgument("adamw_step: optimizer state shape mismatch");
    }
    state.m = tc.beta1 * state.m + (1.0 - tc.beta1) * g;
    state.v = tc.beta2 * state.v + (1.0 - tc.beta2) * g.cwiseProduct(g);
    const double t = static_cast<double>(step_index);
    const double bc1 = 1.0 - std::pow(tc.beta1, t);
    const double bc2 = 1.0 - std::pow(tc.beta2, t);
    const Eigen::ArrayXd m_hat = state.m.array() / bc1;
    const Eigen::ArrayXd v_hat = state.v.array() / bc2;
    theta.array() -= tc.lr * (m_hat / (v_hat.sqrt() + tc.eps_adam) + tc.weight_decay * theta.array());
    params.assign_flat(theta);
}

struct TrainResult {
    TDTFParams params;
    std::vector<double> loss_history;  ///< per-epoch mean loss
    double initial_loss = 0.0;         ///< full-dataset loss before the first update
};

/// Mini-batch AdamW. Bursts are reshuffled every epoch with the seeded
/// source; the last batch of an epoch may be smaller.
inline TrainResult train(const TDTFConfig& cfg, const TrainConfig& tc, const BurstDataset& data) {
    cfg.validate();
    tc.validate();
    if (data.n != cfg.n) {
        throw InvalidArgument("train: dataset delay " + std::to_string(data.n) + " != model delay " +
                              std::to_string(cfg.n));
    }
    if (data.d != cfg.d) throw InvalidArgument("train: dataset dimension does not match the model");
    if (data.bursts.empty()) throw InvalidArgument("train: empty dataset");

    TrainResult result{init_params(cfg), {}, 0.0};
    result.initial_loss = loss(cfg, result.params, data.bursts);
    result.loss_history.reserve(tc.epochs);

    Rng rng(tc.seed);
    AdamWState opt;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::vector<State>> batch;
    batch.reserve(tc.batch_size);
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_total = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size, ++batch_index) {
            const std::size_t stop = std::min(start + tc.batch_size, order.size());
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(data.bursts[order[i]]);
            double batch_loss = 0.0;
            TDTFParams grads;
            try {
                grads = gradients(cfg, result.params, batch, &batch_loss);
            } catch (const NumericalError& e) {
                throw DivergedError("tdtf training", epoch,
                                    "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) +
                                        ": " + e.what());
            }
            if (!std::isfinite(batch_loss)) {
                throw DivergedError("tdtf training", epoch,
                                    "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                        std::to_string(batch_index));
            }
            epoch_total += batch_loss * static_cast<double>(stop - start);
            adamw_step(result.params, grads, opt, tc, ++step);
        }
        result.loss_history.push_back(epoch_total / static_cast<double>(order.size()));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Rollout

/// Autoregressive rollout in the model's (normalized) space. Every sliding
/// window is re-encoded with positions 0..n-1.
inline Trajectory rollout_tdtf(const TDTFConfig& cfg, const TDTFParams& params,
                               std::span<const State> initial_window, std::size_t steps, double dt = 1.0,
                               double t0 = 0.0) {
    detail::check_window_shape(cfg, initial_window);
    check_params(cfg, params);
    std::vector<State> states(initial_window.begin(), initial_window.end());
    states.reserve(cfg.n + steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::span<const State> window(states.data() + states.size() - cfg.n, cfg.n);
        State next;
        try {
            next = detail::forward_cached(cfg, params, window).out;
        } catch (const NumericalError&) {
            throw DivergedError("tdtf rollout", s + 1, "non-finite attention score");
        }
        if (!next.allFinite()) throw DivergedError("tdtf rollout", s + 1, "non-finite prediction");
        states.push_back(std::move(next));
    }
    return Trajectory(std::move(states), dt, t0);
}

/// Rollout from a window in native units: normalize, roll out, denormalize.
inline Trajectory rollout_tdtf(const TDTFConfig& cfg, const TDTFParams& params, const Normalizer& norm,
                               std::span<const State> initial_window, std::size_t steps, double dt = 1.0,
                               double t0 = 0.0) {
    std::vector<State> window;
    window.reserve(initial_window.size());
    for (const auto& s : initial_window) window.push_back(normalize(norm, s));
    return denormalize(norm, rollout_tdtf(cfg, params, window, steps, dt, t0));
}

} // namespace delayroll
