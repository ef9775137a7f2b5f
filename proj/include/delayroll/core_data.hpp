#pragma once

// Trajectory containers and the preprocessing shared by every model:
// subsampling, normalization to [-1, 1]^d and random burst extraction.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "delayroll/errors.hpp"

namespace delayroll {

using State = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Uniformly sampled sequence of d-dimensional observable states.
///
/// Construction validates that every state has the same dimension, that
/// the sequence is non-empty, that dt > 0 and that all values are finite.
/// The object is immutable afterwards.
class Trajectory {
public:
    Trajectory(std::vector<State> states, double dt, double t0 = 0.0,
               std::optional<std::string> label = std::nullopt)
        : states_(std::move(states)), dt_(dt), t0_(t0), label_(std::move(label)) {
        if (states_.empty()) {
            throw InvalidArgument("trajectory must contain at least one state");
        }
        if (!(dt_ > 0.0) || !std::isfinite(dt_)) {
            throw InvalidArgument("trajectory dt must be positive and finite");
        }
        if (!std::isfinite(t0_)) {
            throw InvalidArgument("trajectory t0 must be finite");
        }
        const auto d = states_.front().size();
        if (d < 1) {
            throw InvalidArgument("trajectory states must have dimension >= 1");
        }
        for (std::size_t k = 0; k < states_.size(); ++k) {
            if (states_[k].size() != d) {
                throw InvalidArgument("state " + std::to_string(k) + " has dimension " +
                                      std::to_string(states_[k].size()) + ", expected " +
                                      std::to_string(d));
            }
            if (!states_[k].allFinite()) {
                throw InvalidArgument("state " + std::to_string(k) + " contains non-finite values");
            }
        }
    }

    std::size_t size() const noexcept { return states_.size(); }
    Eigen::Index dim() const noexcept { return states_.front().size(); }
    double dt() const noexcept { return dt_; }
    double t0() const noexcept { return t0_; }
    double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }
    const std::optional<std::string>& label() const noexcept { return label_; }

    const State& operator[](std::size_t k) const { return states_[k]; }
    const std::vector<State>& states() const noexcept { return states_; }

    /// Component `idx` of every state, as a flat series.
    std::vector<double> component(Eigen::Index idx) const {
        std::vector<double> out;
        out.reserve(states_.size());
        for (const auto& s : states_) out.push_back(s[idx]);
        return out;
    }

private:
    std::vector<State> states_;
    double dt_;
    double t0_;
    std::optional<std::string> label_;
};

/// Location of a burst inside the trajectory list it was drawn from.
struct BurstOrigin {
    std::size_t trajectory;
    std::size_t start;
};

/// J windows of n+1 consecutive states.
struct BurstDataset {
    std::vector<std::vector<State>> bursts;
    std::vector<BurstOrigin> origins;
    std::size_t n = 0;
    Eigen::Index d = 0;

    std::size_t size() const noexcept { return bursts.size(); }
};

/// Per-component affine map of the training range onto [-1, 1].
struct Normalizer {
    State lo;
    State hi;

    Eigen::Index dim() const noexcept { return lo.size(); }
};

inline Trajectory subsample(const Trajectory& traj, std::size_t tau) {
    if (tau == 0) throw InvalidArgument("subsample: tau must be >= 1");
    std::vector<State> states;
    states.reserve((traj.size() + tau - 1) / tau);
    for (std::size_t k = 0; k < traj.size(); k += tau) states.push_back(traj[k]);
    return Trajectory(std::move(states), traj.dt() * static_cast<double>(tau), traj.t0(),
                      traj.label());
}

inline Normalizer fit_normalizer(std::span<const Trajectory> trajs) {
    if (trajs.empty()) throw InvalidArgument("fit_normalizer: no trajectories");
    const auto d = trajs.front().dim();
    Normalizer norm{trajs.front()[0], trajs.front()[0]};
    for (const auto& traj : trajs) {
        if (traj.dim() != d) throw InvalidArgument("fit_normalizer: trajectories differ in dimension");
        for (const auto& s : traj.states()) {
            norm.lo = norm.lo.cwiseMin(s);
            norm.hi = norm.hi.cwiseMax(s);
        }
    }
    return norm;
}

inline State normalize(const Normalizer& norm, const State& x) {
    if (x.size() != norm.dim()) {
        throw InvalidArgument("normalize: state dimension " + std::to_string(x.size()) +
                              " does not match normalizer dimension " +
                              std::to_string(norm.dim()));
    }
    State y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double range = norm.hi[i] - norm.lo[i];
        y[i] = range > 0.0 ? 2.0 * (x[i] - norm.lo[i]) / range - 1.0 : 0.0;
    }
    return y;
}

inline State denormalize(const Normalizer& norm, const State& y) {
    if (y.size() != norm.dim()) {
        throw InvalidArgument("denormalize: state dimension " + std::to_string(y.size()) +
                              " does not match normalizer dimension " +
                              std::to_string(norm.dim()));
    }
    State x(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double range = norm.hi[i] - norm.lo[i];
        x[i] = range > 0.0 ? norm.lo[i] + 0.5 * (y[i] + 1.0) * range : norm.lo[i];
    }
    return x;
}

inline Trajectory normalize(const Normalizer& norm, const Trajectory& traj) {
    std::vector<State> states;
    states.reserve(traj.size());
    for (const auto& s : traj.states()) states.push_back(normalize(norm, s));
    return Trajectory(std::move(states), traj.dt(), traj.t0(), traj.label());
}

inline Trajectory denormalize(const Normalizer& norm, const Trajectory& traj) {
    std::vector<State> states;
    states.reserve(traj.size());
    for (const auto& s : traj.states()) states.push_back(denormalize(norm, s));
    return Trajectory(std::move(states), traj.dt(), traj.t0(), traj.label());
}

/// Draws J bursts with replacement: a trajectory uniformly among those with
/// at least n+1 states, then a start index uniformly among its valid starts.
inline BurstDataset sample_bursts(std::span<const Trajectory> trajs, std::size_t n, std::size_t count,
                                  Rng& rng) {
    if (n == 0) throw InvalidArgument("sample_bursts: n must be >= 1");
    if (count == 0) throw InvalidArgument("sample_bursts: J must be >= 1");
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        if (trajs[i].size() >= n + 1) usable.push_back(i);
    }
    if (usable.empty()) {
        throw InvalidArgument("sample_bursts: no trajectory has at least n+1 = " +
                              std::to_string(n + 1) + " states");
    }

    BurstDataset data;
    data.n = n;
    data.d = trajs[usable.front()].dim();
    data.bursts.reserve(count);
    data.origins.reserve(count);
    std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
    for (std::size_t j = 0; j < count; ++j) {
        const std::size_t ti = usable[pick(rng)];
        const auto& traj = trajs[ti];
        if (traj.dim() != data.d) throw InvalidArgument("sample_bursts: trajectories differ in dimension");
        std::uniform_int_distribution<std::size_t> start_dist(0, traj.size() - n - 1);
        const std::size_t start = start_dist(rng);
        std::vector<State> burst(traj.states().begin() + static_cast<std::ptrdiff_t>(start),
                                 traj.states().begin() + static_cast<std::ptrdiff_t>(start + n + 1));
        data.bursts.push_back(std::move(burst));
        data.origins.push_back({ti, start});
    }
    return data;
}

/// The first `n` states of a trajectory, used to seed a rollout.
inline std::vector<State> leading_window(const Trajectory& traj, std::size_t n) {
    if (n == 0 || traj.size() < n) {
        throw InvalidArgument("leading_window: trajectory shorter than window length " + std::to_string(n));
    }
    return {traj.states().begin(), traj.states().begin() + static_cast<std::ptrdiff_t>(n)};
}

} // namespace delayroll
