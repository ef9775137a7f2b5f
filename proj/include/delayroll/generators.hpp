#pragma once

// Synthetic data sources: a scalar sinusoid, the Lorenz '63 system and a
// one-dimensional activator-inhibitor reaction-diffusion field reduced by POD.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <array>
#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "delayroll/core_data.hpp"
#include "delayroll/errors.hpp"
#include "delayroll/parallel.hpp"

namespace delayroll {

// ---------------------------------------------------------------------------
// Sinusoid

/// w_k = sin(k dt) for k = 0..K.
inline Trajectory gen_sinusoid(std::size_t K, double dt) {
    if (K < 1) throw InvalidArgument("gen_sinusoid: K must be >= 1");
    if (!(dt > 0.0)) throw InvalidArgument("gen_sinusoid: dt must be positive");
    std::vector<State> states;
    states.reserve(K + 1);
    for (std::size_t k = 0; k <= K; ++k) {
        State s(1);
        s[0] = std::sin(static_cast<double>(k) * dt);
        states.push_back(std::move(s));
    }
    return Trajectory(std::move(states), dt);
}

// ---------------------------------------------------------------------------
// Lorenz '63

struct LorenzConfig {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
    double dt = 1e-2;
    double t_final = 100.0;
    double discard_fraction = 0.5;
    std::uint64_t seed = 0;
    std::size_t n_traj = 1000;
    double init_box = 15.0;

    void validate() const {
        if (!(dt > 0.0)) throw InvalidArgument("lorenz: dt must be positive");
        if (!(t_final > dt)) throw InvalidArgument("lorenz: t_final must exceed dt");
        if (!(discard_fraction >= 0.0 && discard_fraction < 1.0)) {
            throw InvalidArgument("lorenz: discard_fraction must lie in [0, 1)");
        }
        if (n_traj < 1) throw InvalidArgument("lorenz: n_traj must be >= 1");
        if (!(init_box > 0.0)) throw InvalidArgument("lorenz: init_box must be positive");
    }
};

using Vec3 = Eigen::Vector3d;

inline Vec3 lorenz_rhs(const LorenzConfig& cfg, const Vec3& s) {
    return {cfg.sigma * (s[1] - s[0]), s[0] * (cfg.rho - s[2]) - s[1], s[0] * s[1] - cfg.beta * s[2]};
}

/// One classical fourth-order Runge-Kutta step.
inline Vec3 lorenz_rk4_step(const LorenzConfig& cfg, const Vec3& s, double dt) {
    const Vec3 k1 = lorenz_rhs(cfg, s);
    const Vec3 k2 = lorenz_rhs(cfg, s + 0.5 * dt * k1);
    const Vec3 k3 = lorenz_rhs(cfg, s + 0.5 * dt * k2);
    const Vec3 k4 = lorenz_rhs(cfg, s + dt * k3);
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates `steps` RK4 steps from `initial`; returns steps+1 states.
inline std::vector<State> integrate_lorenz(const LorenzConfig& cfg, const Vec3& initial, std::size_t steps,
                                           const std::string& name = "lorenz") {
    std::vector<State> out;
    out.reserve(steps + 1);
    Vec3 s = initial;
    out.emplace_back(s);
    for (std::size_t k = 1; k <= steps; ++k) {
        s = lorenz_rk4_step(cfg, s, cfg.dt);
        if (!s.allFinite()) throw DivergedError(name, k, "non-finite state");
        out.emplace_back(s);
    }
    return out;
}

/// Deterministic per-trajectory random stream derived from (seed, index).
inline Rng substream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

/// n_traj RK4 trajectories from initial conditions uniform in the init cube,
/// with the leading discard_fraction of each removed. Output is identical
/// for any worker count.
inline std::vector<Trajectory> gen_lorenz(const LorenzConfig& cfg) {
    cfg.validate();
    const auto steps = static_cast<std::size_t>(std::llround(cfg.t_final / cfg.dt));
    const auto first_kept = static_cast<std::size_t>(std::llround(cfg.discard_fraction * static_cast<double>(steps)));

    std::vector<std::optional<Trajectory>> slots(cfg.n_traj);
    parallel_for(cfg.n_traj, [&](std::size_t i) {
        Rng rng = substream(cfg.seed, i);
        std::uniform_real_distribution<double> box(-cfg.init_box, cfg.init_box);
        Vec3 init;
        for (int c = 0; c < 3; ++c) init[c] = box(rng);
        auto states = integrate_lorenz(cfg, init, steps, "lorenz trajectory " + std::to_string(i));
        states.erase(states.begin(), states.begin() + static_cast<std::ptrdiff_t>(first_kept));
        slots[i].emplace(std::move(states), cfg.dt, static_cast<double>(first_kept) * cfg.dt,
                         "traj" + std::to_string(i));
    });

    std::vector<Trajectory> out;
    out.reserve(cfg.n_traj);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

/// Keeps a single component of every state.
inline Trajectory project_component(const Trajectory& traj, Eigen::Index idx) {
    if (idx < 0 || idx >= traj.dim()) {
        throw InvalidArgument("project_component: index " + std::to_string(idx) +
                              " out of range for dimension " + std::to_string(traj.dim()));
    }
    std::vector<State> states;
    states.reserve(traj.size());
    for (const auto& s : traj.states()) states.push_back(State::Constant(1, s[idx]));
    return Trajectory(std::move(states), traj.dt(), traj.t0(), traj.label());
}

// ---------------------------------------------------------------------------
// Reaction-diffusion
//
//   u_t = D u_xx + (v - u^2 - u^3) / eps
//   v_t = D v_xx - u + alpha
//
// on x in [0, 1], second-order central differences on a uniform grid and
// explicit Euler in time.

enum class Boundary { dirichlet, zero_flux };

struct ReactionDiffusionConfig {
    double D = 0.0322307;
    double eps = 0.01;
    double alpha = 0.01;
    std::size_t nx = 256;
    double dt = 1e-4;
    double t_final = 100.0;
    double t_discard = 15.0;
    double bc_u = -2.0;
    double bc_v = -4.0;
    /// Store one snapshot every this many time steps.
    std::size_t snapshot_every = 25;
    Boundary boundary = Boundary::dirichlet;
    /// Solver self-test switch; the physical model always has reactions on.
    bool reactions = true;
    /// Initial fields; when empty the default smooth perturbation is used.
    std::vector<double> u0;
    std::vector<double> v0;

    double dx() const { return 1.0 / static_cast<double>(nx - 1); }

    /// Largest admissible dt for the explicit scheme.
    double stability_bound() const {
        double bound = std::numeric_limits<double>::infinity();
        if (D > 0.0) bound = std::min(bound, 0.4 * dx() * dx() / D);
        if (reactions) bound = std::min(bound, 0.4 * eps);
        return bound;
    }

    void validate() const {
        if (nx < 3) throw InvalidArgument("reaction_diffusion: nx must be >= 3");
        if (!(D >= 0.0)) throw InvalidArgument("reaction_diffusion: D must be non-negative");
        if (!(eps > 0.0)) throw InvalidArgument("reaction_diffusion: eps must be positive");
        if (!(dt > 0.0)) throw InvalidArgument("reaction_diffusion: dt must be positive");
        if (!(t_final > 0.0)) throw InvalidArgument("reaction_diffusion: t_final must be positive");
        if (!(t_discard >= 0.0)) throw InvalidArgument("reaction_diffusion: t_discard must be non-negative");
        if (snapshot_every < 1) throw InvalidArgument("reaction_diffusion: snapshot_every must be >= 1");
        if (dt > stability_bound()) {
            throw InvalidArgument("reaction_diffusion: dt = " + std::to_string(dt) +
                                  " exceeds the stability bound " + std::to_string(stability_bound()));
        }
        if ((!u0.empty() && u0.size() != nx) || (!v0.empty() && v0.size() != nx)) {
            throw InvalidArgument("reaction_diffusion: initial field size must equal nx");
        }
    }
};

struct SnapshotField {
    Eigen::MatrixXd u;          ///< nx x m, one column per stored snapshot
    std::vector<double> times;  ///< m snapshot times
    std::vector<double> grid;   ///< nx grid coordinates
};

inline SnapshotField solve_reaction_diffusion(const ReactionDiffusionConfig& cfg) {
    cfg.validate();
    const std::size_t nx = cfg.nx;
    const double dx = cfg.dx();
    const double diff = cfg.D / (dx * dx);
    const auto steps = static_cast<std::size_t>(std::llround(cfg.t_final / cfg.dt));

    SnapshotField field;
    field.grid.resize(nx);
    for (std::size_t i = 0; i < nx; ++i) field.grid[i] = static_cast<double>(i) * dx;

    Eigen::VectorXd u(nx), v(nx);
    for (std::size_t i = 0; i < nx; ++i) {
        const double x = field.grid[i];
        u[i] = cfg.u0.empty() ? -2.0 + 4.0 * std::sin(std::numbers::pi * x) * std::cos(2.0 * std::numbers::pi * x)
                              : cfg.u0[i];
        v[i] = cfg.v0.empty() ? -4.0 + 2.0 * std::sin(std::numbers::pi * x) : cfg.v0[i];
    }
    const auto apply_bc = [&] {
        if (cfg.boundary == Boundary::dirichlet) {
            u[0] = u[nx - 1] = cfg.bc_u;
            v[0] = v[nx - 1] = cfg.bc_v;
        }
    };
    apply_bc();

    std::vector<Eigen::VectorXd> kept;
    const auto record = [&](std::size_t step) {
        const double t = static_cast<double>(step) * cfg.dt;
        if (step % cfg.snapshot_every == 0 && t >= cfg.t_discard - 1e-12) {
            kept.push_back(u);
            field.times.push_back(t);
        }
    };
    record(0);

    Eigen::VectorXd du(nx), dv(nx);
    for (std::size_t step = 1; step <= steps; ++step) {
        for (std::size_t i = 0; i < nx; ++i) {
            double lap_u, lap_v;
            if (i == 0 || i == nx - 1) {
                if (cfg.boundary == Boundary::dirichlet) {
                    du[i] = dv[i] = 0.0;
                    continue;
                }
                // mirrored ghost node
                const std::size_t in = i == 0 ? 1 : nx - 2;
                lap_u = 2.0 * (u[in] - u[i]);
                lap_v = 2.0 * (v[in] - v[i]);
            } else {
                lap_u = u[i + 1] - 2.0 * u[i] + u[i - 1];
                lap_v = v[i + 1] - 2.0 * v[i] + v[i - 1];
            }
            du[i] = diff * lap_u;
            dv[i] = diff * lap_v;
            if (cfg.reactions) {
                const double ui = u[i];
                du[i] += (v[i] - ui * ui - ui * ui * ui) / cfg.eps;
                dv[i] += -ui + cfg.alpha;
            }
        }
        u += cfg.dt * du;
        v += cfg.dt * dv;
        apply_bc();
        if (!u.allFinite() || !v.allFinite()) throw DivergedError("reaction_diffusion", step, "non-finite field");
        record(step);
    }

    field.u.resize(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) field.u.col(static_cast<Eigen::Index>(k)) = kept[k];
    return field;
}

/// Trapezoidal integral of a grid function over [0, 1].
inline double trapezoid(const Eigen::VectorXd& f, double dx) {
    const auto n = f.size();
    return dx * (f.sum() - 0.5 * (f[0] + f[n - 1]));
}

// ---------------------------------------------------------------------------
// Proper orthogonal decomposition

struct PODBasis {
    Eigen::MatrixXd modes;            ///< nx x r, orthonormal columns
    Eigen::VectorXd singular_values;  ///< all singular values, nonincreasing
    Eigen::VectorXd mean;             ///< subtracted temporal mean (zero when raw)
    std::size_t r = 0;

    /// Fraction of squared singular values captured by the first r modes.
    double retained_energy() const {
        const double total = singular_values.squaredNorm();
        return total > 0.0 ? singular_values.head(static_cast<Eigen::Index>(r)).squaredNorm() / total : 1.0;
    }
};

struct PODResult {
    PODBasis basis;
    Trajectory coefficients;
};

/// SVD-based POD of an nx x m snapshot matrix. Each mode is flipped so that
/// its largest-magnitude entry is positive.
inline PODResult compute_pod(const Eigen::MatrixXd& snapshots, std::size_t r, double dt = 1.0, double t0 = 0.0,
                             bool subtract_mean = false) {
    const auto nx = static_cast<std::size_t>(snapshots.rows());
    const auto m = static_cast<std::size_t>(snapshots.cols());
    if (m < 2) throw InvalidArgument("compute_pod: need at least 2 snapshots");
    if (r < 1 || r > std::min(nx, m)) {
        throw InvalidArgument("compute_pod: r = " + std::to_string(r) + " must lie in [1, " +
                              std::to_string(std::min(nx, m)) + "]");
    }

    PODBasis basis;
    basis.r = r;
    basis.mean = subtract_mean ? Eigen::VectorXd(snapshots.rowwise().mean()) : Eigen::VectorXd::Zero(snapshots.rows());
    const Eigen::MatrixXd centered = snapshots.colwise() - basis.mean;

    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
    if (svd.info() != Eigen::Success) throw NumericalError("compute_pod: SVD failed");
    basis.singular_values = svd.singularValues();
    basis.modes = svd.matrixU().leftCols(static_cast<Eigen::Index>(r));
    for (Eigen::Index c = 0; c < basis.modes.cols(); ++c) {
        Eigen::Index arg = 0;
        basis.modes.col(c).cwiseAbs().maxCoeff(&arg);
        if (basis.modes(arg, c) < 0.0) basis.modes.col(c) *= -1.0;
    }

    const Eigen::MatrixXd coeffs = basis.modes.transpose() * centered;
    std::vector<State> states;
    states.reserve(m);
    for (Eigen::Index k = 0; k < coeffs.cols(); ++k) states.emplace_back(coeffs.col(k));
    return {std::move(basis), Trajectory(std::move(states), dt, t0)};
}

/// Field reconstruction mean + modes * coefficients, one column per state.
inline Eigen::MatrixXd reconstruct_field(const PODBasis& basis, const Trajectory& coeffs) {
    if (coeffs.dim() != static_cast<Eigen::Index>(basis.r)) {
        throw InvalidArgument("reconstruct_field: coefficient dimension does not match the basis");
    }
    Eigen::MatrixXd out(basis.modes.rows(), static_cast<Eigen::Index>(coeffs.size()));
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        out.col(static_cast<Eigen::Index>(k)) = basis.mean + basis.modes * coeffs[k];
    }
    return out;
}

} // namespace delayroll
