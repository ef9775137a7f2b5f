#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "delayroll/core_data.hpp"
#include "delayroll/errors.hpp"

namespace delayroll {

namespace detail {

inline void check_same_shape(const Trajectory& a, const Trajectory& b, const char* who) {
    if (a.size() != b.size()) {
        throw InvalidArgument(std::string(who) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    if (a.dim() != b.dim()) throw InvalidArgument(std::string(who) + ": dimension mismatch");
}

inline void check_scalar(const Trajectory& x, const char* who) {
    if (x.dim() != 1) throw InvalidArgument(std::string(who) + ": expected a 1-D trajectory");
}

} // namespace detail

/// sqrt of the mean over timesteps of the squared Euclidean error.
inline double rmse(const Trajectory& pred, const Trajectory& truth) {
    detail::check_same_shape(pred, truth, "rmse");
    double sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) sum += (pred[k] - truth[k]).squaredNorm();
    return std::sqrt(sum / static_cast<double>(pred.size()));
}

inline double max_abs_error(const Trajectory& pred, const Trajectory& truth) {
    detail::check_same_shape(pred, truth, "max_abs_error");
    double m = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) m = std::max(m, (pred[k] - truth[k]).cwiseAbs().maxCoeff());
    return m;
}

struct LobeStats {
    std::size_t count = 0;
    double frequency = 0.0;  ///< switches per unit time
};

/// Sign changes between the two Lorenz lobes. Samples with |x| <= threshold
/// neither count nor reset the current lobe.
inline LobeStats lobe_switches(const Trajectory& x, double threshold = 0.1) {
    detail::check_scalar(x, "lobe_switches");
    if (!(threshold > 0.0)) throw InvalidArgument("lobe_switches: threshold must be positive");
    int lobe = 0;
    LobeStats out;
    for (const auto& s : x.states()) {
        const double v = s[0];
        if (std::abs(v) <= threshold) continue;
        const int sign = v > 0.0 ? 1 : -1;
        if (lobe != 0 && sign != lobe) ++out.count;
        lobe = sign;
    }
    const double duration = static_cast<double>(x.size() - 1) * x.dt();
    out.frequency = duration > 0.0 ? static_cast<double>(out.count) / duration : 0.0;
    return out;
}

struct PeakStats {
    std::size_t count = 0;
    double mean_interval = 0.0;  ///< 0 when fewer than two peaks
};

/// Strict interior local maxima; plateaus are not peaks.
inline PeakStats peak_stats(const Trajectory& x) {
    detail::check_scalar(x, "peak_stats");
    if (x.size() < 3) throw InvalidArgument("peak_stats: series needs at least 3 samples");
    std::vector<std::size_t> peaks;
    for (std::size_t k = 1; k + 1 < x.size(); ++k) {
        if (x[k][0] > x[k - 1][0] && x[k][0] > x[k + 1][0]) peaks.push_back(k);
    }
    PeakStats out{peaks.size(), 0.0};
    if (peaks.size() >= 2) {
        out.mean_interval =
            static_cast<double>(peaks.back() - peaks.front()) * x.dt() / static_cast<double>(peaks.size() - 1);
    }
    return out;
}

struct ExtremumError {
    double value_gap = 0.0;   ///< min(pred) - min(truth)
    double time_shift = 0.0;  ///< t_argmin(pred) - t_argmin(truth)
};

inline ExtremumError extremum_error(const Trajectory& pred, const Trajectory& truth) {
    detail::check_same_shape(pred, truth, "extremum_error");
    detail::check_scalar(pred, "extremum_error");
    const auto argmin = [](const Trajectory& t) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < t.size(); ++k) {
            if (t[k][0] < t[best][0]) best = k;
        }
        return best;
    };
    const std::size_t ip = argmin(pred);
    const std::size_t it = argmin(truth);
    return {pred[ip][0] - truth[it][0], pred.time(ip) - truth.time(it)};
}

// ---------------------------------------------------------------------------
// Reports

struct TrajectoryMetrics {
    std::string label;
    double rmse = 0.0;
    double max_abs_error = 0.0;
    std::size_t lobe_switches = 0;
    double switch_frequency = 0.0;
    std::size_t peak_count = 0;
    std::optional<double> mean_peak_interval;  ///< empty when fewer than two peaks
    std::optional<ExtremumError> extremum;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Population mean and standard deviation, summed in input order.
inline MeanStd mean_std(const std::vector<double>& values) {
    if (values.empty()) return {};
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

struct MetricsReport {
    std::vector<TrajectoryMetrics> per_trajectory;
    MeanStd rmse;
    MeanStd max_abs_error;
    MeanStd lobe_switches;
    MeanStd switch_frequency;
    MeanStd peak_count;
    MeanStd mean_peak_interval;
    /// Trajectories left out of the interval statistics (fewer than two peaks).
    std::size_t interval_excluded = 0;
};

struct EvaluationOptions {
    Eigen::Index component = 0;  ///< component used for lobe and peak statistics
    double lobe_threshold = 0.1;
    bool chaos_statistics = true;
    bool extremum = false;
};

/// Error metrics of `pred` against `truth` plus the lobe/peak statistics of
/// the selected component of `pred`.
inline TrajectoryMetrics evaluate_trajectory(const Trajectory& pred, const Trajectory& truth,
                                             const EvaluationOptions& opt = {}) {
    TrajectoryMetrics m;
    m.label = truth.label().value_or("");
    m.rmse = rmse(pred, truth);
    m.max_abs_error = max_abs_error(pred, truth);
    if (opt.chaos_statistics || opt.extremum) {
        if (opt.component < 0 || opt.component >= pred.dim()) {
            throw InvalidArgument("evaluate: statistics component out of range");
        }
    }
    if (!opt.chaos_statistics && !opt.extremum) return m;

    const auto scalar = [&](const Trajectory& t) {
        std::vector<State> s;
        s.reserve(t.size());
        for (const auto& st : t.states()) s.push_back(State::Constant(1, st[opt.component]));
        return Trajectory(std::move(s), t.dt(), t.t0());
    };
    const Trajectory x = scalar(pred);
    if (opt.chaos_statistics) {
        const auto lobes = lobe_switches(x, opt.lobe_threshold);
        m.lobe_switches = lobes.count;
        m.switch_frequency = lobes.frequency;
        if (x.size() >= 3) {
            const auto peaks = peak_stats(x);
            m.peak_count = peaks.count;
            if (peaks.count >= 2) m.mean_peak_interval = peaks.mean_interval;
        }
    }
    if (opt.extremum) m.extremum = extremum_error(x, scalar(truth));
    return m;
}

inline MetricsReport aggregate(std::vector<TrajectoryMetrics> items) {
    MetricsReport r;
    std::vector<double> rm, ma, ls, sf, pc, pi;
    for (const auto& m : items) {
        rm.push_back(m.rmse);
        ma.push_back(m.max_abs_error);
        ls.push_back(static_cast<double>(m.lobe_switches));
        sf.push_back(m.switch_frequency);
        pc.push_back(static_cast<double>(m.peak_count));
        if (m.mean_peak_interval) {
            pi.push_back(*m.mean_peak_interval);
        } else {
            ++r.interval_excluded;
        }
    }
    r.rmse = mean_std(rm);
    r.max_abs_error = mean_std(ma);
    r.lobe_switches = mean_std(ls);
    r.switch_frequency = mean_std(sf);
    r.peak_count = mean_std(pc);
    r.mean_peak_interval = mean_std(pi);
    r.per_trajectory = std::move(items);
    return r;
}

} // namespace delayroll
