#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "delayroll/core_data.hpp"

using namespace delayroll;

namespace {

State s1(double v) { return State::Constant(1, v); }

State s2(double a, double b) {
    State s(2);
    s << a, b;
    return s;
}

Trajectory ramp(std::size_t count, double dt = 0.5) {
    std::vector<State> states;
    for (std::size_t k = 0; k < count; ++k) states.push_back(s1(static_cast<double>(k)));
    return Trajectory(states, dt, 1.0, "ramp");
}

Trajectory random_traj(std::mt19937_64& rng, std::size_t count, Eigen::Index d) {
    std::normal_distribution<double> nd(0.0, 3.0);
    std::vector<State> states;
    for (std::size_t k = 0; k < count; ++k) {
        State s(d);
        for (Eigen::Index i = 0; i < d; ++i) s[i] = nd(rng);
        states.push_back(s);
    }
    return Trajectory(states, 0.1);
}

} // namespace

TEST(Trajectory, RejectsInvalidConstruction) {
    EXPECT_THROW(Trajectory({}, 1.0), InvalidArgument);
    EXPECT_THROW(Trajectory({s1(0.0)}, 0.0), InvalidArgument);
    EXPECT_THROW(Trajectory({s1(0.0)}, -1.0), InvalidArgument);
    EXPECT_THROW(Trajectory({s1(0.0), s2(0.0, 1.0)}, 1.0), InvalidArgument);
    EXPECT_THROW(Trajectory({s1(std::numeric_limits<double>::quiet_NaN())}, 1.0), InvalidArgument);
    EXPECT_THROW(Trajectory({s1(std::numeric_limits<double>::infinity())}, 1.0), InvalidArgument);
}

TEST(Subsample, TakesEveryTauth) {
    const auto t = subsample(ramp(10), 2);
    ASSERT_EQ(t.size(), 5u);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(t[k][0], 2.0 * static_cast<double>(k));
    EXPECT_DOUBLE_EQ(t.dt(), 1.0);
    EXPECT_EQ(t.label(), "ramp");
    EXPECT_DOUBLE_EQ(t.t0(), 1.0);
}

TEST(Subsample, SevenByThree) {
    const auto t = subsample(ramp(7), 3);
    ASSERT_EQ(t.size(), 3u);
    EXPECT_EQ(t[0][0], 0.0);
    EXPECT_EQ(t[1][0], 3.0);
    EXPECT_EQ(t[2][0], 6.0);
}

TEST(Subsample, TauOneIsIdentity) {
    const auto src = ramp(9);
    const auto t = subsample(src, 1);
    ASSERT_EQ(t.size(), src.size());
    for (std::size_t k = 0; k < src.size(); ++k) EXPECT_EQ(t[k], src[k]);
    EXPECT_EQ(t.dt(), src.dt());
}

TEST(Subsample, ZeroTauIsError) { EXPECT_THROW(subsample(ramp(3), 0), InvalidArgument); }

TEST(Subsample, Composition) {
    const auto src = ramp(103);
    for (std::size_t a = 1; a <= 5; ++a) {
        for (std::size_t b = 1; b <= 5; ++b) {
            const auto twice = subsample(subsample(src, a), b);
            const auto once = subsample(src, a * b);
            ASSERT_EQ(twice.size(), once.size());
            for (std::size_t k = 0; k < once.size(); ++k) EXPECT_EQ(twice[k], once[k]);
            EXPECT_DOUBLE_EQ(twice.dt(), once.dt());
        }
    }
}

TEST(Normalizer, FitExtrema) {
    const std::vector<Trajectory> one{Trajectory({s1(-2), s1(0), s1(2)}, 1.0)};
    const auto n = fit_normalizer(one);
    EXPECT_EQ(n.lo[0], -2.0);
    EXPECT_EQ(n.hi[0], 2.0);

    const std::vector<Trajectory> two{Trajectory({s2(0, 5), s2(4, 1)}, 1.0)};
    const auto m = fit_normalizer(two);
    EXPECT_EQ(m.lo, s2(0, 1));
    EXPECT_EQ(m.hi, s2(4, 5));

    const std::vector<Trajectory> flat{Trajectory({s1(3), s1(3)}, 1.0)};
    const auto f = fit_normalizer(flat);
    EXPECT_EQ(f.lo[0], 3.0);
    EXPECT_EQ(f.hi[0], 3.0);
}

TEST(Normalizer, FitEmptyIsError) {
    EXPECT_THROW(fit_normalizer(std::vector<Trajectory>{}), InvalidArgument);
}

TEST(Normalizer, MapsRangeOntoUnitCube) {
    const Normalizer n{s1(-2), s1(2)};
    EXPECT_EQ(normalize(n, s1(0))[0], 0.0);
    EXPECT_EQ(normalize(n, s1(2))[0], 1.0);
    EXPECT_EQ(normalize(n, s1(-2))[0], -1.0);
    // extrapolation is not clamped
    EXPECT_DOUBLE_EQ(normalize(n, s1(4))[0], 2.0);
    EXPECT_EQ(denormalize(n, s1(1))[0], 2.0);
}

TEST(Normalizer, DegenerateRange) {
    const Normalizer zero{s1(0), s1(0)};
    EXPECT_EQ(normalize(zero, s1(0))[0], 0.0);
    const Normalizer five{s1(5), s1(5)};
    EXPECT_EQ(normalize(five, s1(123))[0], 0.0);
    EXPECT_EQ(denormalize(five, s1(0.7))[0], 5.0);
    EXPECT_EQ(denormalize(five, s1(-42))[0], 5.0);
}

TEST(Normalizer, RoundTripSingle) {
    const Normalizer n{s1(-3), s1(7)};
    EXPECT_NEAR(denormalize(n, normalize(n, s1(1.5)))[0], 1.5, 1e-12 * 1.5);
}

TEST(Normalizer, DimensionMismatch) {
    const Normalizer n{s1(-3), s1(7)};
    EXPECT_THROW(normalize(n, s2(0, 0)), InvalidArgument);
    EXPECT_THROW(denormalize(n, s2(0, 0)), InvalidArgument);
}

TEST(Normalizer, RoundTripAndRangeProperty) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index d = 1 + trial % 4;
        std::vector<Trajectory> trajs{random_traj(rng, 40, d), random_traj(rng, 17, d)};
        const auto norm = fit_normalizer(trajs);
        State seen_lo = State::Constant(d, 1e9), seen_hi = State::Constant(d, -1e9);
        for (const auto& t : trajs) {
            for (const auto& x : t.states()) {
                const State y = normalize(norm, x);
                EXPECT_TRUE((y.array() >= -1.0).all() && (y.array() <= 1.0).all());
                seen_lo = seen_lo.cwiseMin(y);
                seen_hi = seen_hi.cwiseMax(y);
                const State back = denormalize(norm, y);
                for (Eigen::Index i = 0; i < d; ++i) {
                    EXPECT_LE(std::abs(back[i] - x[i]), 1e-12 * std::max(1.0, std::abs(x[i])));
                }
            }
        }
        EXPECT_EQ(seen_lo, State::Constant(d, -1.0));
        EXPECT_EQ(seen_hi, State::Constant(d, 1.0));
    }
}

TEST(SampleBursts, ShapeAndConsecutiveness) {
    std::mt19937_64 gen(3);
    std::vector<Trajectory> trajs{random_traj(gen, 30, 2), random_traj(gen, 5, 2), random_traj(gen, 2, 2)};
    Rng rng(42);
    const auto data = sample_bursts(trajs, 2, 500, rng);
    EXPECT_EQ(data.n, 2u);
    EXPECT_EQ(data.d, 2);
    ASSERT_EQ(data.size(), 500u);
    for (std::size_t j = 0; j < data.size(); ++j) {
        ASSERT_EQ(data.bursts[j].size(), 3u);
        const auto& o = data.origins[j];
        ASSERT_LT(o.trajectory, 2u) << "trajectory shorter than n+1 must never be used";
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(data.bursts[j][k], trajs[o.trajectory][o.start + k]);
    }
}

TEST(SampleBursts, ExactLengthTrajectoryYieldsIdenticalBursts) {
    const std::vector<Trajectory> trajs{ramp(4)};
    Rng rng(1);
    const auto data = sample_bursts(trajs, 3, 20, rng);
    for (const auto& b : data.bursts) {
        for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(b[k], trajs[0][k]);
    }
}

TEST(SampleBursts, DeterministicGivenSeed) {
    const std::vector<Trajectory> trajs{ramp(50), ramp(20)};
    Rng a(7), b(7);
    const auto da = sample_bursts(trajs, 4, 100, a);
    const auto db = sample_bursts(trajs, 4, 100, b);
    for (std::size_t j = 0; j < 100; ++j) {
        EXPECT_EQ(da.origins[j].trajectory, db.origins[j].trajectory);
        EXPECT_EQ(da.origins[j].start, db.origins[j].start);
    }
}

TEST(SampleBursts, Errors) {
    const std::vector<Trajectory> trajs{ramp(3)};
    Rng rng(0);
    EXPECT_THROW(sample_bursts(trajs, 3, 5, rng), InvalidArgument);
    EXPECT_THROW(sample_bursts(trajs, 1, 0, rng), InvalidArgument);
    EXPECT_THROW(sample_bursts(trajs, 0, 1, rng), InvalidArgument);
}

TEST(SampleBursts, UsesEveryValidStart) {
    const std::vector<Trajectory> trajs{ramp(8)};
    Rng rng(5);
    const auto data = sample_bursts(trajs, 2, 2000, rng);
    std::vector<int> hits(6, 0);
    for (const auto& o : data.origins) ++hits.at(o.start);
    for (int h : hits) EXPECT_GT(h, 200);
}
