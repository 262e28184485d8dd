#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "stochres/chain.hpp"
#include "support/oracles.hpp"
#include "support/thinning.hpp"

using namespace stochres;

namespace {

DepthProfile example(double psi = 0.0) {
    return DepthProfile::from_potential(ExamplePotential{psi}.spec());
}

TwoStateChain chain(double psi, double eps, double mu, double h) {
    return TwoStateChain(example(psi), {eps, mu, h});
}

double trapezoid_hazard(double psi, Well w, double eps, double mu, double u0, double u1) {
    const std::size_t n = 1'000'000;
    const double du = (u1 - u0) / static_cast<double>(n);
    auto f = [&](double u) { return std::exp((mu - oracle::depth(static_cast<int>(w), u, psi)) / eps); };
    double s = 0.5 * (f(u0) + f(u1));
    for (std::size_t k = 1; k < n; ++k) {
        s += f(u0 + du * static_cast<double>(k));
    }
    return s * du;
}

} // namespace

TEST(ChainWindow, MatchesFrozenReference) {
    for (const auto& r : oracle::kChainReference) {
        const TwoStateChain c = chain(r.psi, r.epsilon, r.mu, r.h);
        for (Well w : kWells) {
            const int k = index(w);
            const auto win = c.window(w);
            EXPECT_NEAR(win[1] - r.h, r.a[k], 1e-9);
            EXPECT_NEAR(c.window_probability(w) / r.window[k], 1.0, 1e-9);
            EXPECT_NEAR(c.window_failure(w, win[0], win[1]) / r.failure[k], 1.0, 1e-10);
        }
        const ChainQuality q = c.n_quality();
        EXPECT_NEAR(q.rate, r.rate, 1e-10);
        EXPECT_NEAR(q.theory, r.theory, 1e-9);
        EXPECT_NEAR(q.n_exact, std::min(r.window[0], r.window[1]), 1e-10);
    }
}

TEST(ChainHazard, IntegralMatchesTrapezoid) {
    const double eps = 0.15;
    const double mu = 0.28;
    const TwoStateChain c = chain(0.1, eps, mu, 0.05);
    for (Well w : kWells) {
        for (auto [u0, u1] : {std::pair{0.0, 0.37}, std::pair{0.21, 2.7}, std::pair{3.9, 4.05}}) {
            const double exact = trapezoid_hazard(0.1, w, eps, mu, u0, u1);
            EXPECT_NEAR(c.integrated_hazard_phase(w, u0, u1) / exact, 1.0, 1e-9)
                << "[" << u0 << ", " << u1 << "]";
        }
    }
}

TEST(ChainHazard, RealTimeAndSurvival) {
    const TwoStateChain c = chain(0.0, 0.2, 0.3, 0.05);
    const double T = c.period();
    EXPECT_NEAR(T, std::exp(0.3 / 0.2), 1e-12);
    const HazardFunction lam = c.hazard(Well::plus);
    EXPECT_NEAR(lam(0.3 * T), std::exp(-oracle::depth(1, 0.3) / 0.2), 1e-14);
    EXPECT_LE(lam(0.25 * T), lam.bound() * (1.0 + 1e-12));
    const double t = 1.7 * T;
    // real-time integral equals the phase integral of exp((mu - D)/eps)
    EXPECT_NEAR(c.integrated_hazard(Well::plus, t) /
                    trapezoid_hazard(0.0, Well::plus, 0.2, 0.3, 0.0, 1.7),
                1.0, 1e-9);
    EXPECT_NEAR(c.survival(Well::plus, t), std::exp(-c.integrated_hazard(Well::plus, t)), 1e-15);
    EXPECT_THROW(c.integrated_hazard(Well::plus, -1.0), DomainError);
}

TEST(ChainHazard, Additive) {
    const TwoStateChain c = chain(0.0, 0.1, 0.3, 0.05);
    for (Well w : kWells) {
        const double a = c.integrated_hazard_phase(w, 0.0, 0.731);
        const double b = c.integrated_hazard_phase(w, 0.731, 5.2);
        EXPECT_NEAR((a + b) / c.integrated_hazard_phase(w, 0.0, 5.2), 1.0, 1e-12);
    }
}

TEST(ChainParams, Guards) {
    EXPECT_THROW(chain(0.0, 0.0, 0.3, 0.05), DomainError);
    EXPECT_THROW(chain(0.0, 0.2, 0.3, -0.05), WindowError);
    EXPECT_THROW(chain(0.0, 1e-3, 0.9, 0.05).period(), DomainError);
    const TwoStateChain below = chain(0.0, 0.2, 0.1, 0.05);
    EXPECT_THROW(below.window(Well::plus), WindowError);
    const TwoStateChain c = chain(0.0, 0.2, 0.3, 0.05);
    EXPECT_THROW(c.window_probability(Well::plus, 0.5, 0.4), WindowError);
}

TEST(ChainWindow, ClippedAtPhaseZero) {
    // a_{+1} is just after 0 close to the top of the interval
    const TwoStateChain c = chain(0.0, 0.2, 0.33, 0.05);
    const auto win = c.window(Well::plus);
    EXPECT_EQ(win[0], 0.0);
    EXPECT_NEAR(win[1], oracle::a_mu(1, 0.33) + 0.05, 1e-9);
}

TEST(ChainWindow, WiderWindowsFailLess) {
    double prev_fail = 2.0;
    double prev_prob = -1.0;
    for (double h : {0.01, 0.02, 0.04, 0.08}) {
        const TwoStateChain c = chain(0.0, 0.15, 0.28, h);
        const auto win = c.window(Well::minus);
        const double fail = c.window_failure(Well::minus, win[0], win[1]);
        const double prob = c.window_probability(Well::minus);
        EXPECT_LT(fail, prev_fail);
        EXPECT_GT(prob, prev_prob);
        EXPECT_NEAR(fail + prob, 1.0, 1e-12);
        prev_fail = fail;
        prev_prob = prob;
    }
}

TEST(ChainWindow, EarlyTransitionsDominateAsNoiseVanishes) {
    // failure = P(too early) + P(too late); the late term is doubly
    // exponentially small once the window hazard is large, and the early
    // term then carries the quality exponent
    const DepthProfile p = DepthProfile::from_potential(ExamplePotential{0.0, 10.0}.spec());
    double prev_ratio = INFINITY;
    double prev_gap = INFINITY;
    for (double eps : {0.07, 0.05, 0.04, 0.03, 0.02, 0.015}) {
        const TwoStateChain c(p, {eps, 3.0, 0.05});
        const auto win = c.window(Well::minus);
        ASSERT_GT(win[0], 0.0);
        const double l1 = c.integrated_hazard_phase(Well::minus, 0.0, win[0]);
        const double l2 = l1 + c.integrated_hazard_phase(Well::minus, win[0], win[1]);
        const double early = -std::expm1(-l1);
        const double late = std::exp(-l2);
        const double ratio = late / early;
        EXPECT_LE(ratio, prev_ratio) << "eps = " << eps;
        prev_ratio = ratio;
        const double gap = std::abs(eps * std::log(early) - c.n_quality().theory);
        if (eps <= 0.04) {
            EXPECT_LT(gap, prev_gap) << "eps = " << eps;
            prev_gap = gap;
        }
    }
    EXPECT_LT(prev_ratio, 1e-6);
    EXPECT_LT(prev_gap, 0.02);
}

TEST(ChainSampler, InversionSolvesTheHazardEquation) {
    const TwoStateChain c = chain(0.1, 0.12, 0.24, 0.05);
    for (Well w : kWells) {
        for (double start : {0.0, 0.3, 2.95}) {
            for (double target : {1e-9, 0.01, 0.7, 3.0, 250.0}) {
                const double u = c.transition_phase_for(w, target, start);
                EXPECT_GE(u, start);
                // the phase is resolved to 1e-10 relative, so the hazard
                // integral carries that much times the peak hazard
                const double peak = std::exp((0.24 - c.profile().extrema(w).inf) / 0.12);
                EXPECT_NEAR(c.integrated_hazard_phase(w, start, u), target,
                            1e-9 * target + 1e-10 * u * peak)
                    << "start " << start << " target " << target;
            }
        }
        EXPECT_EQ(c.transition_phase_for(w, 0.0, 0.4), 0.4);
    }
}

TEST(ChainSampler, AgreesWithThinningAndClosedForm) {
    const double eps = 0.15;
    const double mu = 0.28;
    const TwoStateChain c = chain(0.0, eps, mu, 0.05);
    const DepthProfile p = example();
    const std::size_t n = 40'000;
    for (Well w : kWells) {
        const auto win = c.window(w);
        const double prob = c.window_probability(w);
        std::mt19937_64 a(derive_seed(5, {static_cast<std::uint64_t>(index(w)), 0}));
        std::mt19937_64 b(derive_seed(5, {static_cast<std::uint64_t>(index(w)), 1}));
        std::size_t hits_inverse = 0;
        std::size_t hits_thinning = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double u = c.sample_transition_phase(w, a);
            hits_inverse += u >= win[0] && u <= win[1];
            const double v = thinning::first_transition(p, w, eps, mu, win[1], b);
            hits_thinning += v >= win[0] && v <= win[1];
        }
        const double se = std::sqrt(prob * (1.0 - prob) / static_cast<double>(n));
        EXPECT_LT(std::abs(hits_inverse / double(n) - prob), 3.0 * se);
        EXPECT_LT(std::abs(hits_thinning / double(n) - prob), 3.0 * se);
    }
}

TEST(ChainSampler, RealTimeSamplesAreSeedDeterministic) {
    const TwoStateChain c = chain(0.0, 0.2, 0.3, 0.05);
    EXPECT_EQ(c.sample_transition_time(Well::minus, 42), c.sample_transition_time(Well::minus, 42));
    EXPECT_NE(c.sample_transition_time(Well::minus, 42), c.sample_transition_time(Well::minus, 43));
}

TEST(ChainInterspike, CountsAndPeriodLocking) {
    const TwoStateChain c(DepthProfile::from_potential(ExamplePotential{0.0, 10.0}.spec()),
                          {0.1, 3.0, 0.05});
    const InterspikeResult r = c.interspike_histogram(20'000, 3, 4.0, 50);
    EXPECT_EQ(r.intervals.total(), 20'000u);
    EXPECT_EQ(r.durations.size(), 20'000u);
    for (double d : r.durations) {
        EXPECT_GT(d, 0.0);
    }
    // half-period locking: most intervals sit near 1/2 period
    std::size_t near_half = 0;
    for (double d : r.durations) {
        near_half += std::abs(d - 0.5) < 0.15;
    }
    EXPECT_GT(near_half, r.durations.size() / 2);
    const InterspikeResult again = c.interspike_histogram(20'000, 3, 4.0, 50);
    EXPECT_EQ(again.intervals.counts, r.intervals.counts);
    EXPECT_THROW(c.interspike_histogram(0, 3), DomainError);
}

TEST(Histogram, Binning) {
    Histogram h(0.0, 2.0, 4);
    for (double v : {-0.1, 0.0, 0.49, 0.5, 1.99, 2.0, 5.0}) {
        h.add(v);
    }
    EXPECT_EQ(h.underflow, 1u);
    EXPECT_EQ(h.overflow, 2u);
    EXPECT_EQ(h.counts[0], 2u);
    EXPECT_EQ(h.counts[1], 1u);
    EXPECT_EQ(h.counts[3], 1u);
    EXPECT_EQ(h.total(), 7u);
    EXPECT_DOUBLE_EQ(h.bin_hi(1), 1.0);
}
