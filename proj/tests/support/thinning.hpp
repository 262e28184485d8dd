#pragma once

// Ogata thinning for the two-state chain's first transition, used as an
// independent cross-check of the inverse-transform sampler.

#include <cmath>
#include <random>

#include "stochres/potential.hpp"

namespace thinning {

/// First transition phase out of `well`, or +inf if none occurs before
/// `stop`. The hazard in phase units is exp((mu - D(u)) / eps).
template <class Rng>
double first_transition(const stochres::DepthProfile& profile, stochres::Well well, double eps,
                        double mu, double stop, Rng& rng) {
    const double bound = std::exp((mu - profile.extrema(well).inf) / eps);
    std::exponential_distribution<double> gap(bound);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = 0.0;
    while (true) {
        u += gap(rng);
        if (u > stop) {
            return INFINITY;
        }
        const double rate = std::exp((mu - profile(well, u)) / eps);
        if (unit(rng) * bound <= rate) {
            return u;
        }
    }
}

} // namespace thinning
