#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <vector>

#include "stochres/analysis.hpp"
#include "stochres/errors.hpp"
#include "stochres/numerics.hpp"
#include "stochres/potential.hpp"
#include "stochres/rng.hpp"

namespace stochres {

struct ChainParams {
    double epsilon = 0.2;
    double mu = 0.3;
    double h = 0.05;
    /// Relative quadrature tolerance.
    double tolerance = 1e-12;
    /// Panels per period in the cached hazard table.
    std::size_t panels = 1024;
};

/// Rate exp(-D_i(t/T)/eps) of leaving well i at real time t.
class HazardFunction {
  public:
    HazardFunction(const DepthProfile& profile, Well state, double epsilon, double period)
        : profile_(&profile), state_(state), epsilon_(epsilon), period_(period) {}

    Well state() const noexcept { return state_; }
    double operator()(double t) const {
        return std::exp(-(*profile_)(state_, t / period_) / epsilon_);
    }
    /// exp(-inf D / eps).
    double bound() const { return std::exp(-profile_->extrema(state_).inf / epsilon_); }

  private:
    const DepthProfile* profile_;
    Well state_;
    double epsilon_;
    double period_;
};

struct ChainQuality {
    double epsilon = 0.0;
    double mu = 0.0;
    double h = 0.0;
    /// N(eps, mu) = min over wells of the window probability.
    double n_exact = 0.0;
    /// 1 - N, computed without cancellation.
    double failure = 1.0;
    double rate = 0.0;
    double theory = 0.0;
    Well limiting = Well::minus;
    std::array<double, 2> window{};
    std::array<double, 2> window_failure{};
    std::array<double, 2> transition{};
};

struct Histogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::size_t> counts;
    std::size_t underflow = 0;
    std::size_t overflow = 0;

    Histogram() = default;
    Histogram(double lo_, double hi_, std::size_t bins) : lo(lo_), hi(hi_), counts(bins, 0) {}

    double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
    double bin_lo(std::size_t k) const { return lo + width() * static_cast<double>(k); }
    double bin_hi(std::size_t k) const { return lo + width() * static_cast<double>(k + 1); }
    std::size_t total() const {
        std::size_t s = underflow + overflow;
        for (auto c : counts) {
            s += c;
        }
        return s;
    }
    void add(double v) {
        if (v < lo) {
            ++underflow;
            return;
        }
        const auto k = static_cast<std::size_t>((v - lo) / width());
        if (k >= counts.size()) {
            ++overflow;
        } else {
            ++counts[k];
        }
    }
};

struct InterspikeResult {
    /// Durations between successive transitions, in periods.
    Histogram intervals;
    /// Phase (mod 1) of departures from each well.
    std::array<Histogram, 2> departure_phase;
    std::vector<double> durations;
};

/// The reduced two-state chain with hazards exp(-D_i(t/T)/eps).
///
/// All integrals are taken in phase units u = t/T, where the hazard reads
/// exp((mu - D_i(u))/eps). Per-panel integrals over one period are cached
/// (scaled by exp(-(mu - inf D_i)/eps)) so that partial sums never cancel.
class TwoStateChain {
  public:
    TwoStateChain(DepthProfile profile, ChainParams params)
        : profile_(std::move(profile)), params_(params) {
        if (!(params_.epsilon > 0.0) || !std::isfinite(params_.epsilon)) {
            throw DomainError("epsilon must be positive");
        }
        require_finite(params_.mu, "mu");
        require_finite(params_.h, "window half-width");
        if (params_.h < 0.0) {
            throw WindowError("window half-width must be non-negative");
        }
        params_.panels = std::max<std::size_t>(params_.panels, 16);
        for (Well w : kWells) {
            build_cache(w);
        }
    }

    const ChainParams& params() const noexcept { return params_; }
    const DepthProfile& profile() const noexcept { return profile_; }

    /// T = exp(mu/eps); throws if it overflows.
    double period() const {
        const double T = std::exp(params_.mu / params_.epsilon);
        if (!std::isfinite(T)) {
            throw DomainError("period exp(mu/eps) overflows");
        }
        return T;
    }

    HazardFunction hazard(Well w) const {
        return HazardFunction(profile_, w, params_.epsilon, period());
    }

    /// Lambda over the phase interval [u0, u1] (u1 >= u0).
    double integrated_hazard_phase(Well w, double u0, double u1) const {
        const Cache& c = cache(w);
        return std::exp(c.log_scale) * scaled_segment(w, u0, u1);
    }

    /// Lambda(t) = int_0^t exp(-D_i(s/T)/eps) ds for real time t.
    double integrated_hazard(Well w, double t) const {
        require_finite(t, "time");
        if (t < 0.0) {
            throw DomainError("integrated hazard needs t >= 0");
        }
        return integrated_hazard_phase(w, 0.0, t / period());
    }

    /// exp(-Lambda(t)) for real time t.
    double survival(Well w, double t) const { return std::exp(-integrated_hazard(w, t)); }

    /// P(first transition phase in [u1, u2]) for the chain started in w at 0.
    double window_probability(Well w, double u1, double u2) const {
        if (!(u2 >= u1) || u1 < 0.0) {
            throw WindowError("window must satisfy 0 <= u1 <= u2");
        }
        if (!std::isfinite(u2)) {
            return std::exp(-integrated_hazard_phase(w, 0.0, u1));
        }
        const double l1 = integrated_hazard_phase(w, 0.0, u1);
        const double inside = integrated_hazard_phase(w, u1, u2);
        return std::exp(-l1) * -std::expm1(-inside);
    }

    /// 1 - window_probability, evaluated as (1 - e^{-L1}) + e^{-L2}.
    double window_failure(Well w, double u1, double u2) const {
        const double l1 = integrated_hazard_phase(w, 0.0, u1);
        const double l2 = l1 + integrated_hazard_phase(w, u1, u2);
        return -std::expm1(-l1) + std::exp(-l2);
    }

    /// Window [a_mu^i - h, a_mu^i + h], clipped at phase 0.
    std::array<double, 2> window(Well w) const {
        const double a = a_mu(profile_, w, params_.mu, 0.0);
        if (!std::isfinite(a)) {
            std::ostringstream msg;
            msg << "a_mu is infinite for well " << static_cast<int>(w) << " at mu = " << params_.mu;
            throw WindowError(msg.str());
        }
        return {std::max(0.0, a - params_.h), a + params_.h};
    }

    double window_probability(Well w) const {
        const auto win = window(w);
        return window_probability(w, win[0], win[1]);
    }

    /// N(eps, mu), its failure probability and rate eps ln(1 - N).
    ChainQuality n_quality() const {
        ChainQuality q;
        q.epsilon = params_.epsilon;
        q.mu = params_.mu;
        q.h = params_.h;
        q.failure = -1.0;
        for (Well w : kWells) {
            const auto k = static_cast<std::size_t>(index(w));
            const auto win = window(w);
            q.transition[k] = win[1] - params_.h;
            q.window[k] = window_probability(w, win[0], win[1]);
            q.window_failure[k] = window_failure(w, win[0], win[1]);
            if (q.window_failure[k] > q.failure) {
                q.failure = q.window_failure[k];
                q.limiting = w;
            }
        }
        q.n_exact = std::min(q.window[0], q.window[1]);
        q.rate = params_.epsilon * std::log(q.failure);
        q.theory = quality_exponent(profile_, params_.mu, params_.h).value;
        return q;
    }

    /// Phase u >= start with Lambda(start, u) = target (inverse transform).
    double transition_phase_for(Well w, double target, double start = 0.0) const {
        require_finite(target, "exponential draw");
        require_finite(start, "start phase");
        if (target <= 0.0) {
            return start;
        }
        const Cache& c = cache(w);
        double remaining = target * std::exp(-c.log_scale);
        if (!std::isfinite(remaining) || remaining <= 0.0) {
            // hazard overwhelmingly large: the transition is immediate
            return start;
        }
        const auto n = static_cast<std::int64_t>(c.panels.size());
        const double width = 1.0 / static_cast<double>(n);
        std::int64_t k = panel_index(start, width) + 1;
        const double head = scaled_partial(w, start, panel_start(k, width));
        if (head >= remaining) {
            return invert_in_panel(w, start, panel_start(k, width), remaining);
        }
        remaining -= head;
        if (remaining >= c.period_total) {
            const double periods = std::floor(remaining / c.period_total);
            remaining -= periods * c.period_total;
            k += static_cast<std::int64_t>(periods) * n;
        }
        for (std::int64_t guard = 0; guard <= 2 * n + 2; ++guard, ++k) {
            const double piece = c.panels[static_cast<std::size_t>(wrap(k, n))];
            if (piece >= remaining) {
                return invert_in_panel(w, panel_start(k, width), panel_start(k + 1, width),
                                       remaining);
            }
            remaining -= piece;
        }
        return panel_start(k, width);
    }

    /// Exact-in-distribution transition phase from an exponential draw.
    template <class Rng>
    double sample_transition_phase(Well w, Rng& rng, double start = 0.0) const {
        std::exponential_distribution<double> exp1(1.0);
        return transition_phase_for(w, exp1(rng), start);
    }

    /// Real transition time for a single seeded draw.
    double sample_transition_time(Well w, std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        return sample_transition_phase(w, rng) * period();
    }

    /// Alternating transitions started in well -1 at phase 0.
    InterspikeResult interspike_histogram(std::size_t n_transitions, std::uint64_t seed,
                                          double max_periods = 8.0,
                                          std::size_t bins_per_period = 50) const {
        if (n_transitions == 0) {
            throw DomainError("need at least one transition");
        }
        InterspikeResult r;
        const auto bins = static_cast<std::size_t>(std::ceil(max_periods)) * bins_per_period;
        r.intervals = Histogram(0.0, std::ceil(max_periods), bins);
        r.departure_phase = {Histogram(0.0, 1.0, bins_per_period),
                             Histogram(0.0, 1.0, bins_per_period)};
        std::mt19937_64 rng(derive_seed(seed, 0xC4A1u));
        Well state = Well::minus;
        double u = 0.0;
        r.durations.reserve(n_transitions);
        for (std::size_t k = 0; k < n_transitions; ++k) {
            const double next = sample_transition_phase(state, rng, u);
            r.durations.push_back(next - u);
            r.intervals.add(next - u);
            r.departure_phase[static_cast<std::size_t>(index(state))].add(reduce_phase(next));
            u = next;
            state = opposite(state);
        }
        return r;
    }

  private:
    struct Cache {
        std::vector<double> panels; // scaled integral of each panel
        std::vector<double> prefix; // prefix[k] = sum of panels[0..k)
        double period_total = 0.0;
        double log_scale = 0.0; // (mu - inf D)/eps
        double floor_depth = 0.0;
    };

    const Cache& cache(Well w) const { return caches_[static_cast<std::size_t>(index(w))]; }

    double scaled_integrand(Well w, double u) const {
        const Cache& c = cache(w);
        return std::exp((c.floor_depth - profile_(w, u)) / params_.epsilon);
    }

    double scaled_partial(Well w, double a, double b) const {
        if (b <= a) {
            return 0.0;
        }
        auto f = [&](double u) { return scaled_integrand(w, u); };
        return adaptive_simpson(f, a, b, params_.tolerance, 2).value;
    }

    static std::int64_t panel_index(double u, double width) {
        return static_cast<std::int64_t>(std::floor(u / width));
    }
    static double panel_start(std::int64_t k, double width) {
        return static_cast<double>(k) * width;
    }
    static std::int64_t wrap(std::int64_t k, std::int64_t n) { return ((k % n) + n) % n; }

    /// Sum of scaled panel integrals over [a, b], all terms positive.
    double scaled_segment(Well w, double a, double b) const {
        require_finite(a, "phase");
        require_finite(b, "phase");
        if (b <= a) {
            return 0.0;
        }
        const Cache& c = cache(w);
        const auto n = static_cast<std::int64_t>(c.panels.size());
        const double width = 1.0 / static_cast<double>(n);
        const std::int64_t first = panel_index(a, width) + 1;
        const std::int64_t last = panel_index(b, width);
        if (last <= first) {
            return scaled_partial(w, a, b);
        }
        double total = scaled_partial(w, a, panel_start(first, width));
        const std::int64_t count = last - first;
        total += static_cast<double>(count / n) * c.period_total;
        std::int64_t k = wrap(first, n);
        std::int64_t left = count % n;
        while (left > 0) {
            const std::int64_t run = std::min(left, n - k);
            total += c.prefix[static_cast<std::size_t>(k + run)] - c.prefix[static_cast<std::size_t>(k)];
            left -= run;
            k = (k + run) % n;
        }
        total += scaled_partial(w, panel_start(last, width), b);
        return total;
    }

    double invert_in_panel(Well w, double a, double b, double target) const {
        double lo = a;
        double hi = b;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi || hi - lo <= 1e-10 * std::abs(hi)) {
                break;
            }
            if (scaled_partial(w, a, mid) < target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }

    void build_cache(Well w) {
        Cache& c = caches_[static_cast<std::size_t>(index(w))];
        c.floor_depth = profile_.extrema(w).inf;
        c.log_scale = (params_.mu - c.floor_depth) / params_.epsilon;
        const std::size_t n = params_.panels;
        const double width = 1.0 / static_cast<double>(n);
        c.panels.resize(n);
        c.prefix.assign(n + 1, 0.0);
        auto f = [&](double u) { return scaled_integrand(w, u); };
        for (std::size_t k = 0; k < n; ++k) {
            const double a = width * static_cast<double>(k);
            const double b = k + 1 == n ? 1.0 : width * static_cast<double>(k + 1);
            c.panels[k] = adaptive_simpson(f, a, b, params_.tolerance, 2).value;
            c.prefix[k + 1] = c.prefix[k] + c.panels[k];
        }
        c.period_total = c.prefix[n];
    }

    DepthProfile profile_;
    ChainParams params_;
    std::array<Cache, 2> caches_{};
};

} // namespace stochres
