#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "stochres/analysis.hpp"
#include "stochres/errors.hpp"
#include "stochres/numerics.hpp"
#include "stochres/potential.hpp"
#include "stochres/rng.hpp"

namespace stochres {

struct SimParams {
    double epsilon = 0.2;
    double mu = 0.3;
    /// Window half-width in periods.
    double h = 0.05;
    Well start_well = Well::minus;
    std::optional<double> start_position;
    /// Euler step in real time; 0 selects min(eps, 1) / (10 L).
    double step = 0.0;
    /// Cutoff in periods; defaults to a_mu + 2h of the start well.
    std::optional<double> horizon;
    std::size_t samples = 1000;
    std::uint64_t seed = 1;
    /// Runaway bound; 0 selects K1 + 2.
    double x_max = 0.0;
    std::uint64_t step_budget = 100'000'000;
    unsigned workers = 1;
    double confidence = 0.95;
};

struct SimState {
    double time = 0.0;
    double position = 0.0;
};

namespace detail {

inline double euler_update(double x, double drift, double dt, double diffusion, double noise) {
    return x - drift * dt + diffusion * noise;
}

} // namespace detail

/// One Euler-Maruyama step of dX = -dU/dx(t/T, X) dt + sqrt(2 eps) dW.
inline SimState step_euler(const PotentialSpec& spec, SimState s, double epsilon, double period,
                           double dt, double noise) {
    const double g = eval_gradient(spec, s.time / period, s.position);
    const double x = detail::euler_update(s.position, g, dt, std::sqrt(2.0 * epsilon * dt), noise);
    if (!std::isfinite(x)) {
        throw BlowUpError("Euler step produced a non-finite position", s.time, s.position);
    }
    return {s.time + dt, x};
}

/// Outcome of one simulated path.
struct TransitionSample {
    /// First hitting phase of the opposite minimum, in periods.
    std::optional<double> hit_phase;
    bool in_window = false;
    bool truncated = false;
    bool escaped = false;
    /// Truncation came from the step budget rather than the horizon.
    bool budget_exhausted = false;
    /// Furthest position reached away from the target (min for a start at
    /// -1, max for a start at +1).
    double outer_extreme = 0.0;
};

struct WellCounts {
    std::size_t n = 0;
    std::size_t hit_window = 0;
    std::size_t hit_early = 0;
    std::size_t hit_late = 0;
    std::size_t truncated = 0;
    std::size_t escaped = 0;
    double transition = 0.0;
    double fraction = 0.0;
    Interval ci;

    std::size_t hits() const { return hit_window + hit_early + hit_late; }
    std::size_t usable() const { return n - escaped; }
};

struct RateEstimate {
    double epsilon = 0.0;
    double mu = 0.0;
    double h = 0.0;
    std::size_t n = 0;
    std::array<WellCounts, 2> wells{};
    double m_hat = 0.0;
    Interval ci;
    double rate_hat = 0.0;
    double f_theory = 0.0;
    Well limiting = Well::minus;
    /// M_hat is 0 or 1, so the interval touches the boundary.
    bool degenerate_ci = false;

    const WellCounts& of(Well w) const { return wells[static_cast<std::size_t>(index(w))]; }
    std::size_t n_truncated() const { return wells[0].truncated + wells[1].truncated; }
    std::size_t n_escaped() const { return wells[0].escaped + wells[1].escaped; }
};

struct RateCell {
    std::size_t eps_index = 0;
    std::size_t mu_index = 0;
    double epsilon = 0.0;
    double mu = 0.0;
    std::optional<RateEstimate> estimate;
    std::string error;
};

/// Monte Carlo driver for the periodically forced diffusion on the time
/// scale T = exp(mu / eps).
class Diffusion {
  public:
    explicit Diffusion(PotentialSpec spec)
        : spec_(std::move(spec)), profile_(DepthProfile::from_potential(spec_)),
          lipschitz_(drift_lipschitz_bound(spec_)) {}

    Diffusion(PotentialSpec spec, DepthProfile profile, double lipschitz)
        : spec_(std::move(spec)), profile_(std::move(profile)), lipschitz_(lipschitz) {
        if (!(lipschitz_ > 0.0)) {
            throw DomainError("drift Lipschitz bound must be positive");
        }
    }

    const PotentialSpec& spec() const noexcept { return spec_; }
    const DepthProfile& profile() const noexcept { return profile_; }
    double lipschitz() const noexcept { return lipschitz_; }

    double default_step(double epsilon) const {
        return std::min(epsilon, 1.0) / (10.0 * lipschitz_);
    }

    /// Simulates sample `sample_index` of the ensemble started in
    /// `params.start_well`.
    TransitionSample simulate_first_hit(const SimParams& params,
                                        std::uint64_t sample_index = 0) const {
        const Resolved r = resolve(params, false);
        return run_path(r, params.start_well, sample_index);
    }

    /// All samples of one well's ensemble, in sample order.
    std::vector<TransitionSample> simulate_ensemble(const SimParams& params, Well start) const {
        SimParams p = params;
        p.start_well = start;
        const Resolved r = resolve(p, false);
        std::vector<TransitionSample> out(params.samples);
        const unsigned workers = std::max(1u, params.workers);
        auto work = [&](unsigned w) {
            for (std::size_t i = w; i < out.size(); i += workers) {
                out[i] = run_path(r, start, i);
            }
        };
        if (workers == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errors(workers);
            for (unsigned w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        work(w);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
            for (auto& t : pool) {
                t.join();
            }
            for (auto& e : errors) {
                if (e) {
                    std::rethrow_exception(e);
                }
            }
        }
        return out;
    }

    /// M_hat = min over wells of the in-window fraction, with Wilson
    /// interval and rate eps ln(1 - M_hat).
    RateEstimate estimate_window_probability(const SimParams& params) const {
        if (params.samples < 100) {
            throw DomainError("need at least 100 samples per well");
        }
        RateEstimate est;
        est.epsilon = params.epsilon;
        est.mu = params.mu;
        est.h = params.h;
        est.n = params.samples;
        est.f_theory = quality_exponent(profile_, params.mu, params.h).value;
        double best = kInf;
        for (Well w : kWells) {
            SimParams p = params;
            p.start_well = w;
            p.start_position.reset();
            const Resolved r = resolve(p, true);
            const auto samples = simulate_ensemble(p, w);
            WellCounts& c = est.wells[static_cast<std::size_t>(index(w))];
            c.n = samples.size();
            c.transition = r.transition;
            for (const auto& s : samples) {
                if (s.escaped) {
                    ++c.escaped;
                } else if (s.truncated) {
                    ++c.truncated;
                } else if (s.in_window) {
                    ++c.hit_window;
                } else if (*s.hit_phase < r.transition) {
                    ++c.hit_early;
                } else {
                    ++c.hit_late;
                }
            }
            if (c.hits() == 0) {
                std::ostringstream msg;
                msg << "no sample started in well " << static_cast<int>(w) << " reached the other well ("
                    << c.truncated << " truncated, " << c.escaped << " escaped)";
                throw DegenerateEstimate(msg.str());
            }
            c.fraction = static_cast<double>(c.hit_window) / static_cast<double>(c.usable());
            c.ci = wilson_interval(c.hit_window, c.usable(), params.confidence);
            if (c.fraction < best) {
                best = c.fraction;
                est.limiting = w;
            }
        }
        est.m_hat = best;
        est.ci = est.of(est.limiting).ci;
        est.rate_hat = params.epsilon * std::log1p(-est.m_hat);
        est.degenerate_ci = est.m_hat == 0.0 || est.m_hat == 1.0;
        return est;
    }

    /// Independent estimates over an (eps, mu) grid; per-cell seeds are
    /// derived from (base seed, eps index, mu index).
    std::vector<RateCell> rate_curve(const std::vector<double>& eps_list,
                                     const std::vector<double>& mu_list, double h,
                                     const SimParams& base) const {
        std::vector<RateCell> cells;
        for (std::size_t i = 0; i < eps_list.size(); ++i) {
            for (std::size_t j = 0; j < mu_list.size(); ++j) {
                RateCell cell;
                cell.eps_index = i;
                cell.mu_index = j;
                cell.epsilon = eps_list[i];
                cell.mu = mu_list[j];
                SimParams p = base;
                p.epsilon = eps_list[i];
                p.mu = mu_list[j];
                p.h = h;
                p.seed = derive_seed(base.seed, {i, j});
                try {
                    cell.estimate = estimate_window_probability(p);
                } catch (const Error& e) {
                    cell.error = e.what();
                }
                cells.push_back(std::move(cell));
            }
        }
        return cells;
    }

  private:
    struct Resolved {
        double epsilon = 0.0;
        double period = 0.0;
        double dt = 0.0;
        double diffusion = 0.0;
        double start = 0.0;
        double horizon = 0.0;
        double transition = kInf;
        double h = 0.0;
        double x_max = 0.0;
        std::uint64_t budget = 0;
        std::uint64_t seed = 0;
    };

    Resolved resolve(const SimParams& p, bool need_window) const {
        if (!(p.epsilon > 0.0) || !std::isfinite(p.epsilon)) {
            throw DomainError("epsilon must be positive");
        }
        require_finite(p.mu, "mu");
        Resolved r;
        r.epsilon = p.epsilon;
        r.period = std::exp(p.mu / p.epsilon);
        if (!std::isfinite(r.period)) {
            throw DomainError("period exp(mu/eps) overflows");
        }
        r.dt = p.step > 0.0 ? p.step : default_step(p.epsilon);
        if (!(r.dt > 0.0) || r.dt > p.epsilon / (10.0 * lipschitz_) * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "step " << r.dt << " exceeds eps/(10 L) = " << p.epsilon / (10.0 * lipschitz_);
            throw DomainError(msg.str());
        }
        r.diffusion = std::sqrt(2.0 * p.epsilon * r.dt);
        r.start = p.start_position.value_or(position(p.start_well));
        require_finite(r.start, "start position");
        const double k1 = spec_.growth().k1;
        r.x_max = p.x_max > 0.0 ? p.x_max : k1 + 2.0;
        if (r.x_max < k1 + 2.0) {
            throw DomainError("safeguard X_max must be at least K1 + 2");
        }
        r.h = p.h;
        r.transition = a_mu(profile_, p.start_well, p.mu, 0.0);
        if (need_window && !std::isfinite(r.transition)) {
            std::ostringstream msg;
            msg << "a_mu is infinite for well " << static_cast<int>(p.start_well) << " at mu = " << p.mu;
            throw WindowError(msg.str());
        }
        if (p.horizon) {
            if (*p.horizon < 0.0) {
                throw DomainError("horizon must be non-negative");
            }
            r.horizon = *p.horizon;
        } else {
            if (!std::isfinite(r.transition)) {
                throw WindowError("default horizon needs a finite a_mu");
            }
            r.horizon = r.transition + 2.0 * p.h;
        }
        r.budget = p.step_budget;
        r.seed = p.seed;
        return r;
    }

    TransitionSample run_path(const Resolved& r, Well start, std::uint64_t sample_index) const {
        std::mt19937_64 rng(derive_seed(r.seed, {static_cast<std::uint64_t>(index(start)), sample_index}));
        std::normal_distribution<double> normal(0.0, 1.0);
        TransitionSample out;
        const double target = position(opposite(start));
        const double dir = target > position(start) ? 1.0 : -1.0;
        double x = r.start;
        out.outer_extreme = x;
        auto record_hit = [&](double phase) {
            out.hit_phase = phase;
            out.in_window = phase >= r.transition - r.h && phase <= r.transition + r.h;
        };
        if (dir * (x - target) >= 0.0) {
            record_hit(0.0);
            return out;
        }
        const double t_end = r.horizon * r.period;
        const double wanted = std::ceil(t_end / r.dt);
        const auto steps = static_cast<std::uint64_t>(std::min(wanted, static_cast<double>(r.budget)));
        for (std::uint64_t k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) * r.dt;
            const double g = spec_.raw_gradient(reduce_phase(t / r.period), x);
            const double next = detail::euler_update(x, g, r.dt, r.diffusion, normal(rng));
            if (!std::isfinite(next)) {
                throw BlowUpError("Euler step produced a non-finite position", t, x);
            }
            if (dir * (next - target) >= 0.0) {
                const double t_hit = t + r.dt * (target - x) / (next - x);
                if (t_hit > t_end) {
                    out.truncated = true;
                    return out;
                }
                record_hit(t_hit / r.period);
                return out;
            }
            if (std::abs(next) > r.x_max) {
                out.escaped = true;
                return out;
            }
            out.outer_extreme = dir > 0.0 ? std::min(out.outer_extreme, next)
                                          : std::max(out.outer_extreme, next);
            x = next;
        }
        out.truncated = true;
        out.budget_exhausted = wanted > static_cast<double>(r.budget);
        return out;
    }

    PotentialSpec spec_;
    DepthProfile profile_;
    double lipschitz_;
};

} // namespace stochres
