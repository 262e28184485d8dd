#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stochres/errors.hpp"
#include "stochres/numerics.hpp"
#include "stochres/potential.hpp"

namespace stochres {

/// First phase s' >= s at which a well's depth has dropped to mu.
struct TransitionPhase {
    double phase = kInf;
    /// False when the level mu is only touched (tangential contact).
    bool transversal = true;

    bool finite() const { return std::isfinite(phase); }
};

/// a_mu^i(s) = inf{ t >= s : D_i(t) <= mu }, with tangency diagnostics.
inline TransitionPhase transition_phase(const DepthProfile& profile, Well well, double mu,
                                        double s = 0.0) {
    require_finite(mu, "time-scale parameter mu");
    require_finite(s, "start phase");
    if (mu < 0.0) {
        throw DomainError("mu must be non-negative");
    }
    auto D = [&](double t) { return profile(well, t); };
    if (D(s) <= mu) {
        return {s, true};
    }
    const DepthExtrema& ex = profile.extrema(well);
    const double level_tol = 1e-12 * (1.0 + std::abs(ex.inf));
    if (mu < ex.inf - level_tol) {
        return {kInf, true};
    }
    // first occurrence of the minimum after s
    double t_inf = s + reduce_phase(ex.arg_inf - s);
    if (t_inf <= s) {
        t_inf += 1.0;
    }
    if (mu <= ex.inf + level_tol) {
        return {t_inf, false};
    }
    auto g = [&](double t) { return D(t) - mu; };
    const std::size_t n = profile.grid();
    const double dt = 1.0 / static_cast<double>(n);
    double prev = s;
    for (std::size_t k = 1; k <= n; ++k) {
        const double cur = s + dt * static_cast<double>(k);
        // the minimum may sit between grid points
        if (t_inf > prev && t_inf < cur && g(t_inf) <= 0.0) {
            const double a = bisect_sign_change(g, prev, t_inf);
            return {a, true};
        }
        if (g(cur) <= 0.0) {
            const double a = bisect_sign_change(g, prev, cur);
            const double step = 1e-6;
            const double slope = (D(a + step) - D(a - step)) / (2.0 * step);
            const bool transversal = std::abs(slope) > 1e-6 * (1.0 + std::abs(mu));
            return {a, transversal};
        }
        prev = cur;
    }
    return {t_inf, false};
}

/// Convenience wrapper returning only the phase.
inline double a_mu(const DepthProfile& profile, Well well, double mu, double s = 0.0) {
    return transition_phase(profile, well, mu, s).phase;
}

struct ResonanceBounds {
    double lower = 0.0;
    double lower_phase = 0.0;
    Well lower_well = Well::minus;
    double upper = 0.0;
    double upper_phase = 0.0;
    bool empty = false;

    bool contains(double mu) const { return !empty && mu > lower && mu < upper; }
};

/// I_R = ] max_i inf_t D_i(t), inf_t max_i D_i(t) [.
inline ResonanceBounds resonance_interval(const DepthProfile& profile) {
    ResonanceBounds b;
    const auto& em = profile.extrema(Well::minus);
    const auto& ep = profile.extrema(Well::plus);
    if (em.inf >= ep.inf) {
        b.lower = em.inf;
        b.lower_phase = em.arg_inf;
        b.lower_well = Well::minus;
    } else {
        b.lower = ep.inf;
        b.lower_phase = ep.arg_inf;
        b.lower_well = Well::plus;
    }
    auto envelope = [&](double t) {
        return std::max(profile(Well::minus, t), profile(Well::plus, t));
    };
    const std::size_t n = profile.grid();
    const double dt = 1.0 / static_cast<double>(n);
    std::size_t best = 0;
    double best_val = kInf;
    for (std::size_t k = 0; k < n; ++k) {
        const double v = envelope(dt * static_cast<double>(k));
        if (v < best_val) {
            best_val = v;
            best = k;
        }
    }
    const double t0 = dt * static_cast<double>(best);
    Minimum m = golden_section_min(envelope, t0 - dt, t0 + dt, 1e-14);
    if (m.value < best_val) {
        b.upper = m.value;
        b.upper_phase = reduce_phase(m.x);
    } else {
        b.upper = best_val;
        b.upper_phase = t0;
    }
    b.empty = !(b.lower < b.upper);
    return b;
}

/// Per-well range ] inf_t D_i, sup_t D_i [ of attainable depths.
struct DepthRange {
    std::array<Interval, 2> wells{};

    const Interval& of(Well w) const { return wells[static_cast<std::size_t>(index(w))]; }
    bool degenerate(Well w) const { return !(of(w).lo < of(w).hi); }
};

inline DepthRange depth_range(const DepthProfile& profile) {
    DepthRange r;
    for (Well w : kWells) {
        const auto& e = profile.extrema(w);
        r.wells[static_cast<std::size_t>(index(w))] = {e.inf, e.sup};
    }
    return r;
}

struct QualityExponent {
    double mu = 0.0;
    double h = 0.0;
    double value = 0.0;
    Well well = Well::plus;
    /// a_mu^i per well.
    std::array<double, 2> transition{};
    /// Wells whose window starts before phase 0 (evaluated periodically).
    std::array<bool, 2> clipped{};
    bool transversal = true;
};

/// F(mu, h) = max_i { mu - D_i(a_mu^i - h) }.
///
/// Windows that begin before phase 0 are evaluated on the periodic
/// extension of D and flagged as clipped. A window error is raised only
/// when no well admits a window inside [0, a_mu^i].
inline QualityExponent quality_exponent(const DepthProfile& profile, double mu, double h) {
    require_finite(h, "window half-width");
    if (h < 0.0) {
        throw WindowError("window half-width must be non-negative");
    }
    QualityExponent q;
    q.mu = mu;
    q.h = h;
    q.value = -kInf;
    bool any_inside = false;
    for (Well w : kWells) {
        const std::size_t k = static_cast<std::size_t>(index(w));
        const TransitionPhase a = transition_phase(profile, w, mu, 0.0);
        if (!a.finite()) {
            std::ostringstream msg;
            msg << "mu = " << mu << " lies below the depth range of well " << static_cast<int>(w);
            throw DomainError(msg.str());
        }
        q.transition[k] = a.phase;
        q.transversal = q.transversal && a.transversal;
        q.clipped[k] = a.phase - h < 0.0;
        any_inside = any_inside || (h == 0.0 || h < a.phase);
        const double v = mu - profile(w, a.phase - h);
        if (v > q.value) {
            q.value = v;
            q.well = w;
        }
    }
    if (!any_inside) {
        std::ostringstream msg;
        msg << "window half-width " << h << " is not below a_mu of any well (a_-1 = "
            << q.transition[0] << ", a_+1 = " << q.transition[1] << ")";
        throw WindowError(msg.str());
    }
    return q;
}

struct ResonancePointH {
    double h = 0.0;
    double mu = 0.0;
    double value = 0.0;
    Well well = Well::plus;
    bool at_lower = false;
    bool at_upper = false;

    bool interior() const { return !at_lower && !at_upper; }
};

/// Global minimiser of mu -> F(mu, h) over [lo, hi]: coarse grid, then
/// golden-section refinement of the best cell.
inline ResonancePointH resonance_point_h(const DepthProfile& profile, double h, double lo,
                                         double hi, std::size_t grid = 512) {
    if (!(lo < hi)) {
        throw DomainError("empty search interval for the resonance point");
    }
    grid = std::max<std::size_t>(grid, 3);
    // a mu whose window fits no well cannot be the minimiser
    auto F = [&](double mu) {
        try {
            return quality_exponent(profile, mu, h).value;
        } catch (const WindowError&) {
            return kInf;
        }
    };
    const double step = (hi - lo) / static_cast<double>(grid - 1);
    std::size_t best = 0;
    double best_val = kInf;
    for (std::size_t k = 0; k < grid; ++k) {
        const double mu = k + 1 == grid ? hi : lo + step * static_cast<double>(k);
        const double v = F(mu);
        if (v < best_val) {
            best_val = v;
            best = k;
        }
    }
    if (!std::isfinite(best_val)) {
        std::ostringstream msg;
        msg << "window half-width " << h << " fits no well anywhere in [" << lo << ", " << hi << "]";
        throw WindowError(msg.str());
    }
    ResonancePointH r;
    r.h = h;
    const double a = lo + step * static_cast<double>(best == 0 ? 0 : best - 1);
    const double b = std::min(hi, lo + step * static_cast<double>(best + 1));
    Minimum m = golden_section_min(F, a, b, 1e-12 * (1.0 + std::abs(hi)));
    if (best_val < m.value) {
        m = {best + 1 == grid ? hi : lo + step * static_cast<double>(best), best_val};
    }
    r.mu = m.x;
    const QualityExponent q = quality_exponent(profile, r.mu, h);
    r.value = q.value;
    r.well = q.well;
    const double edge = 1e-9 * (1.0 + std::abs(hi - lo));
    r.at_lower = r.mu - lo <= edge && best == 0;
    r.at_upper = hi - r.mu <= edge && best + 1 == grid;
    return r;
}

struct ResonancePointOptions {
    std::vector<double> h_sequence{0.08, 0.04, 0.02, 0.01, 0.005};
    /// Second-difference step for the inflection search.
    double curvature_step = 1e-3;
    std::size_t branch_grid = 2048;
    std::size_t search_grid = 512;
    Well well = Well::plus;
};

struct ResonancePoint {
    enum class Method { inflection, extrapolation };

    double mu_r = 0.0;
    Method method = Method::extrapolation;
    std::optional<double> inflection;
    std::optional<double> inflection_phase;
    std::string inflection_note;
    std::optional<double> extrapolated;
    double observed_order = 0.0;
    std::vector<ResonancePointH> samples;

    /// |inflection - extrapolated| when both are available.
    std::optional<double> gap() const {
        if (inflection && extrapolated) {
            return std::abs(*inflection - *extrapolated);
        }
        return std::nullopt;
    }
};

inline const char* to_string(ResonancePoint::Method m) {
    return m == ResonancePoint::Method::inflection ? "inflection" : "extrapolation";
}

namespace detail {

/// Zero crossings of the second difference of D on its decreasing branch.
inline std::vector<double> branch_inflections(const DepthProfile& profile, Well well,
                                              double delta, std::size_t n) {
    const auto& e = profile.extrema(well);
    double start = e.arg_sup;
    double end = e.arg_inf;
    if (end <= start) {
        end += 1.0;
    }
    auto curvature = [&](double t) {
        return profile(well, t + delta) - 2.0 * profile(well, t) + profile(well, t - delta);
    };
    // stay clear of the extrema, where the stencil straddles the turning point
    const double margin = 2.0 * delta;
    const double a = start + margin;
    const double b = end - margin;
    std::vector<double> roots;
    if (!(a < b)) {
        return roots;
    }
    const double step = (b - a) / static_cast<double>(n);
    double t_prev = a;
    double c_prev = curvature(a);
    for (std::size_t k = 1; k <= n; ++k) {
        const double t = k == n ? b : a + step * static_cast<double>(k);
        const double c = curvature(t);
        if ((c_prev < 0.0 && c >= 0.0) || (c_prev > 0.0 && c <= 0.0)) {
            roots.push_back(bisect_sign_change(curvature, t_prev, t));
        }
        if (c != 0.0) {
            t_prev = t;
            c_prev = c;
        }
    }
    return roots;
}

} // namespace detail

/// mu_R = lim_{h -> 0} mu_R(h), by the inflection criterion and by
/// Richardson extrapolation of mu_R(h).
inline ResonancePoint resonance_point(const DepthProfile& profile,
                                      const ResonancePointOptions& opt = {}) {
    ResonancePoint rp;
    const auto& e = profile.extrema(opt.well);
    const double span = e.sup - e.inf;
    if (span > 1e-12 * (1.0 + e.sup)) {
        const auto roots =
            detail::branch_inflections(profile, opt.well, opt.curvature_step, opt.branch_grid);
        if (roots.size() == 1) {
            rp.inflection_phase = reduce_phase(roots.front());
            rp.inflection = profile(opt.well, roots.front());
        } else if (roots.empty()) {
            rp.inflection_note = "no curvature sign change on the decreasing branch";
        } else {
            std::ostringstream msg;
            msg << "curvature changes sign " << roots.size()
                << " times on the decreasing branch, at phases";
            for (double r : roots) {
                msg << ' ' << reduce_phase(r);
            }
            throw InflectionError(msg.str());
        }
    } else {
        rp.inflection_note = "depth is constant";
    }

    const ResonanceBounds bounds = resonance_interval(profile);
    if (!bounds.empty && !opt.h_sequence.empty()) {
        const double shrink = 1e-3 * (bounds.upper - bounds.lower);
        for (double h : opt.h_sequence) {
            rp.samples.push_back(resonance_point_h(profile, h, bounds.lower + shrink,
                                                   bounds.upper - shrink, opt.search_grid));
        }
        const std::size_t n = rp.samples.size();
        if (n >= 3) {
            const auto& s1 = rp.samples[n - 3];
            const auto& s2 = rp.samples[n - 2];
            const auto& s3 = rp.samples[n - 1];
            const double d12 = s1.mu - s2.mu;
            const double d23 = s2.mu - s3.mu;
            const double ratio = s2.h / s3.h;
            if (d23 != 0.0 && d12 / d23 > 0.0) {
                rp.observed_order = std::log(d12 / d23) / std::log(s1.h / s2.h);
                const double factor = std::pow(ratio, rp.observed_order) - 1.0;
                rp.extrapolated = factor > 0.0 ? s3.mu + (s3.mu - s2.mu) / factor : s3.mu;
            } else {
                rp.extrapolated = s3.mu;
            }
        } else {
            rp.extrapolated = rp.samples.back().mu;
        }
    }
    if (rp.inflection) {
        rp.mu_r = *rp.inflection;
        rp.method = ResonancePoint::Method::inflection;
    } else if (rp.extrapolated) {
        rp.mu_r = *rp.extrapolated;
        rp.method = ResonancePoint::Method::extrapolation;
    } else {
        throw InflectionError("resonance point unavailable: " + rp.inflection_note +
                              " and the resonance interval is empty");
    }
    return rp;
}

} // namespace stochres
