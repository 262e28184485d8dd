#pragma once

// Small numerical toolbox shared by the modules: phase reduction, adaptive
// Simpson quadrature, bracketed root finding, golden-section search and the
// few statistics (Wilson interval, Kolmogorov-Smirnov) the estimators need.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "stochres/errors.hpp"

namespace stochres {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Reduce a time phase to [0, 1).
inline double reduce_phase(double t) {
    double r = t - std::floor(t);
    // t slightly below an integer can round up to exactly 1
    return r >= 1.0 ? 0.0 : r;
}

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw DomainError(std::string("non-finite ") + what);
    }
}

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    std::size_t evaluations = 0;
};

namespace detail {

struct SimpsonPanel {
    double a, fa, m, fm, b, fb, whole;
};

template <class F>
double simpson_recurse(F& f, const SimpsonPanel& p, double tol, int depth,
                       QuadratureResult& acc, bool& converged) {
    const double lm = 0.5 * (p.a + p.m);
    const double rm = 0.5 * (p.m + p.b);
    const double flm = f(lm);
    const double frm = f(rm);
    acc.evaluations += 2;
    const double left = (p.m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
    const double right = (p.b - p.m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
    const double diff = left + right - p.whole;
    if (!std::isfinite(diff)) {
        converged = false;
        return left + right;
    }
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol || lm <= p.a || rm >= p.b) {
        if (std::abs(diff) > 15.0 * tol) {
            converged = false;
        }
        acc.error += std::abs(diff) / 15.0;
        return left + right + diff / 15.0;
    }
    return simpson_recurse(f, {p.a, p.fa, lm, flm, p.m, p.fm, left}, 0.5 * tol, depth - 1, acc,
                           converged) +
           simpson_recurse(f, {p.m, p.fm, rm, frm, p.b, p.fb, right}, 0.5 * tol, depth - 1, acc,
                           converged);
}

} // namespace detail

/// Adaptive Simpson quadrature with Richardson correction.
///
/// The interval is first split into `initial_panels` equal panels so that
/// narrow peaks are not missed; the requested relative tolerance is then
/// converted into an absolute budget from the coarse estimate and shared
/// between panels in proportion to their width. `abs_floor` keeps the
/// budget meaningful when the integral is zero.
template <class F>
QuadratureResult adaptive_simpson(F&& f, double a, double b, double rel_tol,
                                  int initial_panels = 16, double abs_floor = 0.0,
                                  int max_depth = 48) {
    QuadratureResult out;
    if (b == a) {
        return out;
    }
    const double sign = b > a ? 1.0 : -1.0;
    if (b < a) {
        std::swap(a, b);
    }
    const int n = std::max(1, initial_panels);
    const double w = (b - a) / n;
    std::vector<detail::SimpsonPanel> panels(static_cast<std::size_t>(n));
    double coarse = 0.0;
    double f_prev = f(a);
    out.evaluations = 1;
    for (int k = 0; k < n; ++k) {
        const double pa = a + k * w;
        const double pb = (k + 1 == n) ? b : a + (k + 1) * w;
        const double pm = 0.5 * (pa + pb);
        const double fm = f(pm);
        const double fb = f(pb);
        out.evaluations += 2;
        const double whole = (pb - pa) / 6.0 * (f_prev + 4.0 * fm + fb);
        panels[static_cast<std::size_t>(k)] = {pa, f_prev, pm, fm, pb, fb, whole};
        coarse += std::abs(whole);
        f_prev = fb;
    }
    const double budget = std::max(rel_tol * coarse, abs_floor);
    bool converged = true;
    double total = 0.0;
    for (const auto& p : panels) {
        const double tol = budget * (p.b - p.a) / (b - a);
        total += detail::simpson_recurse(f, p, tol, max_depth, out, converged);
    }
    if (!std::isfinite(total)) {
        throw QuadratureError("adaptive Simpson produced a non-finite value", kInf);
    }
    if (!converged && out.error > budget) {
        throw QuadratureError("adaptive Simpson did not converge", out.error);
    }
    out.value = sign * total;
    return out;
}

/// Bisection for a sign change of `g` on [lo, hi] with g(lo) and g(hi) of
/// opposite sign (or g(hi) == 0). Iterates to full double precision and
/// returns the right end of the final bracket, so the result always
/// satisfies g(result) <= 0 when g(lo) > 0.
template <class G>
double bisect_sign_change(G&& g, double lo, double hi) {
    const bool lo_positive = g(lo) > 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        if ((g(mid) > 0.0) == lo_positive) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return hi;
}

struct Minimum {
    double x = 0.0;
    double value = 0.0;
};

/// Golden-section search for a minimum of a unimodal function on [a, b].
template <class F>
Minimum golden_section_min(F&& f, double a, double b, double tol) {
    constexpr double inv_phi = 0.6180339887498949;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (std::abs(b - a) > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if (c >= d) {
            break;
        }
    }
    return fc <= fd ? Minimum{c, fc} : Minimum{d, fd};
}

/// Grid scan followed by golden-section refinement of the best bracket.
/// Works for continuous functions whose grid argmin lies in a unimodal basin.
template <class F>
Minimum grid_then_golden_min(F&& f, double a, double b, std::size_t n, double tol) {
    n = std::max<std::size_t>(n, 3);
    std::size_t best = 0;
    double best_val = kInf;
    const double step = (b - a) / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = (k + 1 == n) ? b : a + step * static_cast<double>(k);
        const double v = f(x);
        if (v < best_val) {
            best_val = v;
            best = k;
        }
    }
    const double lo = a + step * static_cast<double>(best == 0 ? 0 : best - 1);
    const double hi = std::min(b, a + step * static_cast<double>(best + 1));
    Minimum m = golden_section_min(f, lo, hi, tol);
    const double x_grid = a + step * static_cast<double>(best);
    if (best_val < m.value) {
        return {x_grid, best_val};
    }
    return m;
}

/// Two-sided standard normal quantile for a confidence level (0.95 -> 1.96).
inline double normal_two_sided_z(double level) {
    boost::math::normal_distribution<double> nd;
    return boost::math::quantile(nd, 0.5 + 0.5 * level);
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Wilson score interval for k successes in n trials.
inline Interval wilson_interval(std::size_t k, std::size_t n, double level = 0.95) {
    if (n == 0) {
        return {0.0, 1.0};
    }
    const double z = normal_two_sided_z(level);
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

/// Kolmogorov distribution tail: P(sqrt(n) D > lambda) in the large-n limit.
inline double kolmogorov_tail(double lambda) {
    if (lambda < 1e-3) {
        return 1.0;
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 200; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-18) {
            break;
        }
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// One-sample KS distance between `samples` and the unit exponential law.
inline double ks_unit_exponential(std::span<const double> samples) {
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double cdf = -std::expm1(-std::max(0.0, s[i]));
        d = std::max({d, cdf - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - cdf});
    }
    return d;
}

struct KsTest {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the usual effective-size
/// correction for the asymptotic p-value.
inline KsTest ks_two_sample(std::span<const double> a, std::span<const double> b) {
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double na = static_cast<double>(x.size());
    const double nb = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) {
            ++i;
        }
        while (j < y.size() && y[j] <= v) {
            ++j;
        }
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d)};
}

} // namespace stochres
