#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stochres/errors.hpp"
#include "stochres/numerics.hpp"

namespace stochres {

/// Label of a potential minimum. The underlying value is the position.
enum class Well : int { minus = -1, plus = 1 };

inline constexpr std::array<Well, 2> kWells{Well::minus, Well::plus};

constexpr double position(Well w) noexcept { return static_cast<double>(static_cast<int>(w)); }
constexpr Well opposite(Well w) noexcept { return w == Well::minus ? Well::plus : Well::minus; }
constexpr int index(Well w) noexcept { return w == Well::minus ? 0 : 1; }

inline Well well_from_int(int v) {
    if (v == -1) {
        return Well::minus;
    }
    if (v == 1) {
        return Well::plus;
    }
    throw DomainError("well label must be -1 or +1, got " + std::to_string(v));
}

/// Confinement constants: dU/dx <= -k2 for x <= -k1 and >= k2 for x >= k1.
struct GrowthConstants {
    double k1 = 1.0;
    double k2 = 1.0;
};

/// A 1-periodic double-well potential U(t, x) with critical points {-1, 0, 1}.
///
/// Energy and gradient are supplied together; the validator cross-checks
/// them. Callables receive the phase exactly as passed to the `raw_*`
/// accessors, so periodicity of user-supplied functions can be verified.
class PotentialSpec {
  public:
    using Field = std::function<double(double, double)>;

    PotentialSpec(std::string name, Field energy, Field gradient, GrowthConstants growth)
        : name_(std::move(name)), energy_(std::move(energy)), gradient_(std::move(gradient)),
          growth_(growth) {
        if (!(growth_.k1 > 0.0) || !(growth_.k2 > 0.0)) {
            throw DomainError("growth constants must be positive");
        }
    }

    const std::string& name() const noexcept { return name_; }
    GrowthConstants growth() const noexcept { return growth_; }

    double raw_energy(double t, double x) const { return energy_(t, x); }
    double raw_gradient(double t, double x) const { return gradient_(t, x); }

  private:
    std::string name_;
    Field energy_;
    Field gradient_;
    GrowthConstants growth_;
};

/// U(t mod 1, x).
inline double eval_potential(const PotentialSpec& spec, double t, double x) {
    require_finite(t, "time phase");
    require_finite(x, "position");
    return spec.raw_energy(reduce_phase(t), x);
}

/// dU/dx(t mod 1, x).
inline double eval_gradient(const PotentialSpec& spec, double t, double x) {
    require_finite(t, "time phase");
    require_finite(x, "position");
    return spec.raw_gradient(reduce_phase(t), x);
}

/// Barrier depth D_i(t) = U(t, 0) - U(t, i); throws if the well has vanished.
inline double depth(const PotentialSpec& spec, Well well, double t) {
    const double d = eval_potential(spec, t, 0.0) - eval_potential(spec, t, position(well));
    if (!(d > 0.0)) {
        std::ostringstream msg;
        msg << "depth of well " << static_cast<int>(well) << " at phase " << reduce_phase(t)
            << " is " << d << " (potential is not admissible)";
        throw AssumptionViolation(msg.str());
    }
    return d;
}

/// The two-well example family
///
///   U(t, x) = s * ( x^6/6 - cos(2 pi (t - 1/4 + psi sgn x)) (x^5/5 - x^3/3) - x^2/2 )
///
/// with phase psi in [0, 1/4) and an overall energy scale s (s = 1 is the
/// original example). sgn(0) = 0, so U(t, 0) = 0 exactly.
struct ExamplePotential {
    double psi = 0.0;
    double scale = 1.0;

    static constexpr double kGrowthK1 = 1.25;
    static constexpr double kGrowthK2 = 0.9;

    PotentialSpec spec() const {
        if (!(psi >= 0.0 && psi < 0.25)) {
            throw DomainError("example phase psi must lie in [0, 1/4)");
        }
        if (!(scale > 0.0) || !std::isfinite(scale)) {
            throw DomainError("example scale must be positive");
        }
        const double p = psi;
        const double s = scale;
        auto modulation = [p](double t, double x) {
            const double sgn = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
            return std::cos(2.0 * std::numbers::pi * (t - 0.25 + p * sgn));
        };
        auto energy = [s, modulation](double t, double x) {
            const double x2 = x * x;
            const double x3 = x2 * x;
            return s * (x3 * x3 / 6.0 - modulation(t, x) * (x3 * x2 / 5.0 - x3 / 3.0) - x2 / 2.0);
        };
        auto gradient = [s, modulation](double t, double x) {
            const double x2 = x * x;
            return s * (x2 * x2 * x - modulation(t, x) * (x2 * x2 - x2) - x);
        };
        std::ostringstream name;
        name << "example(psi=" << psi;
        if (scale != 1.0) {
            name << ",scale=" << scale;
        }
        name << ")";
        return PotentialSpec(name.str(), energy, gradient, {kGrowthK1, kGrowthK2 * scale});
    }
};

/// Per-well extrema of a depth function over one period.
struct DepthExtrema {
    double inf = 0.0;
    double sup = 0.0;
    double arg_inf = 0.0;
    double arg_sup = 0.0;
};

/// The depth functions D_{-1}, D_{+1} over one period, with their extrema
/// and, when it exists, the phase lag phi with D_{-1}(t) = D_{+1}(t + phi).
class DepthProfile {
  public:
    using Curve = std::function<double(double)>;

    static constexpr std::size_t kDefaultGrid = 4096;

    DepthProfile(Curve minus, Curve plus, std::size_t grid = kDefaultGrid)
        : curves_{std::move(minus), std::move(plus)}, grid_(std::max<std::size_t>(grid, 64)) {
        for (Well w : kWells) {
            extrema_[static_cast<std::size_t>(index(w))] = scan_extrema(w);
            if (!(extrema_[static_cast<std::size_t>(index(w))].inf > 0.0)) {
                throw AssumptionViolation("depth of well " + std::to_string(static_cast<int>(w)) +
                                          " is not strictly positive over the period");
            }
        }
        phase_shift_ = detect_phase_shift();
    }

    static DepthProfile from_potential(const PotentialSpec& spec, std::size_t grid = kDefaultGrid) {
        auto shared = std::make_shared<const PotentialSpec>(spec);
        auto curve = [shared](Well w) {
            return [shared, w](double t) {
                return eval_potential(*shared, t, 0.0) - eval_potential(*shared, t, position(w));
            };
        };
        return DepthProfile(curve(Well::minus), curve(Well::plus), grid);
    }

    /// D_i(t), periodic in t.
    double operator()(Well w, double t) const {
        return curves_[static_cast<std::size_t>(index(w))](reduce_phase(t));
    }

    const DepthExtrema& extrema(Well w) const {
        return extrema_[static_cast<std::size_t>(index(w))];
    }

    /// phi in (0, 1) with D_{-1}(t) = D_{+1}(t + phi), if the curves are
    /// translates of each other (checked on a 1024-point grid).
    std::optional<double> phase_shift() const { return phase_shift_; }

    std::size_t grid() const noexcept { return grid_; }

  private:
    DepthExtrema scan_extrema(Well w) const {
        const std::size_t n = grid_;
        std::size_t kmin = 0;
        std::size_t kmax = 0;
        double vmin = kInf;
        double vmax = -kInf;
        for (std::size_t k = 0; k < n; ++k) {
            const double v = (*this)(w, static_cast<double>(k) / static_cast<double>(n));
            if (v < vmin) {
                vmin = v;
                kmin = k;
            }
            if (v > vmax) {
                vmax = v;
                kmax = k;
            }
        }
        const double dt = 1.0 / static_cast<double>(n);
        const double tmin = static_cast<double>(kmin) * dt;
        const double tmax = static_cast<double>(kmax) * dt;
        auto f = [this, w](double t) { return (*this)(w, t); };
        auto g = [this, w](double t) { return -(*this)(w, t); };
        Minimum lo = golden_section_min(f, tmin - dt, tmin + dt, 1e-13);
        Minimum hi = golden_section_min(g, tmax - dt, tmax + dt, 1e-13);
        DepthExtrema e;
        e.inf = std::min(lo.value, vmin);
        e.arg_inf = lo.value <= vmin ? reduce_phase(lo.x) : tmin;
        e.sup = std::max(-hi.value, vmax);
        e.arg_sup = -hi.value >= vmax ? reduce_phase(hi.x) : tmax;
        return e;
    }

    std::optional<double> detect_phase_shift() const {
        constexpr std::size_t n = 1024;
        std::vector<double> dm(n);
        std::vector<double> dp(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double t = static_cast<double>(j) / static_cast<double>(n);
            dm[j] = (*this)(Well::minus, t);
            dp[j] = (*this)(Well::plus, t);
        }
        std::size_t best_k = 0;
        double best_err = kInf;
        for (std::size_t k = 0; k < n; ++k) {
            double err = 0.0;
            for (std::size_t j = 0; j < n && err < best_err; ++j) {
                err = std::max(err, std::abs(dm[j] - dp[(j + k) % n]));
            }
            if (err < best_err) {
                best_err = err;
                best_k = k;
            }
        }
        auto mismatch = [&](double phi) {
            double err = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double t = static_cast<double>(j) / static_cast<double>(n);
                err = std::max(err, std::abs(dm[j] - (*this)(Well::plus, t + phi)));
            }
            return err;
        };
        const double step = 1.0 / static_cast<double>(n);
        const double k = static_cast<double>(best_k) * step;
        Minimum m = golden_section_min(mismatch, k - step, k + step, 1e-14);
        const double scale = 1.0 + std::max(extrema_[0].sup, extrema_[1].sup);
        const double phi = reduce_phase(m.x);
        if (m.value > 1e-9 * scale || phi < 1e-12 || phi > 1.0 - 1e-12) {
            return std::nullopt;
        }
        return phi;
    }

    std::array<Curve, 2> curves_;
    std::size_t grid_;
    std::array<DepthExtrema, 2> extrema_{};
    std::optional<double> phase_shift_;
};

struct ValidationOptions {
    std::size_t time_points = 1024;
    std::size_t space_points = 2048;
    double tolerance = 1e-8;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    /// sup |d^2U/dx^2| over the scanned region (drift Lipschitz bound).
    double drift_lipschitz = 0.0;

    bool all_passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }
    const CheckResult* find(const std::string& name) const {
        for (const auto& c : checks) {
            if (c.name == name) {
                return &c;
            }
        }
        return nullptr;
    }
};

namespace detail {

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

/// Checks that a sampled periodic curve has only global local extrema and is
/// strictly monotone between them.
inline bool monotone_between_global_extrema(const std::vector<double>& v, double tol,
                                            std::string& why) {
    const std::size_t n = v.size();
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    if (*mx - *mn <= tol) {
        return true; // constant: nothing lies between extrema
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double prev = v[(j + n - 1) % n];
        const double next = v[(j + 1) % n];
        const double here = v[j];
        if (here == prev || here == next) {
            if (std::abs(here - *mn) > tol && std::abs(here - *mx) > tol) {
                why = "plateau away from the global extrema at grid index " + std::to_string(j);
                return false;
            }
            continue;
        }
        const bool is_max = here > prev && here > next;
        const bool is_min = here < prev && here < next;
        if (is_max && std::abs(here - *mx) > tol) {
            why = "non-global local maximum at phase " +
                  std::to_string(static_cast<double>(j) / static_cast<double>(n));
            return false;
        }
        if (is_min && std::abs(here - *mn) > tol) {
            why = "non-global local minimum at phase " +
                  std::to_string(static_cast<double>(j) / static_cast<double>(n));
            return false;
        }
    }
    return true;
}

} // namespace detail

/// Grid-based check of the standing assumptions on a potential.
///
/// Failures are reported in the returned report, never thrown.
inline ValidationReport validate_spec(const PotentialSpec& spec, ValidationOptions opt = {}) {
    opt.time_points = std::max<std::size_t>(opt.time_points, 64);
    opt.space_points = std::max<std::size_t>(opt.space_points, 64);
    const auto growth = spec.growth();
    const double xlo = -growth.k1 - 2.0;
    const double xhi = growth.k1 + 2.0;
    const std::size_t nt = opt.time_points;
    const std::size_t nx = opt.space_points;
    const double dx = (xhi - xlo) / static_cast<double>(nx - 1);
    const double tol = opt.tolerance;

    ValidationReport report;
    std::vector<double> xs(nx);
    for (std::size_t k = 0; k < nx; ++k) {
        xs[k] = xlo + dx * static_cast<double>(k);
    }

    bool crit_ok = true;
    std::string crit_why;
    bool growth_ok = true;
    std::string growth_why;
    bool period_ok = true;
    std::string period_why;
    bool fd_ok = true;
    std::string fd_why;
    double lipschitz = 0.0;
    std::vector<double> g(nx);
    constexpr std::array<double, 3> kCritical{-1.0, 0.0, 1.0};

    for (std::size_t j = 0; j < nt && (crit_ok || growth_ok || period_ok || fd_ok || true); ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(nt);
        double gscale = 0.0;
        for (std::size_t k = 0; k < nx; ++k) {
            g[k] = spec.raw_gradient(t, xs[k]);
            gscale = std::max(gscale, std::abs(g[k]));
            if (k > 0) {
                lipschitz = std::max(lipschitz, std::abs(g[k] - g[k - 1]) / dx);
            }
        }
        // exact zeros at the critical points
        for (double c : kCritical) {
            const double gc = spec.raw_gradient(t, c);
            if (crit_ok && std::abs(gc) > tol * (1.0 + gscale)) {
                crit_ok = false;
                crit_why = "gradient " + std::to_string(gc) + " at x=" + std::to_string(c) +
                           ", t=" + std::to_string(t);
            }
        }
        // sign changes must bracket exactly the three critical points
        if (crit_ok) {
            std::array<int, 3> hits{0, 0, 0};
            int last_sign = 0;
            double last_x = xlo;
            for (std::size_t k = 0; k < nx; ++k) {
                const int s = detail::sign_of(g[k]);
                if (s == 0) {
                    continue;
                }
                if (last_sign != 0 && s != last_sign) {
                    bool matched = false;
                    for (std::size_t c = 0; c < kCritical.size(); ++c) {
                        if (kCritical[c] >= last_x - 1e-12 && kCritical[c] <= xs[k] + 1e-12) {
                            ++hits[c];
                            matched = true;
                        }
                    }
                    if (!matched) {
                        crit_ok = false;
                        crit_why = "gradient changes sign in [" + std::to_string(last_x) + ", " +
                                   std::to_string(xs[k]) + "] at t=" + std::to_string(t);
                        break;
                    }
                }
                last_sign = s;
                last_x = xs[k];
            }
            // near-zero local minima of |g| away from the critical points
            for (std::size_t k = 1; crit_ok && k + 1 < nx; ++k) {
                const double a = std::abs(g[k]);
                if (a <= std::abs(g[k - 1]) && a <= std::abs(g[k + 1]) &&
                    a <= 1e-6 * (1.0 + gscale)) {
                    const bool near_critical =
                        std::any_of(kCritical.begin(), kCritical.end(),
                                    [&](double c) { return std::abs(xs[k] - c) <= 2.0 * dx; });
                    if (!near_critical) {
                        crit_ok = false;
                        crit_why = "gradient nearly vanishes at x=" + std::to_string(xs[k]) +
                                   ", t=" + std::to_string(t);
                    }
                }
            }
            if (crit_ok && (hits[0] != 1 || hits[1] != 1 || hits[2] != 1)) {
                crit_ok = false;
                crit_why = "critical points -1, 0, 1 are not simple sign changes at t=" +
                           std::to_string(t);
            }
        }
        // growth bounds
        for (std::size_t k = 0; growth_ok && k < nx; ++k) {
            if (xs[k] <= -growth.k1 && !(g[k] <= -growth.k2)) {
                growth_ok = false;
                growth_why = "dU/dx = " + std::to_string(g[k]) + " > -K2 at x=" +
                             std::to_string(xs[k]) + ", t=" + std::to_string(t);
            } else if (xs[k] >= growth.k1 && !(g[k] >= growth.k2)) {
                growth_ok = false;
                growth_why = "dU/dx = " + std::to_string(g[k]) + " < K2 at x=" +
                             std::to_string(xs[k]) + ", t=" + std::to_string(t);
            }
        }
        // periodicity and derivative consistency on a thinned grid
        if (j % 8 == 0) {
            for (std::size_t k = 0; k < nx; k += 4) {
                const double x = xs[k];
                const double e0 = spec.raw_energy(t, x);
                const double e1 = spec.raw_energy(t + 1.0, x);
                if (period_ok && std::abs(e0 - e1) > tol * (1.0 + std::abs(e0))) {
                    period_ok = false;
                    period_why = "U(t,x) != U(t+1,x) at t=" + std::to_string(t) +
                                 ", x=" + std::to_string(x);
                }
                if (fd_ok && std::abs(x) > 1e-2) {
                    constexpr double hstep = 1e-3;
                    const double fd = (8.0 * (spec.raw_energy(t, x + hstep) -
                                              spec.raw_energy(t, x - hstep)) -
                                       (spec.raw_energy(t, x + 2 * hstep) -
                                        spec.raw_energy(t, x - 2 * hstep))) /
                                      (12.0 * hstep);
                    if (std::abs(fd - g[k]) > 1e-6 * (1.0 + std::abs(g[k]))) {
                        fd_ok = false;
                        fd_why = "finite difference " + std::to_string(fd) + " vs gradient " +
                                 std::to_string(g[k]) + " at t=" + std::to_string(t) +
                                 ", x=" + std::to_string(x);
                    }
                }
            }
        }
    }
    report.drift_lipschitz = lipschitz;
    report.checks.push_back({"critical_points", crit_ok, crit_why});
    report.checks.push_back({"growth", growth_ok, growth_why});
    report.checks.push_back({"tight_level_sets", growth_ok,
                             growth_ok ? "implied by the growth bound"
                                       : "growth bound fails: " + growth_why});

    // depth positivity and monotonicity between global extrema
    for (Well w : kWells) {
        std::vector<double> d(nt);
        bool pos_ok = true;
        std::string pos_why;
        for (std::size_t j = 0; j < nt; ++j) {
            const double t = static_cast<double>(j) / static_cast<double>(nt);
            d[j] = spec.raw_energy(t, 0.0) - spec.raw_energy(t, position(w));
            if (pos_ok && !(d[j] > 0.0)) {
                pos_ok = false;
                pos_why = "D=" + std::to_string(d[j]) + " at t=" + std::to_string(t);
            }
        }
        const std::string suffix = w == Well::minus ? "_minus" : "_plus";
        report.checks.push_back({"depth_positive" + suffix, pos_ok, pos_why});
        std::string mono_why;
        const bool mono_ok = detail::monotone_between_global_extrema(d, tol, mono_why);
        report.checks.push_back({"depth_monotone" + suffix, mono_ok, mono_why});
    }
    report.checks.push_back({"periodicity", period_ok, period_why});
    report.checks.push_back({"gradient_consistency", fd_ok, fd_why});
    return report;
}

/// sup |d^2U/dx^2| over [-K1-2, K1+2] from gradient differences on a grid.
inline double drift_lipschitz_bound(const PotentialSpec& spec, std::size_t time_points = 256,
                                    std::size_t space_points = 2048) {
    const double xlo = -spec.growth().k1 - 2.0;
    const double xhi = spec.growth().k1 + 2.0;
    const double dx = (xhi - xlo) / static_cast<double>(space_points - 1);
    double lip = 0.0;
    for (std::size_t j = 0; j < time_points; ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(time_points);
        double prev = spec.raw_gradient(t, xlo);
        for (std::size_t k = 1; k < space_points; ++k) {
            const double g = spec.raw_gradient(t, xlo + dx * static_cast<double>(k));
            lip = std::max(lip, std::abs(g - prev) / dx);
            prev = g;
        }
    }
    return lip;
}

/// Builds a registered potential by name.
///
/// Known names: `example` (psi) and `scaled_example` (psi, scale).
inline PotentialSpec make_potential(const std::string& name, double psi, double scale = 1.0) {
    if (name == "example") {
        return ExamplePotential{psi, 1.0}.spec();
    }
    if (name == "scaled_example") {
        return ExamplePotential{psi, scale}.spec();
    }
    throw DomainError("unknown potential '" + name + "'");
}

} // namespace stochres
