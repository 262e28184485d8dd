#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "stochres/errors.hpp"
#include "stochres/numerics.hpp"
#include "stochres/potential.hpp"
#include "stochres/rng.hpp"

namespace stochres {

enum class FreezeMode { pointwise, inf_over, sup_over };

inline const char* to_string(FreezeMode m) {
    switch (m) {
    case FreezeMode::pointwise:
        return "pointwise";
    case FreezeMode::inf_over:
        return "inf";
    case FreezeMode::sup_over:
        return "sup";
    }
    return "?";
}

struct FreezeOptions {
    /// Time samples per interval for inf/sup freezing.
    std::size_t time_points = 256;
    /// Intervals of the position table on [-L, d].
    std::size_t table_intervals = 1 << 15;
    /// Start well; +1 is handled by the reflection x -> -x.
    Well start = Well::minus;
    /// Required excess of Q(-L) - Q(-1) over the barrier.
    double truncation_margin = 0.1;
};

/// Maximal rise max_{z <= y} (Q(y) - Q(z)) along [-L, d].
struct Pseudopotential {
    double value = 0.0;
    double peak = 0.0;
    double valley = 0.0;
};

/// A time-independent potential Q on [-L, d] obtained by freezing dU/dx.
///
/// Positions are measured in the start well's frame: for a start at +1 the
/// potential is reflected so that the start is always at -1 and the target
/// d is to its right.
class FrozenPotential {
  public:
    double left() const noexcept { return lo_; }
    double target() const noexcept { return hi_; }
    double truncation() const noexcept { return -lo_; }
    FreezeMode mode() const noexcept { return mode_; }
    double t_begin() const noexcept { return ta_; }
    double t_end() const noexcept { return tb_; }
    const FreezeOptions& options() const noexcept { return opt_; }

    /// Q'(x); tabulated modes interpolate linearly between table nodes.
    double q_prime(double x) const {
        if (mode_ == FreezeMode::pointwise) {
            return frame_gradient(ta_, x);
        }
        const std::size_t k = cell(x);
        const double s = (x - node(k)) / dx_;
        return qp_[k] + s * (qp_[k + 1] - qp_[k]);
    }

    /// Q'(x) evaluated directly (inf/sup over the time samples, no table).
    double q_prime_direct(double x) const {
        if (mode_ == FreezeMode::pointwise) {
            return frame_gradient(ta_, x);
        }
        const std::size_t nt = std::max<std::size_t>(opt_.time_points, 2);
        double v = mode_ == FreezeMode::inf_over ? kInf : -kInf;
        for (std::size_t j = 0; j < nt; ++j) {
            const double t =
                ta_ + (tb_ - ta_) * static_cast<double>(j) / static_cast<double>(nt - 1);
            const double g = frame_gradient(t, x);
            v = mode_ == FreezeMode::inf_over ? std::min(v, g) : std::max(v, g);
        }
        return v;
    }

    /// Q(x) from cumulative quadrature of Q', anchored at Q(-1).
    double q(double x) const {
        const std::size_t k = cell(x);
        const double r = x - node(k);
        return qn_[k] + partial(k, r);
    }

    /// Closed-form Q for pointwise freezing (U at the frozen time).
    std::optional<double> q_closed_form(double x) const {
        if (mode_ != FreezeMode::pointwise) {
            return std::nullopt;
        }
        return frame_energy(ta_, x);
    }

    /// Evaluates Q through the closed form when available.
    double q_best(double x) const {
        const auto c = q_closed_form(x);
        return c ? *c : q(x);
    }

    /// sup |Q''| on the domain.
    double curvature_bound() const { return curvature_; }
    /// sup |Q'| on the domain.
    double slope_bound() const { return slope_; }

    /// Maximal rise of the quadrature-based Q towards the target.
    Pseudopotential pseudopotential() const {
        const std::size_t n = qn_.size();
        double run_min = qn_[0];
        std::size_t run_arg = 0;
        Pseudopotential best{-kInf, lo_, lo_};
        std::size_t best_peak = 0;
        std::size_t best_valley = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (qn_[k] < run_min) {
                run_min = qn_[k];
                run_arg = k;
            }
            const double rise = qn_[k] - run_min;
            if (rise > best.value) {
                best.value = rise;
                best_peak = k;
                best_valley = run_arg;
            }
        }
        // refine both nodes between their neighbours; sign = +1 for a minimum
        auto refine = [&](std::size_t k, double sign) {
            const double a = node(k == 0 ? 0 : k - 1);
            const double b = node(std::min(k + 1, n - 1));
            const Minimum m =
                golden_section_min([&](double x) { return sign * q(x); }, a, b, 1e-13);
            if (m.value < sign * qn_[k]) {
                return Minimum{m.x, sign * m.value};
            }
            return Minimum{node(k), qn_[k]};
        };
        const Minimum valley = refine(best_valley, 1.0);
        const Minimum peak = refine(best_peak, -1.0);
        best.value = std::max(best.value, peak.value - valley.value);
        best.peak = peak.x;
        best.valley = valley.x;
        return best;
    }

    /// The same freezing on another domain.
    FrozenPotential with_domain(double left, double d) const;

    friend FrozenPotential freeze(const PotentialSpec& spec, FreezeMode mode, double t_begin,
                                  double t_end, double left, double d, FreezeOptions opt);

  private:
    FrozenPotential() = default;

    double frame_gradient(double t, double x) const {
        return opt_.start == Well::minus ? eval_gradient(*spec_, t, x)
                                         : -eval_gradient(*spec_, t, -x);
    }
    double frame_energy(double t, double x) const {
        return eval_potential(*spec_, t, opt_.start == Well::minus ? x : -x);
    }
    double node(std::size_t k) const {
        return k + 1 == qn_.size() ? hi_ : lo_ + dx_ * static_cast<double>(k);
    }
    std::size_t cell(double x) const {
        if (!(x >= lo_ - 1e-12 && x <= hi_ + 1e-12)) {
            std::ostringstream msg;
            msg << "position " << x << " outside the frozen domain [" << lo_ << ", " << hi_ << "]";
            throw DomainError(msg.str());
        }
        const auto k = static_cast<std::size_t>(std::max(0.0, std::floor((x - lo_) / dx_)));
        return std::min(k, qn_.size() - 2);
    }
    /// Integral of Q' over [node(k), node(k) + r].
    double partial(std::size_t k, double r) const {
        if (mode_ == FreezeMode::pointwise) {
            const double a = node(k);
            const double m = a + 0.5 * r;
            return r / 6.0 *
                   (qp_[k] + 4.0 * frame_gradient(ta_, m) + frame_gradient(ta_, a + r));
        }
        return r * qp_[k] + 0.5 * r * r / dx_ * (qp_[k + 1] - qp_[k]);
    }

    void build();

    std::shared_ptr<const PotentialSpec> spec_;
    FreezeMode mode_ = FreezeMode::pointwise;
    double ta_ = 0.0;
    double tb_ = 0.0;
    double lo_ = -2.0;
    double hi_ = 0.5;
    double dx_ = 0.0;
    FreezeOptions opt_;
    std::vector<double> qp_;
    std::vector<double> qn_;
    double curvature_ = 0.0;
    double slope_ = 0.0;
};

inline void FrozenPotential::build() {
    const std::size_t n = std::max<std::size_t>(opt_.table_intervals, 64);
    dx_ = (hi_ - lo_) / static_cast<double>(n);
    qp_.assign(n + 1, 0.0);
    qn_.assign(n + 1, 0.0);
    for (std::size_t k = 0; k <= n; ++k) {
        qp_[k] = q_prime_direct(node(k));
    }
    // cumulative quadrature from the left end
    std::vector<double> c(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        c[k + 1] = c[k] + partial(k, node(k + 1) - node(k));
        qn_[k + 1] = c[k + 1];
    }
    // anchor Q(-1) at the energy of the reference time
    const double anchor = frame_energy(ta_, -1.0);
    const double at_minus_one = q(-1.0);
    for (auto& v : qn_) {
        v += anchor - at_minus_one;
    }
    curvature_ = 0.0;
    slope_ = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        slope_ = std::max(slope_, std::abs(qp_[k]));
        if (k > 0) {
            curvature_ = std::max(curvature_, std::abs(qp_[k] - qp_[k - 1]) / dx_);
        }
    }
}

/// Freezes dU/dx at t_begin (pointwise) or as inf/sup over [t_begin, t_end]
/// on the domain [-left, d], and checks the minimum/saddle structure.
inline FrozenPotential freeze(const PotentialSpec& spec, FreezeMode mode, double t_begin,
                              double t_end, double left, double d, FreezeOptions opt = {}) {
    require_finite(t_begin, "freeze time");
    require_finite(t_end, "freeze time");
    require_finite(d, "Dirichlet point");
    if (d == 0.0) {
        throw DomainError("Dirichlet point d must differ from the saddle at 0");
    }
    if (!(d > -1.0)) {
        throw DomainError("Dirichlet point must lie to the right of the start minimum");
    }
    if (!(left > 1.0)) {
        throw DomainError("left truncation must lie beyond the start minimum");
    }
    if (mode != FreezeMode::pointwise && !(t_end >= t_begin && t_end - t_begin <= 1.0)) {
        throw DomainError("freeze interval must lie within one period");
    }
    FrozenPotential fp;
    fp.spec_ = std::make_shared<const PotentialSpec>(spec);
    fp.mode_ = mode;
    fp.ta_ = t_begin;
    fp.tb_ = mode == FreezeMode::pointwise ? t_begin : t_end;
    fp.lo_ = -left;
    fp.hi_ = d;
    fp.opt_ = opt;
    fp.build();

    // sign pattern of Q': - on (-L,-1), + on (-1,0), - on (0,1), + beyond 1
    const double scale = 1.0 + fp.slope_;
    auto expected = [](double x) {
        if (x < -1.0) {
            return -1;
        }
        if (x < 0.0) {
            return 1;
        }
        if (x < 1.0) {
            return -1;
        }
        return 1;
    };
    const double guard = 2.0 * fp.dx_;
    for (std::size_t k = 0; k < fp.qp_.size(); ++k) {
        const double x = fp.node(k);
        const bool near = std::abs(x + 1.0) <= guard || std::abs(x) <= guard ||
                          std::abs(x - 1.0) <= guard;
        if (near) {
            continue;
        }
        const int s = (fp.qp_[k] > 0.0) - (fp.qp_[k] < 0.0);
        if (s != expected(x)) {
            std::ostringstream msg;
            msg << "frozen drift has the wrong sign at x = " << x << " (Q' = " << fp.qp_[k] << ")";
            throw StructureError(msg.str());
        }
    }
    for (double c : {-1.0, 0.0, 1.0}) {
        if (c >= fp.lo_ && c <= fp.hi_ && std::abs(fp.q_prime_direct(c)) > 1e-8 * scale) {
            std::ostringstream msg;
            msg << "frozen drift does not vanish at x = " << c << " (Q' = " << fp.q_prime_direct(c)
                << ")";
            throw StructureError(msg.str());
        }
    }
    const double k2 = spec.growth().k2;
    if (left >= spec.growth().k1 && !(fp.q_prime(fp.lo_) <= -k2)) {
        throw StructureError("frozen drift at the left truncation is weaker than -K2");
    }
    const Pseudopotential v = fp.pseudopotential();
    if (fp.q(fp.lo_) - fp.q(-1.0) < v.value + opt.truncation_margin) {
        std::ostringstream msg;
        msg << "left truncation at " << fp.lo_ << " is too shallow: Q(-L) - Q(-1) = "
            << fp.q(fp.lo_) - fp.q(-1.0) << " vs barrier " << v.value;
        throw StructureError(msg.str());
    }
    return fp;
}

inline FrozenPotential FrozenPotential::with_domain(double left, double d) const {
    FreezeOptions o = opt_;
    o.table_intervals = static_cast<std::size_t>(
        std::ceil(static_cast<double>(qp_.size() - 1) * (d + left) / (hi_ - lo_)));
    return freeze(*spec_, mode_, ta_, tb_, left, d, o);
}

enum class Discretization {
    /// Exponentially fitted, detailed balance w.r.t. exp(-Q/eps).
    fitted,
    /// Plain central differences.
    central
};

struct EigenOptions {
    Discretization scheme = Discretization::fitted;
    double residual_tolerance = 1e-8;
    bool check_truncation = true;
    bool check_refinement = false;
    std::size_t max_iterations = 500;
};

struct EigenResult {
    double lambda = 0.0;
    double lambda2 = 0.0;
    double epsilon = 0.0;
    std::size_t grid_n = 0;
    double residual = 0.0;
    /// Maximal rise of Q from the start minimum to the target.
    double barrier = 0.0;
    /// |lambda(2L) / lambda(L) - 1| when checked.
    std::optional<double> truncation_change;
    /// |lambda(2n) / lambda(n) - 1| when checked.
    std::optional<double> refinement_change;

    double gap_ratio() const { return lambda2 / lambda; }
};

namespace detail {

/// Birth-death generator on nodes 0..n-1 with reflection at 0 and
/// killing beyond n-1: (A u)_j = p_j (u_j - u_{j+1}) + q_j (u_j - u_{j-1}).
struct BirthDeath {
    std::vector<double> p;
    std::vector<double> q;
    std::vector<double> weight; // reversible measure, scaled to max 1

    std::size_t size() const { return p.size(); }

    /// Solves A u = f for f >= 0 without subtractions.
    void solve(const std::vector<double>& f, std::vector<double>& u,
               std::vector<double>& t) const {
        const std::size_t n = size();
        t.resize(n);
        u.resize(n);
        t[0] = f[0];
        for (std::size_t j = 1; j < n; ++j) {
            t[j] = f[j] + q[j] * t[j - 1] / p[j - 1];
        }
        double acc = 0.0;
        for (std::size_t j = n; j-- > 0;) {
            acc += t[j] / p[j];
            u[j] = acc;
        }
    }

    /// Number of eigenvalues below x (Sturm count of the symmetrised form).
    std::size_t count_below(double x) const {
        const std::size_t n = size();
        std::size_t count = 0;
        double d = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double a = p[j] + q[j];
            const double b2 = j == 0 ? 0.0 : p[j - 1] * q[j];
            d = j == 0 ? a - x : a - x - b2 / d;
            if (d == 0.0) {
                d = -1e-300;
            }
            if (d < 0.0) {
                ++count;
            }
        }
        return count;
    }

    double gershgorin() const {
        double g = 0.0;
        for (std::size_t j = 0; j < size(); ++j) {
            const double off = (j > 0 ? std::sqrt(p[j - 1] * q[j]) : 0.0) +
                               (j + 1 < size() ? std::sqrt(p[j] * q[j + 1]) : 0.0);
            g = std::max(g, p[j] + q[j] + off);
        }
        return g;
    }

    /// k-th smallest eigenvalue (0-based) by Sturm bisection.
    double bisect(std::size_t k, double lo, double hi) const {
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) {
                break;
            }
            if (count_below(mid) > k) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return 0.5 * (lo + hi);
    }
};

inline BirthDeath discretize(const FrozenPotential& fp, double epsilon, std::size_t n,
                             Discretization scheme) {
    BirthDeath bd;
    const double lo = fp.left();
    const double hi = fp.target();
    const double dx = (hi - lo) / static_cast<double>(n);
    const double base = epsilon / (dx * dx);
    bd.p.resize(n);
    bd.q.resize(n);
    std::vector<double> qn(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        qn[j] = fp.q_best(j == n ? hi : lo + dx * static_cast<double>(j));
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double x = lo + dx * static_cast<double>(j);
        if (scheme == Discretization::fitted) {
            const double up = fp.q_best(x + 0.5 * dx);
            bd.p[j] = base * std::exp(-(up - qn[j]) / epsilon);
            if (j == 0) {
                bd.q[j] = 0.0;
            } else {
                const double down = fp.q_best(x - 0.5 * dx);
                bd.q[j] = base * std::exp(-(down - qn[j]) / epsilon);
            }
        } else {
            const double g = fp.q_prime(x);
            bd.p[j] = base - g / (2.0 * dx);
            bd.q[j] = j == 0 ? 0.0 : base + g / (2.0 * dx);
            if (j == 0) {
                // reflecting end: the ghost node mirrors node 1
                bd.p[j] = 2.0 * base;
            }
        }
        if (!(bd.p[j] > 0.0) || (j > 0 && !(bd.q[j] > 0.0))) {
            throw EigenError("discrete rates lost positivity; refine the grid");
        }
    }
    // reversible weights: w_{j+1} = w_j p_j / q_{j+1}, in logs
    std::vector<double> lw(n, 0.0);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        lw[j + 1] = lw[j] + std::log(bd.p[j]) - std::log(bd.q[j + 1]);
    }
    const double top = *std::max_element(lw.begin(), lw.end());
    bd.weight.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        bd.weight[j] = std::exp(lw[j] - top);
    }
    return bd;
}

struct InverseIteration {
    double lambda = 0.0;
    double residual = kInf;
};

/// Smallest eigenvalue by inverse iteration with a weighted Rayleigh
/// quotient; relative accuracy does not degrade when lambda is tiny.
inline InverseIteration inverse_iteration(const BirthDeath& bd, std::size_t max_iter) {
    const std::size_t n = bd.size();
    std::vector<double> u(n, 1.0);
    std::vector<double> v;
    std::vector<double> scratch;
    InverseIteration out;
    double prev = kInf;
    for (std::size_t it = 0; it < max_iter; ++it) {
        bd.solve(u, v, scratch);
        double uu = 0.0;
        double uv = 0.0;
        double vv = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            uu += bd.weight[j] * u[j] * u[j];
            uv += bd.weight[j] * u[j] * v[j];
            vv += bd.weight[j] * v[j] * v[j];
        }
        out.lambda = uu / uv;
        double rr = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double r = u[j] - out.lambda * v[j];
            rr += bd.weight[j] * r * r;
        }
        out.residual = std::sqrt(rr / (out.lambda * out.lambda * vv));
        const double norm = std::sqrt(vv);
        for (std::size_t j = 0; j < n; ++j) {
            u[j] = v[j] / norm;
        }
        if (std::abs(out.lambda - prev) <= 1e-15 * out.lambda && out.residual < 1e-10) {
            break;
        }
        prev = out.lambda;
    }
    return out;
}

inline std::size_t required_grid(const FrozenPotential& fp, double epsilon) {
    return static_cast<std::size_t>(
        std::ceil((fp.target() - fp.left()) * fp.slope_bound() / epsilon));
}

inline EigenResult solve_eigen(const FrozenPotential& fp, double epsilon, std::size_t n,
                               const EigenOptions& opt) {
    const BirthDeath bd = discretize(fp, epsilon, n, opt.scheme);
    const InverseIteration ii = inverse_iteration(bd, opt.max_iterations);
    EigenResult r;
    r.epsilon = epsilon;
    r.grid_n = n;
    r.lambda = ii.lambda;
    r.residual = ii.residual;
    r.barrier = fp.pseudopotential().value;
    if (!(r.lambda > 0.0) || !std::isfinite(r.lambda)) {
        throw EigenError("principal eigenvalue is not positive");
    }
    if (r.residual > opt.residual_tolerance) {
        std::ostringstream msg;
        msg << "eigenvector residual " << r.residual << " above tolerance "
            << opt.residual_tolerance;
        throw EigenError(msg.str());
    }
    // certify with Sturm counts, and bracket the second eigenvalue
    const double top = bd.gershgorin();
    const double slack = std::max(1e-8 * r.lambda, 64.0 * 2.2e-16 * top);
    if (bd.count_below(r.lambda - slack) != 0 || bd.count_below(r.lambda + slack) < 1) {
        throw EigenError("inverse iteration did not converge to the smallest eigenvalue");
    }
    r.lambda2 = bd.bisect(1, r.lambda, top);
    return r;
}

} // namespace detail

/// Principal Dirichlet eigenvalue of eps u'' - Q' u' on [-L, d] with a
/// zero-flux condition at -L and u(d) = 0.
inline EigenResult principal_eigenvalue(const FrozenPotential& fp, double epsilon,
                                        std::size_t grid_n, const EigenOptions& opt = {}) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw DomainError("epsilon must be positive");
    }
    if (grid_n < 512) {
        throw DomainError("grid must have at least 512 intervals");
    }
    const std::size_t need = detail::required_grid(fp, epsilon);
    if (grid_n < need) {
        std::ostringstream msg;
        msg << "grid of " << grid_n << " intervals does not resolve eps / max|Q'|; need " << need;
        throw DomainError(msg.str());
    }
    EigenResult r = detail::solve_eigen(fp, epsilon, grid_n, opt);
    if (opt.check_truncation) {
        const FrozenPotential wide = fp.with_domain(2.0 * fp.truncation(), fp.target());
        const double width_ratio = (wide.target() - wide.left()) / (fp.target() - fp.left());
        const auto n2 = std::max(
            static_cast<std::size_t>(std::ceil(static_cast<double>(grid_n) * width_ratio)),
            detail::required_grid(wide, epsilon));
        const EigenResult w = detail::solve_eigen(wide, epsilon, n2, opt);
        r.truncation_change = std::abs(w.lambda / r.lambda - 1.0);
        if (*r.truncation_change >= 0.01) {
            std::ostringstream msg;
            msg << "doubling the truncation changes lambda by " << 100.0 * *r.truncation_change
                << "%";
            throw EigenError(msg.str());
        }
    }
    if (opt.check_refinement) {
        const EigenResult f = detail::solve_eigen(fp, epsilon, 2 * grid_n, opt);
        r.refinement_change = std::abs(f.lambda / r.lambda - 1.0);
    }
    return r;
}

struct KramersRow {
    double epsilon = 0.0;
    double lambda = 0.0;
    double eps_log_lambda = 0.0;
    double target = 0.0;
    double gap = 0.0;
};

struct KramersTable {
    std::vector<KramersRow> rows;
    bool monotone = true;
};

/// eps ln lambda against -V along a decreasing eps list.
inline KramersTable kramers_check(const FrozenPotential& fp, const std::vector<double>& eps_list,
                                  std::size_t grid_n = 4096, const EigenOptions& opt = {}) {
    KramersTable t;
    const double target = -fp.pseudopotential().value;
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        const double eps = eps_list[k];
        if (k > 0 && !(eps < eps_list[k - 1])) {
            throw DomainError("epsilon list must be strictly decreasing");
        }
        const std::size_t n = std::max(grid_n, detail::required_grid(fp, eps));
        const EigenResult r = principal_eigenvalue(fp, eps, n, opt);
        KramersRow row;
        row.epsilon = eps;
        row.lambda = r.lambda;
        row.eps_log_lambda = eps * std::log(r.lambda);
        row.target = target;
        row.gap = std::abs(row.eps_log_lambda - target);
        if (!t.rows.empty() && !(row.gap < t.rows.back().gap)) {
            t.monotone = false;
        }
        t.rows.push_back(row);
    }
    return t;
}

struct ExitLawOptions {
    double start = -1.0;
    /// Euler step; 0 selects min(eps, 1) / (10 sup|Q''|).
    double step = 0.0;
    /// Steps allowed per simulated exit.
    std::uint64_t step_budget = 100'000'000ull;
    unsigned workers = 1;
    std::size_t grid_n = 4096;
};

struct ExitLawResult {
    /// KS distance of exit times scaled by their sample mean to Exp(1).
    double ks = 0.0;
    /// KS distance of lambda * exit time to Exp(1).
    double ks_lambda = 0.0;
    double lambda = 0.0;
    double mean = 0.0;
    double lambda_mean = 0.0;
    /// Exit times in sample order.
    std::vector<double> times;
};

/// Simulates the frozen diffusion from `opt.start` until it reaches d and
/// compares the exit-time law with Exp(lambda).
inline ExitLawResult exit_law_check(const FrozenPotential& fp, double epsilon,
                                    std::size_t n_samples, std::uint64_t seed,
                                    const ExitLawOptions& opt = {}) {
    if (n_samples == 0) {
        throw DomainError("need at least one exit sample");
    }
    if (!(opt.start > fp.left() && opt.start < fp.target())) {
        throw DomainError("start point must lie inside the frozen domain");
    }
    const double dt = opt.step > 0.0 ? opt.step
                                     : std::min(epsilon, 1.0) / (10.0 * fp.curvature_bound());
    const double sigma = std::sqrt(2.0 * epsilon * dt);
    const double lo = fp.left();
    const double d = fp.target();
    const std::uint64_t per_sample_budget = opt.step_budget;
    ExitLawResult out;
    out.times.assign(n_samples, 0.0);
    std::vector<char> exhausted(n_samples, 0);
    const unsigned workers = std::max(1u, opt.workers);
    auto work = [&](unsigned w) {
        for (std::size_t i = w; i < n_samples; i += workers) {
            std::mt19937_64 rng(derive_seed(seed, {0xE417u, i}));
            std::normal_distribution<double> normal(0.0, 1.0);
            double y = opt.start;
            std::uint64_t k = 0;
            for (; k < per_sample_budget; ++k) {
                double next = y - fp.q_prime(y) * dt + sigma * normal(rng);
                if (next >= d) {
                    out.times[i] = (static_cast<double>(k) + (d - y) / (next - y)) * dt;
                    break;
                }
                if (next < lo) {
                    next = 2.0 * lo - next;
                }
                y = next;
            }
            if (k == per_sample_budget) {
                exhausted[i] = 1;
            }
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(work, w);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (std::any_of(exhausted.begin(), exhausted.end(), [](char c) { return c != 0; })) {
        throw DomainError("exit simulation exhausted its step budget");
    }
    double sum = 0.0;
    for (double t : out.times) {
        sum += t;
    }
    out.mean = sum / static_cast<double>(n_samples);
    std::vector<double> normalized(out.times);
    for (double& t : normalized) {
        t /= out.mean;
    }
    out.ks = ks_unit_exponential(normalized);
    EigenOptions eo;
    eo.check_truncation = false;
    const std::size_t n = std::max(opt.grid_n, detail::required_grid(fp, epsilon));
    out.lambda = principal_eigenvalue(fp, epsilon, n, eo).lambda;
    out.lambda_mean = out.lambda * out.mean;
    for (std::size_t i = 0; i < n_samples; ++i) {
        normalized[i] = out.times[i] * out.lambda;
    }
    out.ks_lambda = ks_unit_exponential(normalized);
    return out;
}

} // namespace stochres
