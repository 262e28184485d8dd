// Acceptance checks: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion ...]   (no arguments runs all eight)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stochres/analysis.hpp"
#include "stochres/chain.hpp"
#include "stochres/cli.hpp"
#include "stochres/sde.hpp"
#include "stochres/spectral.hpp"
#include "support/oracles.hpp"
#include "support/thinning.hpp"

using namespace stochres;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

Outcome example_structure() {
    Stopwatch clock;
    const DepthProfile p = DepthProfile::from_potential(ExamplePotential{}.spec());
    double shift_err = 0.0;
    for (int k = 0; k < 1024; ++k) {
        const double t = k / 1024.0;
        shift_err = std::max(shift_err, std::abs(p(Well::plus, t) - p(Well::minus, t + 0.5)));
    }
    // (m, A) from the direct evaluation of the depth
    const double m = 0.5 * (p.extrema(Well::plus).sup + p.extrema(Well::plus).inf);
    const double A = 0.5 * (p.extrema(Well::plus).sup - p.extrema(Well::plus).inf);
    const ResonanceBounds b = resonance_interval(p);
    double template_err = 0.0;
    double printed_err = 0.0;
    for (double h : {0.05, 0.02, 0.01}) {
        const double mu = resonance_point_h(p, h, b.lower, b.upper).mu;
        const double root = std::sqrt(1.0 - std::cos(2.0 * std::numbers::pi * h));
        template_err = std::max(template_err, std::abs(mu - (m - A / std::numbers::sqrt2 * root)));
        // printed instance, in the doubled depth normalization
        printed_err = std::max(printed_err,
                               std::abs(2.0 * mu - (2.0 / 3.0 - 2.0 * std::numbers::sqrt2 / 15.0 * root)));
    }
    const ResonancePoint rp = resonance_point(p);
    const double infl_err = rp.inflection ? std::abs(*rp.inflection - m) : INFINITY;
    const double secs = clock.seconds();
    Outcome o;
    o.pass = shift_err <= 1e-10 && template_err <= 1e-6 && printed_err <= 2e-6 &&
             infl_err <= 1e-9 && secs < 1.0;
    o.detail = "shift err " + num(shift_err) + ", mu_R(h) vs template " + num(template_err) +
               ", printed instance " + num(printed_err) + ", inflection - m " + num(infl_err) +
               ", " + num(secs, 3) + " s";
    return o;
}

Outcome transition_phases() {
    Stopwatch clock;
    double level_err = 0.0;
    double shape_err = 0.0;
    std::size_t checked = 0;
    for (double psi : {0.0, 0.1}) {
        const DepthProfile p = DepthProfile::from_potential(ExamplePotential{psi}.spec());
        const ResonanceBounds b = resonance_interval(p);
        std::mt19937_64 rng(derive_seed(2024, {static_cast<std::uint64_t>(psi * 100)}));
        std::uniform_real_distribution<double> u(b.lower, b.upper);
        for (int k = 0; k < 100; ++k) {
            const double mu = u(rng);
            for (Well w : kWells) {
                const double a = a_mu(p, w, mu);
                shape_err = std::max(shape_err,
                                     std::abs(a - oracle::a_mu(static_cast<int>(w), mu, psi)));
                if (a > 0.0) {
                    level_err = std::max(level_err, std::abs(p(w, a) - mu));
                    ++checked;
                }
            }
        }
    }
    const double secs = clock.seconds();
    Outcome o;
    o.pass = level_err <= 1e-9 && shape_err <= 1e-9 && secs < 1.0;
    o.detail = "max |D(a) - mu| " + num(level_err) + " over " + std::to_string(checked) +
               " phases, arccos form err " + num(shape_err) + ", " + num(secs, 3) + " s";
    return o;
}

Outcome chain_convergence() {
    Stopwatch clock;
    // energy scale 100 puts eps = 0.07 deep enough into the asymptotic regime
    const double scale = 100.0;
    const DepthProfile p = DepthProfile::from_potential(ExamplePotential{0.0, scale}.spec());
    const double mu = scale * (1.0 / 3.0 - 1.0 / 15.0);
    std::vector<double> gaps;
    double f = 0.0;
    for (double eps : {0.3, 0.2, 0.15, 0.1, 0.07}) {
        const ChainQuality q = TwoStateChain(p, {eps, mu, 0.05}).n_quality();
        f = q.theory;
        gaps.push_back(std::abs(q.rate - q.theory));
    }
    bool monotone = true;
    std::string list;
    for (std::size_t k = 0; k < gaps.size(); ++k) {
        if (k > 0 && !(gaps[k] < gaps[k - 1])) {
            monotone = false;
        }
        list += (k ? " " : "") + num(gaps[k] / std::abs(f), 3);
    }
    const double secs = clock.seconds();
    Outcome o;
    o.pass = monotone && gaps.back() <= 0.15 * std::abs(f) && secs < 10.0;
    o.detail = "scale 100, mu " + num(mu) + ", F " + num(f) + ", gap/|F| over eps: " + list + ", " +
               num(secs, 3) + " s";
    return o;
}

Outcome sampler_exactness() {
    Stopwatch clock;
    const DepthProfile p = DepthProfile::from_potential(ExamplePotential{}.spec());
    const std::size_t n = 100'000;
    double worst_inverse = 0.0;
    double worst_thinning = 0.0;
    int setting = 0;
    for (auto [eps, mu] : {std::pair{0.2, 0.2667}, std::pair{0.15, 0.3}, std::pair{0.1, 0.28}}) {
        const TwoStateChain c(p, {eps, mu, 0.05});
        for (Well w : kWells) {
            const auto win = c.window(w);
            const double prob = c.window_probability(w);
            const double se = std::sqrt(prob * (1.0 - prob) / static_cast<double>(n));
            const auto s = static_cast<std::uint64_t>(setting);
            const auto wi = static_cast<std::uint64_t>(index(w));
            std::mt19937_64 a(derive_seed(4, {s, wi, 0}));
            std::mt19937_64 b(derive_seed(4, {s, wi, 1}));
            std::size_t hi = 0;
            std::size_t ht = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const double u = c.sample_transition_phase(w, a);
                hi += u >= win[0] && u <= win[1];
                const double v = thinning::first_transition(p, w, eps, mu, win[1], b);
                ht += v >= win[0] && v <= win[1];
            }
            worst_inverse = std::max(worst_inverse, std::abs(hi / double(n) - prob) / se);
            worst_thinning = std::max(worst_thinning, std::abs(ht / double(n) - prob) / se);
        }
        ++setting;
    }
    const double secs = clock.seconds();
    Outcome o;
    o.pass = worst_inverse <= 3.0 && worst_thinning <= 3.0 && secs < 30.0;
    o.detail = "worst |z| inverse " + num(worst_inverse, 3) + ", thinning " +
               num(worst_thinning, 3) + " (3 settings x 2 wells, 1e5 draws), " + num(secs, 3) +
               " s";
    return o;
}

SimParams sde_params(double eps, double mu) {
    SimParams sp;
    sp.epsilon = eps;
    sp.mu = mu;
    sp.h = 0.05;
    sp.samples = 2000;
    sp.seed = 77;
    return sp;
}

Outcome diffusion_trend() {
    Stopwatch clock;
    const Diffusion d(ExamplePotential{}.spec());
    const double mu = 0.3;
    const auto cells = d.rate_curve({0.35, 0.3, 0.25, 0.2}, {mu}, 0.05, sde_params(0.35, mu));
    std::vector<double> gaps;
    std::string detail;
    bool complete = true;
    for (const auto& c : cells) {
        if (!c.estimate) {
            complete = false;
            detail += "eps " + num(c.epsilon) + ": " + c.error + "; ";
            continue;
        }
        const RateEstimate& e = *c.estimate;
        gaps.push_back(std::abs(e.rate_hat - e.f_theory));
        detail += "eps " + num(c.epsilon) + ": rate " + num(e.rate_hat) + " vs F " +
                  num(e.f_theory) + "; ";
    }
    bool monotone = complete;
    for (std::size_t k = 1; k < gaps.size(); ++k) {
        monotone = monotone && gaps[k] < gaps[k - 1];
    }
    bool within = false;
    if (complete) {
        const RateEstimate& e = *cells.back().estimate;
        const double lo = e.epsilon * std::log1p(-e.ci.hi) - 0.1;
        const double hi = e.epsilon * std::log1p(-e.ci.lo) + 0.1;
        within = e.f_theory >= lo && e.f_theory <= hi;
    }
    Outcome o;
    o.pass = complete && monotone && within;
    o.detail = "mu " + num(mu) + ": " + detail + num(clock.seconds(), 3) + " s";
    return o;
}

Outcome robustness() {
    Stopwatch clock;
    const Diffusion d(ExamplePotential{}.spec());
    const ResonanceBounds b = resonance_interval(d.profile());
    const double w = b.upper - b.lower;
    std::vector<double> mus;
    for (int k = 0; k < 11; ++k) {
        mus.push_back(b.lower + w * (0.1 + 0.08 * k));
    }
    const double eps = 0.2;
    std::size_t arg_chain = 0;
    double best_chain = INFINITY;
    for (std::size_t j = 0; j < mus.size(); ++j) {
        const double r = TwoStateChain(d.profile(), {eps, mus[j], 0.05}).n_quality().rate;
        if (r < best_chain) {
            best_chain = r;
            arg_chain = j;
        }
    }
    const auto cells = d.rate_curve({eps}, mus, 0.05, sde_params(eps, mus[0]));
    std::size_t failed = 0;
    std::size_t arg_sde = 0;
    double best_sde = INFINITY;
    std::string first_error;
    for (const auto& c : cells) {
        if (!c.estimate) {
            if (first_error.empty()) {
                first_error = "mu " + num(c.mu) + ": " + c.error;
            }
            ++failed;
            continue;
        }
        if (c.estimate->rate_hat < best_sde) {
            best_sde = c.estimate->rate_hat;
            arg_sde = c.mu_index;
        }
    }
    Outcome o;
    const std::size_t apart = arg_chain > arg_sde ? arg_chain - arg_sde : arg_sde - arg_chain;
    o.pass = failed == 0 && apart <= 1;
    o.detail = "chain argmin mu " + num(mus[arg_chain]);
    if (failed < cells.size()) {
        o.detail += ", diffusion argmin mu " + num(mus[arg_sde]);
    }
    o.detail += ", " + std::to_string(failed) + "/11 diffusion cells failed";
    if (!first_error.empty()) {
        o.detail += " (" + first_error + ")";
    }
    o.detail += ", " + num(clock.seconds(), 3) + " s";
    return o;
}

Outcome spectral_asymptotics() {
    Stopwatch clock;
    const PotentialSpec s = ExamplePotential{}.spec();
    const FrozenPotential shallow = freeze(s, FreezeMode::pointwise, 0.0, 0.0, 1.75, 0.5);
    EigenOptions opt;
    opt.check_refinement = true;
    const std::vector<double> eps_list{0.2, 0.15, 0.1, 0.07};
    const KramersTable kt = kramers_check(shallow, eps_list, 4096, opt);
    double invariance = 0.0;
    for (double e : eps_list) {
        const std::size_t n = std::max<std::size_t>(4096, detail::required_grid(shallow, e));
        const EigenResult r = principal_eigenvalue(shallow, e, n, opt);
        invariance = std::max({invariance, *r.truncation_change, *r.refinement_change});
    }
    std::string gaps;
    for (const auto& r : kt.rows) {
        gaps += (gaps.empty() ? "" : " ") + num(r.gap, 3);
    }
    // exit law at the deepest instant of the well
    const FrozenPotential deep = freeze(s, FreezeMode::pointwise, 0.25, 0.25, 1.75, 0.5);
    const ExitLawResult ex = exit_law_check(deep, 0.15, 2000, 31);
    Outcome o;
    const double secs = clock.seconds();
    o.pass = kt.monotone && ex.ks <= 0.05 && ex.lambda_mean >= 0.8 && ex.lambda_mean <= 1.2 &&
             invariance < 0.01 && secs < 300.0;
    o.detail = "gaps " + gaps + (kt.monotone ? " (monotone)" : " (NOT monotone)") + ", KS " +
               num(ex.ks, 3) + " (vs Exp(lambda) " + num(ex.ks_lambda, 3) + "), lambda*mean " +
               num(ex.lambda_mean, 4) + ", truncation/refinement change " + num(invariance, 3) +
               ", " + num(secs, 3) + " s";
    return o;
}

std::string read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism() {
    Stopwatch clock;
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "stochres_acceptance_determinism";
    fs::remove_all(root);
    struct Sweep {
        std::string config;
        std::vector<std::string> files;
    };
    const std::vector<Sweep> sweeps{
        {"kind = sde-sweep\nepsilon_list = 0.35, 0.3\nmu_list = 0.3, 0.32\nsamples = 300\n"
         "seed = 5\nh = 0.05\n",
         {"sde_sweep.csv", "sde_sweep_errors.csv"}},
        {"kind = compare\nepsilon_list = 0.35\nmu_points = 3\nsamples = 200\nseed = 6\n",
         {"compare.csv", "compare_argmin.csv"}},
        {"kind = chain-sweep\nepsilon_list = 0.2, 0.1\nmu_points = 5\n"
         "interspike_transitions = 2000\n",
         {"chain_sweep.csv", "interspike.dat"}},
        {"kind = spectral\nepsilon_list = 0.4\nfreeze_t = 0.25\nexit_samples = 200\n",
         {"kramers.csv", "exit_law.csv"}},
    };
    std::size_t identical = 0;
    std::size_t total = 0;
    std::string mismatch;
    for (std::size_t k = 0; k < sweeps.size(); ++k) {
        std::string outputs[2];
        int w = 0;
        for (const char* workers : {"1", "8"}) {
            const fs::path dir = root / (std::to_string(k) + "_" + workers);
            const ExperimentConfig c = parse_config(
                sweeps[k].config, {{"output_dir", dir.string()}, {"workers", workers}});
            const RunResult r = run(c);
            if (r.status != kExitOk) {
                return {false, c.kind + " failed: " + r.message};
            }
            for (const auto& f : sweeps[k].files) {
                outputs[w] += f + "\n" + read_all(dir / f);
            }
            ++w;
        }
        ++total;
        if (outputs[0] == outputs[1] && !outputs[0].empty()) {
            ++identical;
        } else if (mismatch.empty()) {
            mismatch = " (first mismatch in sweep " + std::to_string(k) + ")";
        }
    }
    return {identical == total, std::to_string(identical) + "/" + std::to_string(total) +
                                    " sweeps byte-identical under 1 and 8 workers" + mismatch +
                                    ", " + num(clock.seconds(), 3) + " s"};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"example structure", example_structure},
        {"a_mu consistency", transition_phases},
        {"chain rate convergence", chain_convergence},
        {"chain sampler exactness", sampler_exactness},
        {"diffusion rate trend", diffusion_trend},
        {"robustness of the resonance point", robustness},
        {"spectral asymptotics", spectral_asymptotics},
        {"determinism", determinism},
    };
    std::vector<int> selected;
    for (int k = 1; k < argc; ++k) {
        const int c = std::atoi(argv[k]);
        if (c < 1 || c > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "unknown criterion '%s'\n", argv[k]);
            return 2;
        }
        selected.push_back(c);
    }
    if (selected.empty()) {
        for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) {
            selected.push_back(k);
        }
    }
    int failures = 0;
    for (int k : selected) {
        const auto& [name, check] = criteria[static_cast<std::size_t>(k - 1)];
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", k, name,
                    o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
