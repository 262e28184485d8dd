#pragma once

// Experiment runner: flat key = value configuration, dispatch to the
// modules, CSV tables, plot-data column files and a metadata sidecar that
// re-parses to the same configuration.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stochres/analysis.hpp"
#include "stochres/chain.hpp"
#include "stochres/errors.hpp"
#include "stochres/potential.hpp"
#include "stochres/sde.hpp"
#include "stochres/spectral.hpp"

namespace stochres {

inline constexpr const char* kVersion = "stochres 0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

namespace config_detail {

struct KeySpec {
    const char* name;
    const char* fallback;
    const char* help;
};

// clang-format off
inline const std::vector<KeySpec>& keys() {
    static const std::vector<KeySpec> k{
        {"kind", "", "validate | analyze | sde-sweep | chain-sweep | spectral | resonance-scan | compare"},
        {"potential", "example", "example | scaled_example"},
        {"psi", "0", "phase of the example, in [0, 1/4)"},
        {"scale", "1", "energy scale of scaled_example"},
        {"epsilon_list", "0.2", "noise intensities"},
        {"mu_list", "", "time-scale parameters; omitted = mu_points inside I_R"},
        {"mu_points", "11", "size of the derived mu grid"},
        {"mu_margin", "0.1", "fraction of I_R left out at each end of the derived grid"},
        {"h", "0.05", "window half-width in periods"},
        {"h_list", "0.08,0.04,0.02,0.01,0.005", "window widths for mu_R(h)"},
        {"search_grid", "512", "coarse grid of the mu_R(h) search"},
        {"samples", "2000", "Monte Carlo samples per well"},
        {"seed", "1", "master seed"},
        {"workers", "1", "worker threads"},
        {"step", "0", "Euler step; 0 = min(eps,1)/(10 L)"},
        {"confidence", "0.95", "Wilson interval level"},
        {"chain_tolerance", "1e-12", "relative quadrature tolerance"},
        {"chain_panels", "1024", "panels per period in the hazard table"},
        {"interspike_transitions", "0", "transitions for the interspike histogram; 0 = none"},
        {"interspike_periods", "8", "histogram range in periods"},
        {"interspike_bins", "50", "bins per period"},
        {"freeze_mode", "pointwise", "pointwise | inf | sup"},
        {"freeze_t", "0.25", "freeze time (start of the interval for inf/sup)"},
        {"freeze_t_end", "0.25", "end of the freeze interval"},
        {"truncation", "1.75", "left truncation L of the frozen domain"},
        {"dirichlet", "0.5", "absorbing point d"},
        {"grid_n", "4096", "eigen grid intervals"},
        {"exit_samples", "0", "simulated exits for the exit-law check; 0 = none"},
        {"strict", "false", "fail on any per-cell error"},
        {"output_dir", "out", "output directory"},
    };
    return k;
}
// clang-format on

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string where(int line) {
    return line > 0 ? "line " + std::to_string(line) + ": " : "";
}

inline double to_double(const std::string& v, const std::string& key, int line) {
    const char* begin = v.c_str();
    char* end = nullptr;
    errno = 0;
    const double d = std::strtod(begin, &end);
    if (v.empty() || end != begin + v.size() || errno == ERANGE || !std::isfinite(d)) {
        throw ConfigError(where(line) + key + ": '" + v + "' is not a finite number");
    }
    return d;
}

inline std::uint64_t to_u64(const std::string& v, const std::string& key, int line) {
    const char* begin = v.c_str();
    char* end = nullptr;
    errno = 0;
    if (v.empty() || v.front() == '-') {
        throw ConfigError(where(line) + key + ": '" + v + "' is not a non-negative integer");
    }
    const unsigned long long u = std::strtoull(begin, &end, 10);
    if (end != begin + v.size() || errno == ERANGE) {
        throw ConfigError(where(line) + key + ": '" + v + "' is not a non-negative integer");
    }
    return u;
}

inline std::vector<double> to_list(const std::string& v, const std::string& key, int line) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(v);
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) {
            throw ConfigError(where(line) + key + ": empty list element");
        }
        out.push_back(to_double(t, key, line));
    }
    return out;
}

inline bool to_bool(const std::string& v, const std::string& key, int line) {
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw ConfigError(where(line) + key + ": '" + v + "' is not a boolean");
}

} // namespace config_detail

struct ConfigEntry {
    std::string value;
    int line = 0;
    bool defaulted = true;
};

struct ExperimentConfig {
    std::string kind;
    std::string potential = "example";
    double psi = 0.0;
    double scale = 1.0;
    std::vector<double> epsilon_list;
    std::vector<double> mu_list;
    bool mu_derived = true;
    std::size_t mu_points = 11;
    double mu_margin = 0.1;
    double h = 0.05;
    std::vector<double> h_list;
    std::size_t search_grid = 512;
    std::size_t samples = 2000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    double step = 0.0;
    double confidence = 0.95;
    double chain_tolerance = 1e-12;
    std::size_t chain_panels = 1024;
    std::size_t interspike_transitions = 0;
    double interspike_periods = 8.0;
    std::size_t interspike_bins = 50;
    FreezeMode freeze_mode = FreezeMode::pointwise;
    double freeze_t = 0.25;
    double freeze_t_end = 0.25;
    double truncation = 1.75;
    double dirichlet = 0.5;
    std::size_t grid_n = 4096;
    std::size_t exit_samples = 0;
    bool strict = false;
    std::string output_dir = "out";

    /// Raw text of every key, including applied defaults.
    std::map<std::string, ConfigEntry> entries;

    std::vector<std::string> defaulted_keys() const {
        std::vector<std::string> out;
        for (const auto& k : config_detail::keys()) {
            const auto it = entries.find(k.name);
            if (it != entries.end() && it->second.defaulted) {
                out.emplace_back(k.name);
            }
        }
        return out;
    }

    /// Re-parseable configuration text.
    std::string echo() const {
        std::ostringstream os;
        os << "# " << kVersion << "\n";
        for (const auto& k : config_detail::keys()) {
            const auto it = entries.find(k.name);
            if (it == entries.end()) {
                continue;
            }
            if (std::string(k.name) == "mu_list" && it->second.defaulted) {
                continue;
            }
            os << k.name << " = " << it->second.value << "\n";
        }
        return os.str();
    }

    PotentialSpec potential_spec() const { return make_potential(potential, psi, scale); }
};

namespace config_detail {

inline void require(bool ok, const ExperimentConfig& c, const std::string& key,
                    const std::string& what) {
    if (!ok) {
        const auto it = c.entries.find(key);
        const int line = it == c.entries.end() ? 0 : it->second.line;
        throw ConfigError(where(line) + key + " = " +
                          (it == c.entries.end() ? std::string("?") : it->second.value) + ": " +
                          what);
    }
}

inline void build_typed(ExperimentConfig& c) {
    auto raw = [&](const char* k) -> const ConfigEntry& { return c.entries.at(k); };
    auto num = [&](const char* k) { return to_double(raw(k).value, k, raw(k).line); };
    auto count = [&](const char* k) {
        return static_cast<std::size_t>(to_u64(raw(k).value, k, raw(k).line));
    };

    c.kind = raw("kind").value;
    static const std::vector<std::string> kinds{"validate",       "analyze",   "sde-sweep",
                                                "chain-sweep",    "spectral",  "resonance-scan",
                                                "compare"};
    require(std::find(kinds.begin(), kinds.end(), c.kind) != kinds.end(), c, "kind",
            "unknown experiment kind");
    c.potential = raw("potential").value;
    require(c.potential == "example" || c.potential == "scaled_example", c, "potential",
            "unknown potential (registered: example, scaled_example)");
    c.psi = num("psi");
    require(c.psi >= 0.0 && c.psi < 0.25, c, "psi",
            "the example's phase must lie in [0, 1/4)");
    c.scale = num("scale");
    require(c.scale > 0.0, c, "scale", "must be positive");
    require(c.potential == "scaled_example" || c.scale == 1.0, c, "scale",
            "only scaled_example takes a scale");

    c.epsilon_list = to_list(raw("epsilon_list").value, "epsilon_list", raw("epsilon_list").line);
    require(!c.epsilon_list.empty(), c, "epsilon_list", "empty epsilon grid");
    for (double e : c.epsilon_list) {
        require(e > 0.0, c, "epsilon_list", "noise intensities must be positive");
    }
    const ConfigEntry& mu = raw("mu_list");
    c.mu_derived = mu.defaulted;
    if (!mu.defaulted) {
        require(!mu.value.empty(), c, "mu_list", "empty mu grid");
        c.mu_list = to_list(mu.value, "mu_list", mu.line);
        for (double m : c.mu_list) {
            require(m >= 0.0, c, "mu_list", "mu must be non-negative");
        }
    }
    c.mu_points = count("mu_points");
    require(c.mu_points >= 1, c, "mu_points", "empty mu grid");
    c.mu_margin = num("mu_margin");
    require(c.mu_margin > 0.0 && c.mu_margin < 0.5, c, "mu_margin", "must lie in (0, 1/2)");
    c.h = num("h");
    require(c.h > 0.0 && c.h < 0.5, c, "h", "window half-width must lie in (0, 1/2)");
    c.h_list = to_list(raw("h_list").value, "h_list", raw("h_list").line);
    require(!c.h_list.empty(), c, "h_list", "empty window list");
    for (double v : c.h_list) {
        require(v > 0.0 && v < 0.5, c, "h_list", "window half-widths must lie in (0, 1/2)");
    }
    c.search_grid = count("search_grid");
    require(c.search_grid >= 3, c, "search_grid", "needs at least 3 points");
    c.samples = count("samples");
    require(c.samples >= 100, c, "samples", "needs at least 100 samples per well");
    c.seed = to_u64(raw("seed").value, "seed", raw("seed").line);
    const std::size_t w = count("workers");
    require(w >= 1 && w <= 1024, c, "workers", "must lie in [1, 1024]");
    c.workers = static_cast<unsigned>(w);
    c.step = num("step");
    require(c.step >= 0.0, c, "step", "must be non-negative");
    c.confidence = num("confidence");
    require(c.confidence > 0.0 && c.confidence < 1.0, c, "confidence", "must lie in (0, 1)");
    c.chain_tolerance = num("chain_tolerance");
    require(c.chain_tolerance > 0.0 && c.chain_tolerance < 1e-2, c, "chain_tolerance",
            "must lie in (0, 1e-2)");
    c.chain_panels = count("chain_panels");
    require(c.chain_panels >= 16, c, "chain_panels", "needs at least 16 panels");
    c.interspike_transitions = count("interspike_transitions");
    c.interspike_periods = num("interspike_periods");
    require(c.interspike_periods >= 1.0, c, "interspike_periods", "must be at least 1");
    c.interspike_bins = count("interspike_bins");
    require(c.interspike_bins >= 1, c, "interspike_bins", "must be positive");
    const std::string fm = raw("freeze_mode").value;
    require(fm == "pointwise" || fm == "inf" || fm == "sup", c, "freeze_mode",
            "must be pointwise, inf or sup");
    c.freeze_mode = fm == "pointwise" ? FreezeMode::pointwise
                    : fm == "inf"     ? FreezeMode::inf_over
                                      : FreezeMode::sup_over;
    c.freeze_t = num("freeze_t");
    c.freeze_t_end = num("freeze_t_end");
    require(c.freeze_t_end >= c.freeze_t && c.freeze_t_end - c.freeze_t <= 1.0, c,
            "freeze_t_end", "freeze interval must lie within one period");
    c.truncation = num("truncation");
    require(c.truncation > 1.0, c, "truncation", "must lie beyond the minimum at -1");
    c.dirichlet = num("dirichlet");
    require(c.dirichlet != 0.0 && c.dirichlet > -1.0, c, "dirichlet",
            "d must differ from 0 and lie right of -1");
    c.grid_n = count("grid_n");
    require(c.grid_n >= 512, c, "grid_n", "needs at least 512 intervals");
    c.exit_samples = count("exit_samples");
    c.strict = to_bool(raw("strict").value, "strict", raw("strict").line);
    c.output_dir = raw("output_dir").value;
    require(!c.output_dir.empty(), c, "output_dir", "must not be empty");
}

} // namespace config_detail

/// Parses flat `key = value` text (`#` starts a comment) and applies
/// defaults. `overrides` (e.g. from command-line flags) win over the text.
inline ExperimentConfig parse_config(const std::string& text,
                                     const std::map<std::string, std::string>& overrides = {}) {
    using namespace config_detail;
    ExperimentConfig c;
    std::vector<std::string> unknown;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    auto known = [](const std::string& k) {
        return std::any_of(keys().begin(), keys().end(),
                           [&](const KeySpec& s) { return k == s.name; });
    };
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where(number) + "expected 'key = value', got '" + body + "'");
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (!known(key)) {
            unknown.push_back(where(number) + key);
            continue;
        }
        const auto it = c.entries.find(key);
        if (it != c.entries.end()) {
            throw ConfigError(where(number) + "duplicate key '" + key + "' (first set on line " +
                              std::to_string(it->second.line) + ")");
        }
        c.entries[key] = {value, number, false};
    }
    if (!unknown.empty()) {
        std::string msg = "unknown keys:";
        for (const auto& u : unknown) {
            msg += " [" + u + "]";
        }
        throw ConfigError(msg);
    }
    for (const auto& [k, v] : overrides) {
        if (!known(k)) {
            throw ConfigError("unknown override '" + k + "'");
        }
        const auto it = c.entries.find(k);
        if (k == "kind" && it != c.entries.end() && it->second.value != v) {
            throw ConfigError(where(it->second.line) + "config kind '" + it->second.value +
                              "' does not match the subcommand '" + v + "'");
        }
        c.entries[k] = {v, 0, false};
    }
    if (c.entries.find("kind") == c.entries.end()) {
        throw ConfigError("missing required key 'kind'");
    }
    for (const auto& k : keys()) {
        if (c.entries.find(k.name) == c.entries.end()) {
            c.entries[k.name] = {k.fallback, 0, true};
        }
    }
    build_typed(c);
    return c;
}

/// Whitespace-separated numeric table with a one-line header.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    out << text;
}

inline void write_csv(const std::filesystem::path& path, const Table& t) {
    std::ostringstream os;
    for (std::size_t k = 0; k < t.columns.size(); ++k) {
        os << (k ? "," : "") << t.columns[k];
    }
    os << "\n";
    for (const auto& r : t.rows) {
        for (std::size_t k = 0; k < r.size(); ++k) {
            os << (k ? "," : "") << r[k];
        }
        os << "\n";
    }
    write_text(path, os.str());
}

/// Writes `<name>.dat` as whitespace-separated columns with a header line.
inline std::filesystem::path emit_plotdata(const std::filesystem::path& dir,
                                           const std::string& name, const Table& t) {
    std::ostringstream os;
    os << "#";
    for (const auto& c : t.columns) {
        os << " " << c;
    }
    os << "\n";
    for (const auto& r : t.rows) {
        for (std::size_t k = 0; k < r.size(); ++k) {
            os << (k ? " " : "") << r[k];
        }
        os << "\n";
    }
    const auto path = dir / (name + ".dat");
    write_text(path, os.str());
    return path;
}

struct RunResult {
    int status = kExitOk;
    std::string message;
    std::vector<std::filesystem::path> files;
    std::size_t cell_errors = 0;
};

namespace run_detail {

struct Context {
    const ExperimentConfig& cfg;
    std::filesystem::path dir;
    std::ostringstream summary;
    RunResult result;

    void csv(const std::string& name, const Table& t) {
        const auto p = dir / (name + ".csv");
        write_csv(p, t);
        result.files.push_back(p);
    }
    void plot(const std::string& name, const Table& t) {
        result.files.push_back(emit_plotdata(dir, name, t));
    }
    void cell_error(const std::string& what) {
        ++result.cell_errors;
        summary << "cell error: " << what << "\n";
    }
};

inline std::vector<double> mu_grid(const ExperimentConfig& cfg, const DepthProfile& profile) {
    if (!cfg.mu_derived) {
        return cfg.mu_list;
    }
    const ResonanceBounds b = resonance_interval(profile);
    if (b.empty) {
        throw DomainError("resonance interval is empty; give mu_list explicitly");
    }
    const double w = b.upper - b.lower;
    const double lo = b.lower + cfg.mu_margin * w;
    const double hi = b.upper - cfg.mu_margin * w;
    std::vector<double> out;
    for (std::size_t k = 0; k < cfg.mu_points; ++k) {
        out.push_back(cfg.mu_points == 1
                          ? 0.5 * (lo + hi)
                          : lo + (hi - lo) * static_cast<double>(k) /
                                     static_cast<double>(cfg.mu_points - 1));
    }
    return out;
}

inline SimParams sim_params(const ExperimentConfig& cfg) {
    SimParams p;
    p.h = cfg.h;
    p.samples = cfg.samples;
    p.seed = cfg.seed;
    p.step = cfg.step;
    p.workers = cfg.workers;
    p.confidence = cfg.confidence;
    return p;
}

inline std::vector<std::string> sde_columns() {
    return {"epsilon", "mu",       "h",     "n",     "n_hit_window_minus", "n_hit_window_plus",
            "n_truncated", "n_escaped", "M_hat", "ci_lo", "ci_hi",          "rate_hat",
            "F_theory"};
}

inline std::vector<std::string> sde_row(const RateEstimate& e) {
    return {fmt(e.epsilon),
            fmt(e.mu),
            fmt(e.h),
            fmt(e.n),
            fmt(e.of(Well::minus).hit_window),
            fmt(e.of(Well::plus).hit_window),
            fmt(e.n_truncated()),
            fmt(e.n_escaped()),
            fmt(e.m_hat),
            fmt(e.ci.lo),
            fmt(e.ci.hi),
            fmt(e.rate_hat),
            fmt(e.f_theory)};
}

inline void run_validate(Context& ctx) {
    const PotentialSpec spec = ctx.cfg.potential_spec();
    const ValidationReport rep = validate_spec(spec);
    Table t{{"check", "passed", "detail"}, {}};
    for (const auto& c : rep.checks) {
        std::string detail = c.detail;
        std::replace(detail.begin(), detail.end(), ',', ';');
        t.rows.push_back({c.name, c.passed ? "1" : "0", detail});
        ctx.summary << c.name << ": " << (c.passed ? "pass" : "FAIL") << "\n";
    }
    ctx.summary << "drift_lipschitz = " << fmt(rep.drift_lipschitz) << "\n";
    ctx.csv("validation", t);
    if (!rep.all_passed()) {
        ctx.result.status = kExitNumerical;
        ctx.result.message = "potential failed validation";
    }
}

inline void run_analyze(Context& ctx) {
    const PotentialSpec spec = ctx.cfg.potential_spec();
    const DepthProfile profile = DepthProfile::from_potential(spec);
    const ResonanceBounds b = resonance_interval(profile);
    std::ostringstream rep;
    rep << "potential = " << spec.name() << "\n";
    for (Well w : kWells) {
        const auto& e = profile.extrema(w);
        const char* tag = w == Well::minus ? "minus" : "plus";
        rep << "depth_" << tag << "_inf = " << fmt(e.inf) << "\n";
        rep << "depth_" << tag << "_sup = " << fmt(e.sup) << "\n";
    }
    if (const auto phi = profile.phase_shift()) {
        rep << "phase_shift = " << fmt(*phi) << "\n";
    }
    rep << "resonance_lower = " << fmt(b.lower) << "\n";
    rep << "resonance_upper = " << fmt(b.upper) << "\n";
    rep << "resonance_empty = " << (b.empty ? "true" : "false") << "\n";

    Table muh{{"h", "mu_R_h", "F", "interior"}, {}};
    std::optional<ResonancePoint> rp;
    if (!b.empty) {
        ResonancePointOptions opt;
        opt.h_sequence = ctx.cfg.h_list;
        opt.search_grid = ctx.cfg.search_grid;
        rp = resonance_point(profile, opt);
        for (const auto& s : rp->samples) {
            muh.rows.push_back({fmt(s.h), fmt(s.mu), fmt(s.value), s.interior() ? "1" : "0"});
        }
        rep << "mu_R = " << fmt(rp->mu_r) << "\n";
        rep << "mu_R_method = " << to_string(rp->method) << "\n";
        if (rp->inflection) {
            rep << "mu_R_inflection = " << fmt(*rp->inflection) << "\n";
        } else {
            rep << "mu_R_inflection = unavailable (" << rp->inflection_note << ")\n";
        }
        if (rp->extrapolated) {
            rep << "mu_R_extrapolated = " << fmt(*rp->extrapolated) << "\n";
            rep << "extrapolation_order = " << fmt(rp->observed_order) << "\n";
        }
        if (const auto g = rp->gap()) {
            rep << "method_gap = " << fmt(*g) << "\n";
        }

        Table q{{"mu", "F", "well"}, {}};
        const double w = b.upper - b.lower;
        for (std::size_t k = 0; k < 50; ++k) {
            const double mu = b.lower + w * (static_cast<double>(k) + 0.5) / 50.0;
            try {
                const QualityExponent f = quality_exponent(profile, mu, ctx.cfg.h);
                q.rows.push_back({fmt(mu), fmt(f.value), fmt(static_cast<int>(f.well))});
            } catch (const Error& e) {
                ctx.cell_error("F at mu = " + fmt(mu) + ": " + e.what());
            }
        }
        ctx.csv("quality", q);
    }
    ctx.csv("resonance_point_h", muh);
    Table depth{{"t", "D_minus", "D_plus", "mu_line"}, {}};
    const double line = rp ? rp->mu_r : b.lower;
    for (std::size_t k = 0; k <= 512; ++k) {
        const double t = static_cast<double>(k) / 512.0;
        depth.rows.push_back(
            {fmt(t), fmt(profile(Well::minus, t)), fmt(profile(Well::plus, t)), fmt(line)});
    }
    ctx.plot("depth_profile", depth);
    write_text(ctx.dir / "resonance.txt", rep.str());
    ctx.result.files.push_back(ctx.dir / "resonance.txt");
    ctx.summary << rep.str();
}

inline void run_chain_sweep(Context& ctx) {
    const DepthProfile profile = DepthProfile::from_potential(ctx.cfg.potential_spec());
    const auto mus = mu_grid(ctx.cfg, profile);
    Table t{{"epsilon", "mu", "h", "N_exact", "rate", "F_theory"}, {}};
    for (double eps : ctx.cfg.epsilon_list) {
        for (double mu : mus) {
            try {
                TwoStateChain chain(profile, {eps, mu, ctx.cfg.h, ctx.cfg.chain_tolerance,
                                              ctx.cfg.chain_panels});
                const ChainQuality q = chain.n_quality();
                t.rows.push_back(
                    {fmt(eps), fmt(mu), fmt(ctx.cfg.h), fmt(q.n_exact), fmt(q.rate), fmt(q.theory)});
            } catch (const Error& e) {
                ctx.cell_error("chain at eps = " + fmt(eps) + ", mu = " + fmt(mu) + ": " + e.what());
            }
        }
    }
    ctx.csv("chain_sweep", t);
    if (ctx.cfg.interspike_transitions > 0) {
        const double mu = mus[mus.size() / 2];
        const double eps = ctx.cfg.epsilon_list.back();
        TwoStateChain chain(profile,
                            {eps, mu, ctx.cfg.h, ctx.cfg.chain_tolerance, ctx.cfg.chain_panels});
        const InterspikeResult r = chain.interspike_histogram(
            ctx.cfg.interspike_transitions, ctx.cfg.seed, ctx.cfg.interspike_periods,
            ctx.cfg.interspike_bins);
        Table h{{"bin_lo", "bin_hi", "count"}, {}};
        for (std::size_t k = 0; k < r.intervals.counts.size(); ++k) {
            h.rows.push_back({fmt(r.intervals.bin_lo(k)), fmt(r.intervals.bin_hi(k)),
                              fmt(r.intervals.counts[k])});
        }
        ctx.plot("interspike", h);
        ctx.summary << "interspike histogram at eps = " << fmt(eps) << ", mu = " << fmt(mu)
                    << ", overflow = " << r.intervals.overflow << "\n";
    }
}

inline void run_sde_sweep(Context& ctx, const std::string& name) {
    const Diffusion diffusion(ctx.cfg.potential_spec());
    const auto mus = mu_grid(ctx.cfg, diffusion.profile());
    const auto cells =
        diffusion.rate_curve(ctx.cfg.epsilon_list, mus, ctx.cfg.h, sim_params(ctx.cfg));
    Table t{sde_columns(), {}};
    Table errors{{"epsilon", "mu", "error"}, {}};
    for (const auto& c : cells) {
        if (c.estimate) {
            t.rows.push_back(sde_row(*c.estimate));
        } else {
            std::string e = c.error;
            std::replace(e.begin(), e.end(), ',', ';');
            errors.rows.push_back({fmt(c.epsilon), fmt(c.mu), e});
            ctx.cell_error("sde at eps = " + fmt(c.epsilon) + ", mu = " + fmt(c.mu) + ": " +
                           c.error);
        }
    }
    ctx.csv(name, t);
    ctx.csv(name + "_errors", errors);
    if (name == "resonance_scan") {
        Table am{{"epsilon", "mu_argmin_rate", "mu_argmin_F"}, {}};
        for (std::size_t i = 0; i < ctx.cfg.epsilon_list.size(); ++i) {
            double best_rate = kInf;
            double best_f = kInf;
            double arg_rate = std::nan("");
            double arg_f = std::nan("");
            for (const auto& c : cells) {
                if (c.eps_index != i || !c.estimate) {
                    continue;
                }
                if (c.estimate->rate_hat < best_rate) {
                    best_rate = c.estimate->rate_hat;
                    arg_rate = c.mu;
                }
                if (c.estimate->f_theory < best_f) {
                    best_f = c.estimate->f_theory;
                    arg_f = c.mu;
                }
            }
            am.rows.push_back({fmt(ctx.cfg.epsilon_list[i]), fmt(arg_rate), fmt(arg_f)});
        }
        ctx.csv("resonance_scan_argmin", am);
    }
}

inline void run_compare(Context& ctx) {
    const Diffusion diffusion(ctx.cfg.potential_spec());
    const auto mus = mu_grid(ctx.cfg, diffusion.profile());
    const auto cells =
        diffusion.rate_curve(ctx.cfg.epsilon_list, mus, ctx.cfg.h, sim_params(ctx.cfg));
    Table t{{"epsilon", "mu", "h", "chain_rate", "sde_rate", "sde_ci_lo", "sde_ci_hi", "F_theory"},
            {}};
    Table am{{"epsilon", "mu_argmin_chain", "mu_argmin_sde", "cells_apart"}, {}};
    for (std::size_t i = 0; i < ctx.cfg.epsilon_list.size(); ++i) {
        const double eps = ctx.cfg.epsilon_list[i];
        std::optional<std::size_t> arg_chain;
        std::optional<std::size_t> arg_sde;
        double best_chain = kInf;
        double best_sde = kInf;
        for (const auto& c : cells) {
            if (c.eps_index != i) {
                continue;
            }
            double chain_rate = std::nan("");
            try {
                TwoStateChain chain(diffusion.profile(), {eps, c.mu, ctx.cfg.h,
                                                          ctx.cfg.chain_tolerance,
                                                          ctx.cfg.chain_panels});
                chain_rate = chain.n_quality().rate;
                if (chain_rate < best_chain) {
                    best_chain = chain_rate;
                    arg_chain = c.mu_index;
                }
            } catch (const Error& e) {
                ctx.cell_error("chain at eps = " + fmt(eps) + ", mu = " + fmt(c.mu) + ": " +
                               e.what());
            }
            if (!c.estimate) {
                ctx.cell_error("sde at eps = " + fmt(eps) + ", mu = " + fmt(c.mu) + ": " + c.error);
                t.rows.push_back({fmt(eps), fmt(c.mu), fmt(ctx.cfg.h), fmt(chain_rate), "nan", "nan",
                                  "nan", "nan"});
                continue;
            }
            const RateEstimate& e = *c.estimate;
            if (e.rate_hat < best_sde) {
                best_sde = e.rate_hat;
                arg_sde = c.mu_index;
            }
            t.rows.push_back({fmt(eps), fmt(c.mu), fmt(ctx.cfg.h), fmt(chain_rate),
                              fmt(e.rate_hat), fmt(eps * std::log1p(-e.ci.lo)),
                              fmt(eps * std::log1p(-e.ci.hi)), fmt(e.f_theory)});
        }
        const std::string apart =
            arg_chain && arg_sde
                ? fmt(static_cast<std::size_t>(*arg_chain > *arg_sde ? *arg_chain - *arg_sde
                                                                     : *arg_sde - *arg_chain))
                : std::string("nan");
        am.rows.push_back({fmt(eps), arg_chain ? fmt(mus[*arg_chain]) : "nan",
                           arg_sde ? fmt(mus[*arg_sde]) : "nan", apart});
        ctx.summary << "eps = " << fmt(eps) << ": argmin chain "
                    << (arg_chain ? fmt(mus[*arg_chain]) : "none") << ", argmin diffusion "
                    << (arg_sde ? fmt(mus[*arg_sde]) : "none") << "\n";
    }
    ctx.csv("compare", t);
    ctx.csv("compare_argmin", am);
}

inline void run_spectral(Context& ctx) {
    const PotentialSpec spec = ctx.cfg.potential_spec();
    const FrozenPotential fp = freeze(spec, ctx.cfg.freeze_mode, ctx.cfg.freeze_t,
                                      ctx.cfg.freeze_t_end, ctx.cfg.truncation, ctx.cfg.dirichlet);
    std::vector<double> eps = ctx.cfg.epsilon_list;
    std::sort(eps.begin(), eps.end(), std::greater<>());
    eps.erase(std::unique(eps.begin(), eps.end()), eps.end());
    const KramersTable kt = kramers_check(fp, eps, ctx.cfg.grid_n);
    Table t{{"epsilon", "lambda", "eps_log_lambda", "target", "gap"}, {}};
    for (const auto& r : kt.rows) {
        t.rows.push_back(
            {fmt(r.epsilon), fmt(r.lambda), fmt(r.eps_log_lambda), fmt(r.target), fmt(r.gap)});
    }
    ctx.csv("kramers", t);
    ctx.summary << "pseudopotential = " << fmt(fp.pseudopotential().value) << "\n";
    ctx.summary << "gap shrinks monotonically: " << (kt.monotone ? "yes" : "no") << "\n";
    if (!kt.monotone) {
        ctx.cell_error("Kramers gap is not monotone along the epsilon list");
    }
    if (ctx.cfg.exit_samples > 0) {
        ExitLawOptions opt;
        opt.workers = ctx.cfg.workers;
        opt.grid_n = ctx.cfg.grid_n;
        Table e{{"epsilon", "samples", "ks", "ks_lambda", "lambda", "mean_exit",
                 "lambda_times_mean"},
                {}};
        for (double x : eps) {
            const ExitLawResult r = exit_law_check(fp, x, ctx.cfg.exit_samples, ctx.cfg.seed, opt);
            e.rows.push_back({fmt(x), fmt(ctx.cfg.exit_samples), fmt(r.ks), fmt(r.ks_lambda),
                              fmt(r.lambda),
                              fmt(r.mean), fmt(r.lambda_mean)});
        }
        ctx.csv("exit_law", e);
    }
}

} // namespace run_detail

/// Runs one experiment and writes its artifacts into `cfg.output_dir`.
inline RunResult run(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    run_detail::Context ctx{cfg, fs::path(cfg.output_dir), {}, {}};
    try {
        std::error_code ec;
        fs::create_directories(ctx.dir, ec);
        if (ec || !fs::is_directory(ctx.dir)) {
            throw ConfigError("output directory '" + cfg.output_dir + "' is not writable");
        }
        const auto meta = ctx.dir / "metadata.cfg";
        write_text(meta, cfg.echo());
        ctx.result.files.push_back(meta);

        if (cfg.kind == "validate") {
            run_detail::run_validate(ctx);
        } else if (cfg.kind == "analyze") {
            run_detail::run_analyze(ctx);
        } else if (cfg.kind == "chain-sweep") {
            run_detail::run_chain_sweep(ctx);
        } else if (cfg.kind == "sde-sweep") {
            run_detail::run_sde_sweep(ctx, "sde_sweep");
        } else if (cfg.kind == "resonance-scan") {
            run_detail::run_sde_sweep(ctx, "resonance_scan");
        } else if (cfg.kind == "compare") {
            run_detail::run_compare(ctx);
        } else if (cfg.kind == "spectral") {
            run_detail::run_spectral(ctx);
        }
        if (ctx.result.cell_errors > 0 && cfg.strict && ctx.result.status == kExitOk) {
            ctx.result.status = kExitNumerical;
            ctx.result.message = std::to_string(ctx.result.cell_errors) + " cell(s) failed";
        }
    } catch (const ConfigError& e) {
        ctx.result.status = kExitConfig;
        ctx.result.message = e.what();
    } catch (const Error& e) {
        ctx.result.status = kExitNumerical;
        ctx.result.message = e.what();
    }
    std::ostringstream head;
    head << kVersion << "\nkind = " << cfg.kind << "\nstatus = " << ctx.result.status << "\n";
    if (!ctx.result.message.empty()) {
        head << "message = " << ctx.result.message << "\n";
    }
    head << "defaults applied:";
    for (const auto& k : cfg.defaulted_keys()) {
        head << " " << k << "=" << cfg.entries.at(k).value;
    }
    head << "\n";
    try {
        write_text(ctx.dir / "summary.txt", head.str() + ctx.summary.str());
        ctx.result.files.push_back(ctx.dir / "summary.txt");
    } catch (const ConfigError&) {
        // the directory itself was unusable; status already says so
    }
    return ctx.result;
}

} // namespace stochres
