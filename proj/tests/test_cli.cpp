#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "stochres/cli.hpp"

using namespace stochres;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("stochres_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int line_of(const ConfigError& e) {
    const std::string w = e.what();
    const auto pos = w.find("line ");
    return pos == std::string::npos ? -1 : std::atoi(w.c_str() + pos + 5);
}

} // namespace

TEST(Config, MinimalConfigTakesDefaults) {
    const ExperimentConfig c = parse_config("kind = analyze\npotential = example\n");
    EXPECT_EQ(c.kind, "analyze");
    EXPECT_EQ(c.psi, 0.0);
    EXPECT_EQ(c.epsilon_list, std::vector<double>{0.2});
    EXPECT_TRUE(c.mu_derived);
    const auto d = c.defaulted_keys();
    EXPECT_NE(std::find(d.begin(), d.end(), "psi"), d.end());
    EXPECT_EQ(std::find(d.begin(), d.end(), "potential"), d.end());
}

TEST(Config, CommentsListsAndTypes) {
    const ExperimentConfig c = parse_config(
        "# header\nkind = sde-sweep  # trailing\n\n epsilon_list = 0.3, 0.2 ,0.1\nmu_list=0.25\n"
        "samples = 150\nseed = 18446744073709551615\nstrict = yes\nfreeze_mode = inf\n");
    EXPECT_EQ(c.epsilon_list, (std::vector<double>{0.3, 0.2, 0.1}));
    EXPECT_EQ(c.mu_list, std::vector<double>{0.25});
    EXPECT_FALSE(c.mu_derived);
    EXPECT_EQ(c.samples, 150u);
    EXPECT_EQ(c.seed, 18446744073709551615ull);
    EXPECT_TRUE(c.strict);
    EXPECT_EQ(c.freeze_mode, FreezeMode::inf_over);
}

TEST(Config, UnknownKeysAreNamedWithLines) {
    try {
        parse_config("kind = analyze\nepsilon = 0.2\nfoo = 1\n");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string w = e.what();
        EXPECT_NE(w.find("line 2: epsilon"), std::string::npos) << w;
        EXPECT_NE(w.find("line 3: foo"), std::string::npos) << w;
    }
}

TEST(Config, DuplicateKeyCitesBothLines) {
    try {
        parse_config("kind = analyze\npsi = 0\n\npsi = 0.1\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(line_of(e), 4);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(Config, RangeErrorsCiteTheLine) {
    struct Case {
        const char* text;
        int line;
    };
    for (const Case& c : {Case{"kind = analyze\npsi = 0.3\n", 2},
                          Case{"kind = analyze\n\npsi = -0.1\n", 3},
                          Case{"kind = sde-sweep\nmu_list =\n", 2},
                          Case{"kind = sde-sweep\nepsilon_list = 0.2, -0.1\n", 2},
                          Case{"kind = sde-sweep\nsamples = 10\n", 2},
                          Case{"kind = analyze\nh = abc\n", 2},
                          Case{"kind = analyze\nworkers = 0\n", 2},
                          Case{"kind = spectral\ndirichlet = 0\n", 2},
                          Case{"kind = analyze\nscale = 2\n", 2},
                          Case{"kind = nonsense\n", 1}}) {
        try {
            parse_config(c.text);
            FAIL() << c.text;
        } catch (const ConfigError& e) {
            EXPECT_EQ(line_of(e), c.line) << c.text << " -> " << e.what();
        }
    }
}

TEST(Config, StructuralErrors) {
    EXPECT_THROW(parse_config("psi = 0\n"), ConfigError);
    EXPECT_THROW(parse_config("kind analyze\n"), ConfigError);
    EXPECT_THROW(parse_config("kind = analyze\n", {{"kind", "validate"}}), ConfigError);
    EXPECT_THROW(parse_config("kind = analyze\n", {{"bogus", "1"}}), ConfigError);
    EXPECT_NO_THROW(parse_config("", {{"kind", "validate"}}));
}

TEST(Config, OverridesWinAndAreEchoed) {
    const ExperimentConfig c =
        parse_config("kind = chain-sweep\nseed = 4\n", {{"seed", "11"}, {"output_dir", "x"}});
    EXPECT_EQ(c.seed, 11u);
    EXPECT_NE(c.echo().find("seed = 11"), std::string::npos);
}

TEST(Config, EchoRoundTrips) {
    const ExperimentConfig a = parse_config(
        "kind = compare\npsi = 0.1\nmu_list = 0.22, 0.24\nepsilon_list = 0.3\nh = 0.04\n");
    const ExperimentConfig b = parse_config(a.echo());
    EXPECT_EQ(a.echo(), b.echo());
    EXPECT_EQ(b.mu_list, a.mu_list);
    EXPECT_EQ(b.psi, 0.1);
    // derived grids stay derived
    const ExperimentConfig d = parse_config(parse_config("kind = chain-sweep\n").echo());
    EXPECT_TRUE(d.mu_derived);
}

TEST(Run, AnalyzeWritesReportAndPlotData) {
    const fs::path dir = scratch("analyze");
    const ExperimentConfig c = parse_config("kind = analyze\npotential = example\n",
                                            {{"output_dir", dir.string()}});
    const RunResult r = run(c);
    ASSERT_EQ(r.status, kExitOk) << r.message;
    const std::string rep = slurp(dir / "resonance.txt");
    EXPECT_NE(rep.find("resonance_lower = 0.2"), std::string::npos) << rep;
    EXPECT_NE(rep.find("mu_R_method = inflection"), std::string::npos);
    EXPECT_NE(rep.find("mu_R_extrapolated"), std::string::npos);
    const std::string depth = slurp(dir / "depth_profile.dat");
    EXPECT_EQ(depth.substr(0, depth.find('\n')), "# t D_minus D_plus mu_line");
    EXPECT_TRUE(fs::exists(dir / "resonance_point_h.csv"));
    EXPECT_TRUE(fs::exists(dir / "quality.csv"));
    const std::string summary = slurp(dir / "summary.txt");
    EXPECT_NE(summary.find("defaults applied:"), std::string::npos);
    EXPECT_NE(summary.find("psi=0"), std::string::npos);
    // the sidecar reproduces the configuration
    const ExperimentConfig again = parse_config(slurp(dir / "metadata.cfg"));
    EXPECT_EQ(again.echo(), c.echo());
}

TEST(Run, ChainSweepTableAndHistogram) {
    const fs::path dir = scratch("chain");
    const ExperimentConfig c =
        parse_config("kind = chain-sweep\nepsilon_list = 0.2, 0.1\nmu_points = 3\n"
                     "interspike_transitions = 500\n",
                     {{"output_dir", dir.string()}});
    const RunResult r = run(c);
    ASSERT_EQ(r.status, kExitOk) << r.message;
    std::ifstream in(dir / "chain_sweep.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "epsilon,mu,h,N_exact,rate,F_theory");
    int rows = 0;
    for (std::string line; std::getline(in, line);) {
        ++rows;
    }
    EXPECT_EQ(rows, 6);
    const std::string hist = slurp(dir / "interspike.dat");
    EXPECT_EQ(hist.substr(0, hist.find('\n')), "# bin_lo bin_hi count");
}

TEST(Run, ValidateAndSpectral) {
    const fs::path dir = scratch("spectral");
    RunResult r = run(parse_config("kind = validate\n", {{"output_dir", dir.string()}}));
    EXPECT_EQ(r.status, kExitOk) << r.message;
    r = run(parse_config("kind = spectral\nepsilon_list = 0.2, 0.15\nfreeze_t = 0\n",
                         {{"output_dir", dir.string()}}));
    ASSERT_EQ(r.status, kExitOk) << r.message;
    const std::string k = slurp(dir / "kramers.csv");
    EXPECT_EQ(k.substr(0, k.find('\n')), "epsilon,lambda,eps_log_lambda,target,gap");
}

TEST(Run, NumericalFailureMapsToStatusThree) {
    const fs::path dir = scratch("numfail");
    // a truncation this close to the well cannot hold the barrier
    const RunResult r =
        run(parse_config("kind = spectral\ntruncation = 1.05\nfreeze_t = 0.25\n",
                         {{"output_dir", dir.string()}}));
    EXPECT_EQ(r.status, kExitNumerical);
    EXPECT_NE(slurp(dir / "summary.txt").find("status = 3"), std::string::npos);
}

TEST(Run, PartialFailuresAndStrictMode) {
    const fs::path dir = scratch("partial");
    const std::string text = "kind = chain-sweep\nmu_list = 0.1, 0.3\n";
    RunResult r = run(parse_config(text, {{"output_dir", dir.string()}}));
    EXPECT_EQ(r.status, kExitOk);
    EXPECT_EQ(r.cell_errors, 1u);
    r = run(parse_config(text, {{"output_dir", dir.string()}, {"strict", "true"}}));
    EXPECT_EQ(r.status, kExitNumerical);
}

TEST(Run, UnwritableOutputIsAConfigError) {
    const fs::path file = scratch("blocker");
    std::ofstream(file) << "x";
    const RunResult r =
        run(parse_config("kind = analyze\n", {{"output_dir", (file / "sub").string()}}));
    EXPECT_EQ(r.status, kExitConfig);
}

TEST(Run, SweepsAreIndependentOfWorkerCount) {
    const std::string text = "kind = sde-sweep\nepsilon_list = 0.35\nmu_list = 0.3, 0.32\n"
                             "samples = 100\nseed = 3\n";
    const fs::path a = scratch("det1");
    const fs::path b = scratch("det8");
    run(parse_config(text, {{"output_dir", a.string()}, {"workers", "1"}}));
    run(parse_config(text, {{"output_dir", b.string()}, {"workers", "8"}}));
    EXPECT_EQ(slurp(a / "sde_sweep.csv"), slurp(b / "sde_sweep.csv"));
    EXPECT_EQ(slurp(a / "sde_sweep_errors.csv"), slurp(b / "sde_sweep_errors.csv"));
}

#ifdef STOCHRES_CLI_PATH
TEST(Tool, ExitCodes) {
    const fs::path dir = scratch("tool");
    fs::create_directories(dir);
    std::ofstream(dir / "bad.cfg") << "kind = analyze\npsi = 0.4\n";
    std::ofstream(dir / "ok.cfg") << "potential = example\n";
    const std::string exe = STOCHRES_CLI_PATH;
    auto status = [&](const std::string& args) {
        const int s = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
        return WEXITSTATUS(s);
    };
    EXPECT_EQ(status("analyze --config " + (dir / "bad.cfg").string()), kExitConfig);
    EXPECT_EQ(status("analyze --config " + (dir / "missing.cfg").string()), kExitConfig);
    EXPECT_EQ(status("frobnicate"), kExitConfig);
    EXPECT_EQ(status("validate --config " + (dir / "ok.cfg").string() + " --out " +
                     (dir / "out").string()),
              kExitOk);
    EXPECT_TRUE(fs::exists(dir / "out" / "validation.csv"));
}
#endif
