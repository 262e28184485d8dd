#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "stochres/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Stochastic resonance experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", stochres::kVersion);

    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    unsigned workers = 0;
    bool strict = false;

    const char* kinds[] = {"validate",       "analyze",  "sde-sweep", "chain-sweep",
                           "spectral",       "resonance-scan", "compare"};
    for (const char* k : kinds) {
        CLI::App* sub = app.add_subcommand(k, std::string("run the ") + k + " experiment");
        sub->add_option("--config", config_path, "key = value configuration file")->required();
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::Range(1u, 1024u));
        sub->add_flag("--strict", strict, "treat any failed cell as an error");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : stochres::kExitConfig;
    }

    const CLI::App* sub = app.get_subcommands().front();
    std::map<std::string, std::string> overrides{{"kind", sub->get_name()}};
    if (!out.empty()) {
        overrides["output_dir"] = out;
    }
    if (sub->count("--seed") > 0) {
        overrides["seed"] = std::to_string(seed);
    }
    if (workers > 0) {
        overrides["workers"] = std::to_string(workers);
    }
    if (strict) {
        overrides["strict"] = "true";
    }

    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot read " << config_path << "\n";
        return stochres::kExitConfig;
    }
    std::stringstream text;
    text << in.rdbuf();

    stochres::ExperimentConfig cfg;
    try {
        cfg = stochres::parse_config(text.str(), overrides);
    } catch (const stochres::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return stochres::kExitConfig;
    }

    const stochres::RunResult r = stochres::run(cfg);
    for (const auto& f : r.files) {
        std::cout << f.string() << "\n";
    }
    if (r.cell_errors > 0) {
        std::cerr << r.cell_errors << " cell(s) failed; see " << cfg.output_dir
                  << "/summary.txt\n";
    }
    if (r.status != stochres::kExitOk) {
        std::cerr << "error: " << r.message << "\n";
    }
    return r.status;
}
