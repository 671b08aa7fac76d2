#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nudgekit/pipeline.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDependency = 3;

int run(int argc, char** argv) {
    CLI::App app{"personalized conservation-nudge trial toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "JSON run configuration file");
    CLI::Option* seed_opt = app.add_option("--seed", seed, "run seed (overrides the config)");
    app.add_option("--out", out_dir, "output directory (overrides the config)");

    CLI::App* sim = app.add_subcommand("simulate", "synthesize the trial and write the panel");
    int round = 0;
    CLI::App* nud = app.add_subcommand("nudge", "generate one round of nudge bundles");
    nud->add_option("--round", round, "round to generate (1-based)")->required();
    CLI::App* ana = app.add_subcommand("analyze", "run the statistical pipeline");
    CLI::App* rep = app.add_subcommand("report", "summarize analyze outputs as text");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    nudgekit::RunConfig cfg;
    if (!config_path.empty()) cfg = nudgekit::load_run_config(config_path);
    if (seed_opt->count() > 0) {
        cfg.seed = seed;
        cfg.seed_set = true;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (sim->parsed()) {
        nudgekit::cmd_simulate(cfg);
    } else if (nud->parsed()) {
        nudgekit::cmd_nudge(cfg, round);
    } else if (ana->parsed()) {
        nudgekit::cmd_analyze(cfg);
    } else if (rep->parsed()) {
        nudgekit::cmd_report(cfg);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const nudgekit::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const nudgekit::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const nudgekit::SequencingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const nudgekit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDependency;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDependency;
    }
}
