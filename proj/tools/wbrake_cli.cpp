// wbrake: stationary | brake | heteroclinic | validate

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wbrake/error.hpp"
#include "wbrake/experiments.hpp"

int main(int argc, char** argv) {
    using namespace wbrake;
    CLI::App app{"Density-capped double-well brake orbits and heteroclinics"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    long long seed = -1;
    bool oracle = false, quiet = false;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON configuration (omit for the canonical one)");
        sub->add_option("--out", out_dir, "artifact directory (default: experiment.output_dir)");
        sub->add_option("--seed", seed, "overrides the config seed")->check(CLI::NonNegativeNumber);
        sub->add_flag("--oracle", oracle, "also run the slow brute-force cross-checks");
        sub->add_flag("-q,--quiet", quiet, "no progress output");
    };
    CLI::App* stationary = app.add_subcommand("stationary", "minimize W0 over single measures");
    CLI::App* brake = app.add_subcommand("brake", "brake orbit at experiment.T");
    CLI::App* hetero = app.add_subcommand("heteroclinic", "large-T sweep and direct cross-check");
    CLI::App* validate = app.add_subcommand("validate", "run every property suite");
    for (auto* s : {stationary, brake, hetero, validate}) add_common(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    RunConfig cfg;
    try {
        cfg = config_path.empty() ? parse_config(nlohmann::json::object()) : load_config(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);

    RunOptions opt;
    opt.out_dir = out_dir.empty() ? cfg.experiment.output_dir : out_dir;
    opt.oracle = oracle;
    opt.threads = threads_from_env();
    opt.log = quiet ? nullptr : &std::cout;

    if (*stationary) return cmd_stationary(cfg, opt);
    if (*brake) return cmd_brake(cfg, opt);
    if (*hetero) return cmd_heteroclinic(cfg, opt);
    return cmd_validate(cfg, opt);
}
