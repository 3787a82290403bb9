#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "wbrake/error.hpp"
#include "wbrake/experiments.hpp"
#include "wbrake/svg.hpp"

using namespace wbrake;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("wbrake_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(WBRAKE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const json& doc) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << doc.dump();
    return p;
}

// Coarse grid keeps the end-to-end brake runs to a few seconds.
json coarse_config() {
    return {{"grid", {{"n_cells", 64}}}, {"solver", {{"n_t", 16}}}, {"experiment", {{"svg", false}}}};
}

}  // namespace

TEST(Config, EmptyDocumentIsCanonical) {
    const RunConfig c = parse_config(json::object());
    EXPECT_EQ(c.grid.n_cells, 256);
    EXPECT_EQ(c.grid.x_max, 4.0);
    EXPECT_EQ(c.grid.rho, 2.0);
    EXPECT_EQ(c.potential.a_plus, 1.0);
    EXPECT_EQ(c.potential.r_tilde, 0.5);
    EXPECT_EQ(c.kernel.alpha, 0.5);
    EXPECT_EQ(c.solver.n_t, 64);
    EXPECT_EQ(c.experiment.q, 0.3);
    EXPECT_EQ(c.experiment.T_list, (std::vector<double>{24, 48, 96}));
}

TEST(Config, StrictParsing) {
    EXPECT_THROW(parse_config({{"gird", json::object()}}), ConfigError);
    EXPECT_THROW(parse_config({{"grid", {{"cells", 10}}}}), ConfigError);
    EXPECT_THROW(parse_config({{"grid", {{"n_cells", "many"}}}}), ConfigError);
    EXPECT_THROW(parse_config({{"potential", {{"a_plus", 1.0}, {"a_minus", -1.5}}}}), ConfigError);
    EXPECT_NO_THROW(parse_config({{"potential", {{"a_plus", 1.0}, {"a_minus", -1.0}}}}));
    EXPECT_THROW(parse_config({{"experiment", {{"q", 0.9}}}}), ConfigError);
    EXPECT_THROW(parse_config({{"experiment", {{"T_list", {48, 24}}}}}), ConfigError);
    EXPECT_THROW(parse_config(json::array()), ConfigError);
}

TEST(Config, RoundTripThroughJson) {
    json doc = coarse_config();
    doc["seed"] = 11;
    const RunConfig c = parse_config(doc);
    const json echoed = to_json(c);
    EXPECT_EQ(to_json(parse_config(json::parse(echoed.dump()))), echoed);
    EXPECT_EQ(c.seed, 11u);
}

TEST(Config, KernelAlphaOutOfRangeRejectedAtModelBuild) {
    RunConfig c;
    c.kernel.alpha = 1.2;
    EXPECT_THROW(build_model(c), ConfigError);
}

TEST(Hashing, KnownVectors) {
    EXPECT_EQ(sha1_hex("abc"), "a9993e364706816aba3e25717850c26c9cd0d89d");
    // Same bytes as `printf '{}' | git hash-object --stdin`.
    EXPECT_EQ(content_hash(json::object()), "9e26dfeeb6e641a33dae4961196235bdb965b21b");
}

TEST(Svg, ChartsAreSelfContained) {
    const std::string s = svg_line_chart("t<1>", {{"a", {0, 1, 2}, {1, 0.1, 0.01}}}, "x", "y", true);
    EXPECT_EQ(s.rfind("<svg", 0), 0u);
    EXPECT_NE(s.find("t&lt;1&gt;"), std::string::npos);
    EXPECT_NE(s.find("</svg>"), std::string::npos);
}

TEST(Cli, StationaryArtifactsAndDeterminism) {
    const fs::path a = scratch("stat_a"), b = scratch("stat_b");
    ASSERT_EQ(run_cli("stationary --out " + a.string()), 0);
    ASSERT_EQ(run_cli("stationary --out " + b.string()), 0);
    for (const char* f : {"stationary_minimizer.csv", "stationary_report.json", "stationary_minimizer.svg"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    const json r = json::parse(slurp(a / "stationary_report.json"));
    EXPECT_LE(r["W0_min"].get<double>(), 1e-4);
    EXPECT_LE(r["d2_to_ball"].get<double>(), 2.0 / 32);
    EXPECT_GE(r["is_characteristic"].get<double>(), 0.98);
    EXPECT_TRUE(r["brute_force"]["contiguous_block"].get<bool>());
    EXPECT_EQ(r["input_hash"].get<std::string>().size(), 40u);
}

TEST(Cli, Ass3ViolationWarnsAndProceeds) {
    const fs::path d = scratch("ass3");
    const fs::path cfg = write_config(d, {{"grid", {{"rho", 0.8}}}, {"experiment", {{"q", 0.2}}}});
    const RunConfig c = load_config(cfg.string());
    const StationaryReport r = run_stationary(build_model(c), {});
    EXPECT_FALSE(r.ass3_ok);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_EQ(r.warnings.front(), "ass3 violated; ball classification not guaranteed");
}

TEST(Cli, ExitCodes) {
    const fs::path d = scratch("codes");
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("brake --config " + (d / "missing.json").string()), 2);
    EXPECT_EQ(run_cli("brake --config " + write_config(d, {{"bogus", 1}}).string()), 2);
    json shortT = coarse_config();
    shortT["experiment"]["T"] = 6.0;
    EXPECT_EQ(run_cli("brake --out " + d.string() + " --config " + write_config(d, shortT).string()), 2);
    json asym = {{"potential", {{"a_plus", 1.0}, {"a_minus", -0.8}}}};
    EXPECT_EQ(run_cli("validate --config " + write_config(d, asym).string()), 2);
    json alpha = {{"kernel", {{"alpha", 1.2}}}};
    EXPECT_EQ(run_cli("stationary --out " + d.string() + " --config " + write_config(d, alpha).string()), 2);
    json starved = coarse_config();
    starved["solver"]["outer_max_iter"] = 1;
    EXPECT_EQ(run_cli("brake -q --out " + d.string() + " --config " + write_config(d, starved).string()), 3);
}

TEST(Cli, CoarseBrakeEndToEnd) {
    const fs::path a = scratch("brake_a"), b = scratch("brake_b");
    const fs::path cfg = write_config(a, coarse_config());
    ASSERT_EQ(run_cli("brake -q --config " + cfg.string() + " --out " + a.string()), 0);
    ASSERT_EQ(run_cli("brake -q --config " + cfg.string() + " --out " + b.string()), 0);
    for (const char* f : {"brake_T24.csv", "brake_T24_flux.csv", "brake_T24_report.json"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    const json r = json::parse(slurp(a / "brake_T24_report.json"));
    EXPECT_LE(r["nash_gap"].get<double>(), 1e-5);
    EXPECT_TRUE(r["closeness"]["ok"].get<bool>());
    EXPECT_TRUE(r["failures"].empty());

    // Artifacts load back without loss.
    const Model m = build_model(parse_config(coarse_config()));
    std::ifstream in(a / "brake_T24.csv");
    const Trajectory t = read_trajectory_csv(in, m.grid, m.rho);
    EXPECT_EQ(t.n_t(), 4 * 16);
    std::ostringstream d, f;
    write_trajectory_csv(d, f, t);
    EXPECT_EQ(d.str(), slurp(a / "brake_T24.csv"));
    EXPECT_EQ(json::parse(r.dump()), r);
    EXPECT_EQ(r["J_T"].get<double>(), r["solve"]["energy_history"].back().get<double>());
}

TEST(Cli, SeedOverrideChangesHashOnly) {
    const fs::path a = scratch("seed_a"), b = scratch("seed_b");
    ASSERT_EQ(run_cli("stationary -q --out " + a.string()), 0);
    ASSERT_EQ(run_cli("stationary -q --seed 8 --out " + b.string()), 0);
    const json ra = json::parse(slurp(a / "stationary_report.json"));
    const json rb = json::parse(slurp(b / "stationary_report.json"));
    EXPECT_NE(ra["input_hash"], rb["input_hash"]);
    EXPECT_EQ(ra["W0_min"], rb["W0_min"]);
}
