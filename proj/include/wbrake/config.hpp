#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace wbrake {

struct GridBlock {
    double x_min = -4.0;
    double x_max = 4.0;
    int n_cells = 256;
    double rho = 2.0;
};

struct PotentialBlock {
    double a_plus = 1.0;
    double r_tilde = 0.5;
    double w_scale = 10.0;
};

struct KernelBlock {
    double alpha = 0.5;
    std::string cache;  // optional binary cache path
};

struct SolverBlock {
    double q_prime = 0.0;  // 0: sized from the threshold rule where needed
    int outer_max_iter = 200;
    int inner_max_iter = 600;
    double tol_energy = 1e-7;
    double tol_fixed_point = 1e-6;
    int n_t = 64;
    int n_competitors = 100;
    bool central_start = true;
    bool extrapolate = true;
};

struct ExperimentBlock {
    double T = 24.0;
    std::vector<double> T_list{24.0, 48.0, 96.0};
    double q = 0.3;
    std::string output_dir = "out";
    double window = 4.0;
    double direct_L = 12.0;
    int direct_n_t = 64;
    double direct_penalty = 10.0;
    int delta_samples = 200;
    bool svg = true;
};

/// Defaults are the canonical configuration, so `{}` is a valid document.
struct RunConfig {
    GridBlock grid;
    PotentialBlock potential;
    KernelBlock kernel;
    SolverBlock solver;
    ExperimentBlock experiment;
    std::uint64_t seed = 7;
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

/// git-style SHA-1 ("blob <len>\0<bytes>") of the canonical JSON dump.
std::string content_hash(const nlohmann::json& doc);
std::string sha1_hex(const std::string& bytes);

}  // namespace wbrake
