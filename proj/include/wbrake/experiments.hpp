#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "wbrake/config.hpp"
#include "wbrake/solver.hpp"

namespace wbrake {

/// Everything derived from a RunConfig that the pipelines share.
struct Model {
    RunConfig config;
    Grid1D grid;
    double rho = 0.0;
    PotentialSpec potential;
    KernelSpec kernel;
    SolverConfig solver;
};

/// Validates the module invariants (kernel PSD included) and throws
/// ConfigError on violation. Uses the kernel cache when configured.
Model build_model(const RunConfig& cfg);

struct RunOptions {
    std::string out_dir;          // artifacts go here; empty = no files
    bool oracle = false;          // slow brute-force cross-checks
    int threads = 1;
    std::ostream* log = nullptr;  // progress lines
};

/// Threads from WBRAKE_THREADS (default 1, at least 1).
int threads_from_env();

// ---- stationary ----------------------------------------------------------

struct BruteForceStationary {
    bool ran = false;
    std::string skipped_reason;
    long long enumerated = 0;
    int n_minimizers = 0;       // density vectors within 1e-12 of the minimum
    double w_min = 0.0;
    bool contiguous_block = false;  // every minimizer is a saturated run inside a plateau
    std::vector<double> best;   // one minimizing density vector
};

/// Enumerates all 5-level density vectors with unit mass on a 12-cell grid
/// spanning [-(a+ + r~), a+ + r~] and minimizes W over them.
BruteForceStationary brute_force_stationary(const PotentialSpec& p, double alpha, double rho);

struct StationaryReport {
    bool ass3_ok = true;
    std::vector<std::string> warnings;
    StationaryResult result;
    Side side = Side::plus;
    double w0_min = 0.0;
    double d2_to_ball = 0.0;
    double ball_center = 0.0;
    double is_characteristic = 0.0;  // fraction of cells within the h-tolerance of {0, rho}
    bool reflection_consistent = false;  // minus-side run equals the reflected plus-side run
    BruteForceStationary brute;
    std::vector<std::string> failures;
};

StationaryReport run_stationary(const Model& model, const RunOptions& opt);
nlohmann::json to_json(const StationaryReport& r, const Model& model);

// ---- brake ---------------------------------------------------------------

struct SymmetryCheck {
    double reflection_error = 0.0;  // max |m(-t) - reflect(m(t))|
    double time_error = 0.0;        // max |m(T/4 + t) - m(T/4 - t)|
    double energy_ratio_error = 0.0;  // |J(unfold) - 4 J(quarter)|
};
SymmetryCheck check_unfold_symmetry(const Trajectory& quarter, const PotentialSpec& p,
                                    const KernelSpec& k);

struct SurgeryScan {
    bool attempted = false;
    std::string note;
    double t1 = 0.0;
    double t2 = 0.0;
    double q_prime = 0.0;
    double delta_energy = 0.0;
    double tolerance = 0.0;
};

struct BrakeReport {
    double T = 0.0;
    SolveResult result;
    double c_prime_T20 = 0.0;
    double c_prime_T200 = 0.0;
    double max_history_increase = 0.0;
    SymmetryCheck symmetry;
    SurgeryScan surgery;
    std::vector<std::string> failures;
};

/// Energy-increase tolerance of the MM monotonicity check.
inline constexpr double kMonotoneTol = 1e-9;
/// Largest single increase along an energy history (0 if nonincreasing).
double max_increase(const std::vector<double>& history);

BrakeReport run_brake(const Model& model, double T, const RunOptions& opt);
nlohmann::json to_json(const BrakeReport& r, const Model& model);

// ---- heteroclinic --------------------------------------------------------

struct HeteroclinicReport {
    StudyReport study;
    SolveResult direct;
    double direct_sup_distance = 0.0;  // vs the largest-T half orbit on [-window, window]
    bool e_plus_decreasing = false;
    double half_action_rel_error = 0.0;  // at the largest T
    double s_variation = 0.0;            // (max - min) / min of s_plus over the sweep
    bool labels_ok = false;
    std::string labels;
    std::vector<std::string> failures;
};

HeteroclinicReport run_heteroclinic(const Model& model, const RunOptions& opt);
nlohmann::json to_json(const HeteroclinicReport& r, const Model& model);

// ---- CLI entry points ----------------------------------------------------
// Return the process exit code: 0 ok, 2 config invalid, 3 non-convergence,
// 4 invariant failure. Reports go to opt.out_dir.

int cmd_stationary(const RunConfig& cfg, const RunOptions& opt);
int cmd_brake(const RunConfig& cfg, const RunOptions& opt);
int cmd_heteroclinic(const RunConfig& cfg, const RunOptions& opt);
int cmd_validate(const RunConfig& cfg, const RunOptions& opt);

/// Writes `text` to dir/name, creating dir.
void write_artifact(const std::string& dir, const std::string& name, const std::string& text);

}  // namespace wbrake
