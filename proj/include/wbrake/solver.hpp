#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wbrake/action.hpp"
#include "wbrake/inner_solver.hpp"

namespace wbrake {

struct SolverConfig {
    double q = 0.3;          // closeness radius
    double q_prime = 0.0;    // surgery entry radius; 0 = size it from the threshold rule
    int outer_max_iter = 200;
    int inner_max_iter = 600;  // Newton steps per inner solve
    double tol_energy = 1e-7;  // relative: stop when the decrease < tol_energy (1 + |J|)
    double tol_fixed_point = 1e-6;
    std::uint64_t seed = 7;
    int n_t = 64;            // time steps on the stored domain
    int n_competitors = 100; // random competitors of the Nash check
    InnerOptions inner;      // barrier settings of the first inner solve
    InnerOptions inner_warm; // barrier settings of the warm-started solves
    // Also try a start with a single ball at the origin moving to the nearest
    // plus-side minimizer; the lower-action start wins.
    bool central_start = true;
    // Safeguarded extrapolation along successive MM steps; accepted only
    // when it lowers the action, so the history stays monotone.
    bool extrapolate = true;

    SolverConfig();
    /// Throws std::invalid_argument unless 0 < q_prime < q < q0 (q_prime
    /// may be 0 = unset) and tolerances are positive.
    void validate(double q0) const;
};

struct SolveResult {
    Trajectory trajectory;          // stored domain (quarter or half line)
    std::vector<double> energy_history;
    EnergyReport report;            // of the stored domain
    double total = 0.0;             // J_T over the full period (brake) or the half line
    double nash_gap = 0.0;
    double fixed_point_change = 0.0;  // energy change of one more MM step
    Closeness closeness;
    double c_prime = 0.0;           // initializer bound (brake)
    int outer_iterations = 0;
    int newton_steps = 0;
    bool converged = false;
};

using ProgressFn = std::function<void(int iteration, double energy)>;

/// One convex subproblem: minimize kinetic + linear cost from init. The
/// stored-domain mode fixes the start condition (symmetric for brake and
/// half-line modes). Node weights follow the trapezoid rule.
Trajectory solve_inner(const std::vector<std::vector<double>>& linear_cost, const Trajectory& init,
                       const SolverConfig& cfg, bool warm = false, InnerResult* info = nullptr);

/// Inner objective of a trajectory for the given linear cost.
double inner_objective(const std::vector<std::vector<double>>& linear_cost, const Trajectory& traj);

SolveResult solve_brake(double T, const PotentialSpec& p, const KernelSpec& k, double rho,
                        const SolverConfig& cfg, const ProgressFn& progress = {});

/// Majorize-minimize from a given stored-domain trajectory. terminal_penalty
/// > 0 adds penalty * int dist(x, B(c*, r_rho))^2 m(L) dx at the last node,
/// with c* the best plus-side centre (half_heteroclinic mode).
SolveResult minimize_action(Trajectory init, const PotentialSpec& p, const KernelSpec& k,
                            const SolverConfig& cfg, double terminal_penalty = 0.0,
                            const ProgressFn& progress = {});

/// Direct finite-horizon solve on [0, L] with symmetric m(0) and the
/// terminal penalty; cross-check for the large-T brake halves.
SolveResult solve_heteroclinic_direct(double L, int n_t, double penalty, const PotentialSpec& p,
                                      const KernelSpec& k, double rho, const SolverConfig& cfg,
                                      const ProgressFn& progress = {});

struct NashOptions {
    int n_competitors = 100;
    std::uint64_t seed = 7;
    bool best_response = true;  // include the inner-solver optimum as a competitor
};

/// Linearized objective over a periodic trajectory with the cost frozen at
/// the candidate.
double linearized_objective(const Trajectory& traj, const std::vector<std::vector<double>>& cost);

/// max over competitors of (objective(candidate) - objective(competitor))_+.
/// Accepts quarter_brake (unfolded) or periodic candidates.
double nash_gap(const Trajectory& candidate, const PotentialSpec& p, const KernelSpec& k,
                const NashOptions& opt, const SolverConfig& cfg = {});

/// Symmetrized competitor 1/2 m(t) + 1/2 reflect(m(-t)) of a periodic
/// trajectory on a time grid symmetric about 0.
Trajectory symmetrize(const Trajectory& periodic);

struct SurgeryResult {
    Trajectory trajectory;
    double delta_energy = 0.0;  // new - old action over [t1, t2]
    double ball_center = 0.0;
};

/// Replaces (t1, t2) by a geodesic leg into the nearest ball of the chosen
/// set, a rest, and a leg back. Legs take max(1, round(q'/tau)) steps; t1
/// and t2 are rounded to nodes.
SurgeryResult surgery(const Trajectory& traj, double t1, double t2, Side side,
                      const PotentialSpec& p, const KernelSpec& k, const SolverConfig& cfg);

/// Halve q' from min(q, q^2/(4 C'))/2 until 2q' + 2q' C (1 + c_hat + q) < (q/2) sqrt(2 delta).
struct QPrimeSizing {
    double q_prime;
    double lhs;
    double rhs;
    double c_hat;
    int halvings;
};
QPrimeSizing size_q_prime(double q, double c_prime, double delta, double growth, double c_hat);

/// Rest at the ball centred at the right end of the plus interval, a
/// translation geodesic outward by `amplitude` and back, then rest again.
/// t1/t2 mark the ends of the excursion.
struct Excursion {
    Trajectory trajectory;
    double t1 = 0.0;
    double t2 = 0.0;
};
Excursion synthetic_excursion(const PotentialSpec& p, const KernelSpec& k, double rho,
                              double amplitude, double tau, double rest_time, double leg_time);

/// Bound on the second moment along surgery legs: (max_{M} |m|_2 + q)^2 - q.
double surgery_c_hat(const PotentialSpec& p, double rho, double q);

struct StudyEntry {
    double T = 0.0;
    bool ok = false;
    std::string error;
    SolveResult result;
    double e_plus = 0.0;
    double e_minus = 0.0;
    double J_T = 0.0;
    double half_action = 0.0;
};

struct StudyReport {
    std::vector<StudyEntry> entries;
    double window = 4.0;
    std::vector<std::vector<double>> window_distance;  // pairwise sup over [-L, L]
};

/// Brake solves for each T (possibly concurrent, results keyed by T).
StudyReport heteroclinic_study(const std::vector<double>& T_list, const PotentialSpec& p,
                               const KernelSpec& k, double rho, const SolverConfig& cfg,
                               double window = 4.0, int threads = 1,
                               const ProgressFn& progress = {});

/// Trajectory value at time t by linear interpolation of node densities.
GridMeasure sample(const Trajectory& traj, double t);

/// sup over t in [-L, L] (sampled at step `dt`) of d2(a(t), b(t)).
double window_distance(const Trajectory& a, const Trajectory& b, double L, double dt);

/// Which set each end of a finite-energy window approaches.
struct EndLabels {
    Side start;
    Side end;
};
EndLabels check_bounded_energy_asymptotics(const Trajectory& window, const PotentialSpec& p,
                                           double alpha);

/// Stationary MM: minimize W0 over single measures by repeated greedy
/// filling of the linearized cost, started from a flat density on the
/// plateau of the chosen side.
struct StationaryResult {
    GridMeasure minimizer;
    double w0 = 0.0;
    std::vector<double> history;
    int iterations = 0;
};
StationaryResult minimize_stationary(const Grid1D& grid, double rho, const PotentialSpec& p,
                                     const KernelSpec& k, Side side, int max_iter = 200);

/// Exact minimizer of sum f_i m_i h over {0 <= m <= rho, sum m h = 1}.
std::vector<double> greedy_fill(const std::vector<double>& f, double h, double rho);

}  // namespace wbrake
