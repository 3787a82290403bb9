#pragma once

#include <vector>

namespace wbrake {

/// Mass per step below which flux through an empty interface counts as
/// cumulative-sum roundoff rather than transport.
inline constexpr double kVacuumFluxTol = 1e-14;

/// Convex dynamic transport problem in cumulative-mass variables
/// M^k_j (k = 0..n_t nodes, j = 0..n edges, M_0 = 0, M_n = 1):
///
///   sum_{k<n_t} sum_{0<j<n} (h/tau) (M^{k+1}_j - M^k_j)^2 / mbar^{k+1/2}_j
/// + sum_k weight_k tau sum_i cost^k_i m^k_i h
///
/// with m^k_i = (M^k_{i+1} - M^k_i)/h in [0, rho] and mbar the mean of the
/// four cells around the flux location.
struct InnerProblem {
    enum class Start { free, symmetric, fixed };

    int n = 0;
    double h = 0.0;
    double rho = 0.0;
    double tau = 0.0;
    int n_t = 0;
    std::vector<std::vector<double>> cost;  // (n_t+1) x n
    std::vector<double> weight;             // n_t+1 quadrature weights (trapezoid: 1/2 at ends)
    Start start = Start::symmetric;
    std::vector<double> start_cumulative;   // used when start == fixed
};

struct InnerOptions {
    int max_newton = 600;
    double mu_start = 1e-3;       // barrier weight at the first stage
    double mu_final = 1e-11;
    double mu_factor = 0.1;
    double mix = 1e-3;            // blend of the init with the uniform density
    double newton_tol = 1e-13;    // half squared Newton decrement per stage
};

struct InnerResult {
    std::vector<std::vector<double>> cumulative;
    double objective = 0.0;       // without barrier
    double barrier_gap = 0.0;     // duality-gap bound of the final stage
    double newton_decrement = 0.0;
    int newton_steps = 0;
};

/// Objective (no barrier); +inf for flux through vacuum.
double inner_objective(const InnerProblem& prob, const std::vector<std::vector<double>>& cumulative);

/// Barrier path-following Newton from a feasible start. Throws
/// NonConvergence when max_newton steps do not suffice.
InnerResult solve_inner_barrier(const InnerProblem& prob,
                                const std::vector<std::vector<double>>& init_cumulative,
                                const InnerOptions& opt = {});

}  // namespace wbrake
