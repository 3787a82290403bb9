#pragma once

#include <iosfwd>
#include <limits>
#include <vector>

#include "wbrake/potential_model.hpp"
#include "wbrake/trajectory.hpp"

namespace wbrake {

struct EnergyReport {
    double kinetic = 0.0;
    double potential = 0.0;  // trapezoid integral of W0
    double total = 0.0;
    std::vector<double> per_step_kinetic;  // tau * sum_j h |w|^2 / m_bar, one per step
    std::vector<double> per_node_potential;  // W0(m^k)
    double continuity_residual = 0.0;
    double max_cap_violation = 0.0;
    double nash_gap = std::numeric_limits<double>::quiet_NaN();
};

/// |w|^2 / m, with 0 at (0,0) and +inf for flux through vacuum.
double kinetic_density(double m, double w);

/// Kinetic energy contribution of step k (already multiplied by tau).
double step_kinetic(const Trajectory& traj, int k);
/// Sum over steps; +inf when a flux crosses vacuum.
double kinetic_energy(const Trajectory& traj);
double kinetic_energy(const Trajectory& traj, int k_begin, int k_end);

EnergyReport action_energy(const Trajectory& traj, const PotentialSpec& p, const KernelSpec& k);

/// Full period [-T/2, T/2] from the quarter [0, T/4].
Trajectory unfold(const Trajectory& quarter);
/// Half orbit [-T/4, T/4] from the quarter [0, T/4].
Trajectory half_orbit(const Trajectory& quarter);

/// Symmetric start (halved balls at both wells), geodesic to the plus ball
/// at the left end of the admissible interval over about one time unit,
/// then rest until T/4. n_t steps on the quarter.
Trajectory init_feasible_brake(double T, const PotentialSpec& p, const KernelSpec& k, double rho,
                               int n_t);

/// C' = 4 d^2 + 4 C (1 + (d + |m_end|_2)^2), d = d2(m(0), m(T/4)) read off
/// the initializer and C the growth constant of W0 (c_w + I_ball).
double brake_energy_bound(const Trajectory& init, const PotentialSpec& p, const KernelSpec& k);

/// Constant in the W0 growth bound: W0(m) <= C (1 + moment2(m)).
double renormalized_growth_constant(const PotentialSpec& p, const KernelSpec& k, double rho);

struct Closeness {
    double s_plus = 0.0;
    double s_minus = 0.0;
    bool ok = false;
};
/// Accepts quarter_brake (unfolded internally) or periodic trajectories.
Closeness closeness_profile(const Trajectory& traj, const PotentialSpec& p, double alpha, double q);

/// Long-format CSVs: `t,x,density` and `t,x_interface,flux`.
void write_trajectory_csv(std::ostream& density_out, std::ostream& flux_out, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& density_in, const Grid1D& grid, double rho,
                               SymmetryMode mode = {});

}  // namespace wbrake
