#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wbrake/measure_grid.hpp"

namespace wbrake {

/// Double well W(x) = w_scale * min((|x-a|-r)_+, (|x+a|-r)_+)^2.
struct PotentialSpec {
    double a_plus = 1.0;
    double r_tilde = 0.5;
    double w_scale = 10.0;
    double c_w = 0.0;  // growth constant C: x^2/C - C <= W <= C x^2 + C on the grid

    /// Validates a_plus > r_tilde > 0, w_scale > 0 and fills c_w with the
    /// tightest constant valid on the grid's cell centers.
    static PotentialSpec make(double a_plus, double r_tilde, double w_scale, const Grid1D& grid);

    double a_minus() const { return -a_plus; }
    double operator()(double x) const;
    /// W at every cell center.
    std::vector<double> on(const Grid1D& grid) const;
};

double tightest_growth_constant(const PotentialSpec& p, const Grid1D& grid);
bool satisfies_growth(const PotentialSpec& p, const Grid1D& grid, double c);

/// Riesz kernel |x-y|^(alpha-1) averaged over cell pairs.
struct KernelSpec {
    double alpha = 0.5;
    Grid1D grid;
    Eigen::MatrixXd cell_matrix;
    double smallest_eigenvalue = 0.0;  // NaN when the check was skipped
    double scale = 1.0;                // multiplies the interaction (0 disables it)
};

/// Exact cell averages through the double primitive |r|^(alpha+1)/(alpha(alpha+1)).
/// The PSD check (symmetric eigensolve) runs for n <= 512.
KernelSpec kernel_cell_matrix(const Grid1D& grid, double alpha);

/// Tabulated kernel; validates symmetry, positivity and monotonicity in |i-j|.
KernelSpec kernel_from_table(const Grid1D& grid, double alpha, Eigen::MatrixXd table);

/// Binary cache keyed by (n, h, alpha) with an FNV-1a content hash.
void save_kernel_cache(const std::string& path, const KernelSpec& k);
/// Returns false when the file is missing, keyed differently or corrupt.
bool load_kernel_cache(const std::string& path, const Grid1D& grid, double alpha, KernelSpec& out);

/// Interaction of rho * indicator of an interval of length 1/rho.
double ball_interaction(double alpha, double rho);

/// (K * m)_i = sum_j Kbar_ij m_j h
std::vector<double> convolve(const GridMeasure& m, const KernelSpec& k);
double interaction(const GridMeasure& m, const KernelSpec& k);
double potential_energy(const GridMeasure& m, const PotentialSpec& p, const KernelSpec& k);
double renormalized_energy(const GridMeasure& m, const PotentialSpec& p, const KernelSpec& k);
/// f = W - 2 K * m_bar
std::vector<double> linearized_cost(const GridMeasure& m_bar, const PotentialSpec& p,
                                    const KernelSpec& k);

enum class Side { plus, minus };
inline Side opposite(Side s) { return s == Side::plus ? Side::minus : Side::plus; }
inline const char* to_string(Side s) { return s == Side::plus ? "plus" : "minus"; }

/// Capped balls rho * indicator of B(c, r_rho) with c in [c_lo, c_hi].
struct MinimizerSet {
    Side side = Side::plus;
    double rho = 0.0;
    double r_rho = 0.0;
    double c_lo = 0.0;
    double c_hi = 0.0;
    double i_ball = 0.0;

    /// Throws std::invalid_argument when r_rho > r_tilde.
    static MinimizerSet make(const PotentialSpec& p, double alpha, double rho, Side side);
};

/// Half the distance between the two minimizer sets: a_plus - r_tilde + r_rho.
double q0(const PotentialSpec& p, double rho);

struct SetDistance {
    double distance;
    double center;
};
SetDistance d2_to_minimizer_set(const GridMeasure& m, const MinimizerSet& set);
/// Distance to the nearer of the two sets.
double d2_to_wells(const GridMeasure& m, const PotentialSpec& p, double alpha);

/// Smallest W0 found over sampled, locally improved measures with
/// d2(m, M+ and M-) >= q. An upper estimate of the true infimum.
double delta_estimate(double q, int n_samples, std::uint64_t seed, const Grid1D& grid, double rho,
                      const PotentialSpec& p, const KernelSpec& k);

}  // namespace wbrake
