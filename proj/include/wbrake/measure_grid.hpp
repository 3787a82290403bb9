#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wbrake {

struct Trajectory;

/// Uniform cell grid on [x_min, x_max], symmetric about 0.
struct Grid1D {
    double x_min = 0.0;
    double x_max = 0.0;
    int n_cells = 0;
    double h = 0.0;

    Grid1D() = default;
    /// Throws std::invalid_argument unless x_min = -x_max < 0 and n_cells >= 4.
    Grid1D(double x_min, double x_max, int n_cells);

    static Grid1D symmetric(double half_width, int n_cells) {
        return Grid1D(-half_width, half_width, n_cells);
    }

    double center(int i) const { return x_min + (i + 0.5) * h; }
    double edge(int j) const { return x_min + j * h; }

    bool operator==(const Grid1D& o) const {
        return x_min == o.x_min && x_max == o.x_max && n_cells == o.n_cells;
    }
};

/// Probability density on a grid with 0 <= density <= rho and unit mass.
class GridMeasure {
public:
    GridMeasure() = default;
    /// Validates the cap and the mass (tolerance 1e-12); rounding-level
    /// excursions past 0 or rho are clamped.
    GridMeasure(const Grid1D& grid, std::vector<double> density, double rho);

    /// Cell average of rho * indicator of [c - r, c + r], r = 1/(2 rho).
    static GridMeasure ball(const Grid1D& grid, double rho, double center);

    /// Euclidean projection of raw values onto {0 <= m <= rho, sum m h = 1}.
    static GridMeasure project(const Grid1D& grid, const std::vector<double>& raw, double rho);

    const Grid1D& grid() const { return grid_; }
    const std::vector<double>& density() const { return density_; }
    double rho() const { return rho_; }
    int size() const { return grid_.n_cells; }
    double operator[](int i) const { return density_[i]; }

    double mass() const;
    /// Cumulative mass at the n+1 cell edges; first entry 0, last entry exactly 1.
    std::vector<double> cumulative() const;

private:
    Grid1D grid_;
    std::vector<double> density_;
    double rho_ = 0.0;
};

/// Projection shift: clamp(v - lambda, 0, rho) with sum * h = mass, by bisection.
std::vector<double> capped_simplex_projection(const std::vector<double>& v, double h, double rho,
                                              double mass = 1.0);

/// Piecewise-linear quantile function F^{-1} on [0,1], one segment per
/// positive-mass cell. Jumps between segments correspond to vacuum.
struct QuantileTable {
    struct Segment {
        double s0, s1, x0, x1;
    };
    std::vector<Segment> segments;

    static QuantileTable of(const GridMeasure& m);
    /// Quantile of the continuum measure rho * indicator of B(c, 1/(2 rho)).
    static QuantileTable ball(double center, double rho);

    double operator()(double s) const;
};

double mean(const GridMeasure& m);
double moment2(const GridMeasure& m);

double d2(const QuantileTable& a, const QuantileTable& b);
/// Exact quadratic Wasserstein distance; throws on mismatched grids.
double d2(const GridMeasure& mu, const GridMeasure& nu);
/// d_p through the same quantile formula (convenience, p >= 1).
double dp(const GridMeasure& mu, const GridMeasure& nu, double p);

/// Discrete transport between cell-center point masses, solved as a
/// min-cost flow. Reference oracle for d2; n_cells <= 32.
double d2_lp_oracle(const GridMeasure& mu, const GridMeasure& nu);

GridMeasure reflect(const GridMeasure& m);

/// Displacement interpolation resampled to the grid by CDF projection,
/// with n_steps equal time steps on [t1, t2].
Trajectory geodesic(const GridMeasure& m1, const GridMeasure& m2, double t1, double t2,
                    int n_steps);

/// Grid measure at parameter s in [0,1] along the displacement interpolation.
GridMeasure interpolate(const GridMeasure& m1, const GridMeasure& m2, double s);

/// Symmetric decreasing rearrangement about 0.
GridMeasure rearrange_decreasing(const GridMeasure& m);

void write_csv(std::ostream& out, const GridMeasure& m);
GridMeasure read_measure_csv(std::istream& in, const Grid1D& grid, double rho);

}  // namespace wbrake
