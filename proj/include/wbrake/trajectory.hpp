#pragma once

#include <vector>

#include "wbrake/measure_grid.hpp"

namespace wbrake {

enum class SymmetryKind {
    free,               // no structure assumed
    quarter_brake,      // stored on [0, T/4]; m(0) reflection-symmetric
    half_heteroclinic,  // stored on [0, L]; m(0) reflection-symmetric
    periodic,           // full period, last node equals the first
};

struct SymmetryMode {
    SymmetryKind kind = SymmetryKind::free;
    double period = 0.0;  // T for quarter_brake / periodic
    double length = 0.0;  // L for half_heteroclinic
};

/// Nodes m^0..m^{n_t} at t0 + k tau, fluxes w^{k+1/2} at the n+1 cell
/// interfaces (boundary entries are zero).
struct Trajectory {
    Grid1D grid;
    double rho = 0.0;
    double tau = 0.0;
    double t0 = 0.0;
    std::vector<GridMeasure> m;
    std::vector<std::vector<double>> w;
    SymmetryMode mode;

    int n_t() const { return static_cast<int>(m.size()) - 1; }
    double time(int k) const { return t0 + k * tau; }

    /// Fluxes recovered from the discrete continuity equation.
    static Trajectory from_nodes(std::vector<GridMeasure> nodes, double tau, double t0,
                                 SymmetryMode mode = {});

    /// Nodes given as cumulative masses at cell edges (first 0, last 1).
    static Trajectory from_cumulative(const Grid1D& grid, double rho,
                                      const std::vector<std::vector<double>>& cumulative,
                                      double tau, double t0, SymmetryMode mode = {});

    /// Max over k, i of |(m^{k+1}-m^k)/tau + div w^{k+1/2}|.
    double continuity_residual() const;
};

}  // namespace wbrake
