#include "wbrake/action.hpp"
#include "wbrake/inner_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wbrake {

Trajectory Trajectory::from_nodes(std::vector<GridMeasure> nodes, double tau, double t0,
                                  SymmetryMode mode) {
    if (nodes.empty()) throw std::invalid_argument("trajectory needs at least one node");
    if (!(tau > 0.0)) throw std::invalid_argument("time step must be positive");
    Trajectory t;
    t.grid = nodes.front().grid();
    t.rho = nodes.front().rho();
    t.tau = tau;
    t.t0 = t0;
    t.mode = mode;
    const int n = t.grid.n_cells;
    std::vector<double> prev = nodes.front().cumulative();
    for (std::size_t k = 1; k < nodes.size(); ++k) {
        if (!(nodes[k].grid() == t.grid)) throw std::invalid_argument("nodes on different grids");
        std::vector<double> cur = nodes[k].cumulative();
        std::vector<double> flux(n + 1, 0.0);
        for (int j = 1; j < n; ++j) flux[j] = -(cur[j] - prev[j]) / tau;
        t.w.push_back(std::move(flux));
        prev = std::move(cur);
    }
    t.m = std::move(nodes);
    return t;
}

Trajectory Trajectory::from_cumulative(const Grid1D& grid, double rho,
                                       const std::vector<std::vector<double>>& cumulative,
                                       double tau, double t0, SymmetryMode mode) {
    std::vector<GridMeasure> nodes;
    nodes.reserve(cumulative.size());
    const int n = grid.n_cells;
    const bool symmetric_start =
        mode.kind == SymmetryKind::quarter_brake || mode.kind == SymmetryKind::half_heteroclinic;
    for (const auto& c : cumulative) {
        std::vector<double> d(n);
        for (int i = 0; i < n; ++i) d[i] = (c[i + 1] - c[i]) / grid.h;
        if (symmetric_start && nodes.empty()) {
            // The start is symmetric up to summation roundoff; make it exact.
            for (int i = 0; i < n / 2; ++i) d[i] = d[n - 1 - i];
        }
        nodes.emplace_back(grid, std::move(d), rho);
    }
    Trajectory t = from_nodes(std::move(nodes), tau, t0, mode);
    // Fluxes straight from the given cumulative masses.
    for (std::size_t k = 0; k + 1 < cumulative.size(); ++k)
        for (int j = 1; j < n; ++j) t.w[k][j] = -(cumulative[k + 1][j] - cumulative[k][j]) / tau;
    return t;
}

double Trajectory::continuity_residual() const {
    double r = 0.0;
    const int n = grid.n_cells;
    for (int k = 0; k < n_t(); ++k) {
        for (int i = 0; i < n; ++i) {
            const double res =
                (m[k + 1][i] - m[k][i]) / tau + (w[k][i + 1] - w[k][i]) / grid.h;
            r = std::max(r, std::abs(res));
        }
    }
    return r;
}

double kinetic_density(double m, double w) {
    if (m > 0.0) return w * w / m;
    if (w == 0.0) return 0.0;
    return std::numeric_limits<double>::infinity();
}

double step_kinetic(const Trajectory& traj, int k) {
    const int n = traj.grid.n_cells;
    const auto& a = traj.m[k].density();
    const auto& b = traj.m[k + 1].density();
    const auto& w = traj.w[k];
    double s = 0.0;
    for (int j = 1; j < n; ++j) {
        const double m_bar = 0.25 * (a[j - 1] + a[j] + b[j - 1] + b[j]);
        // Mass moved through vacuum at the level of summation roundoff is no flux.
        if (m_bar == 0.0 && std::abs(w[j]) * traj.tau <= kVacuumFluxTol) continue;
        s += kinetic_density(m_bar, w[j]);
    }
    return s * traj.grid.h * traj.tau;
}

double kinetic_energy(const Trajectory& traj, int k_begin, int k_end) {
    double s = 0.0;
    for (int k = k_begin; k < k_end; ++k) s += step_kinetic(traj, k);
    return s;
}

double kinetic_energy(const Trajectory& traj) { return kinetic_energy(traj, 0, traj.n_t()); }

EnergyReport action_energy(const Trajectory& traj, const PotentialSpec& p, const KernelSpec& k) {
    EnergyReport r;
    const int nt = traj.n_t();
    r.per_step_kinetic.resize(nt);
    for (int s = 0; s < nt; ++s) {
        r.per_step_kinetic[s] = step_kinetic(traj, s);
        r.kinetic += r.per_step_kinetic[s];
    }
    r.per_node_potential.resize(nt + 1);
    for (int s = 0; s <= nt; ++s) {
        const double v = renormalized_energy(traj.m[s], p, k);
        r.per_node_potential[s] = v;
        const double weight = (s == 0 || s == nt) ? 0.5 : 1.0;
        if (nt > 0) r.potential += weight * traj.tau * v;
    }
    r.total = r.kinetic + r.potential;
    r.continuity_residual = traj.continuity_residual();
    for (const auto& m : traj.m)
        for (double d : m.density()) r.max_cap_violation = std::max(r.max_cap_violation, d - traj.rho);
    return r;
}

namespace {

std::vector<double> mirror_flux(const std::vector<double>& w) {
    return std::vector<double>(w.rbegin(), w.rend());
}

std::vector<double> negate(std::vector<double> w) {
    for (double& x : w) x = -x;
    return w;
}

// Node and flux of the unfolded orbit at full index k >= 0 (node) or step k >= 0.
struct QuarterIndex {
    const Trajectory& q;
    int N;

    GridMeasure node(int k) const {
        if (k < 0) return reflect(node(-k));
        return k <= N ? q.m[k] : q.m[2 * N - k];
    }
    // Step from k to k+1.
    std::vector<double> step(int k) const {
        if (k < 0) return mirror_flux(step(-k - 1));
        return k < N ? q.w[k] : negate(q.w[2 * N - 1 - k]);
    }
};

Trajectory assemble(const Trajectory& quarter, int k_lo, int k_hi, SymmetryMode mode) {
    if (quarter.mode.kind != SymmetryKind::quarter_brake) {
        throw std::invalid_argument("unfold expects a quarter_brake trajectory");
    }
    QuarterIndex idx{quarter, quarter.n_t()};
    Trajectory t;
    t.grid = quarter.grid;
    t.rho = quarter.rho;
    t.tau = quarter.tau;
    t.t0 = k_lo * quarter.tau;
    t.mode = mode;
    for (int k = k_lo; k <= k_hi; ++k) t.m.push_back(idx.node(k));
    for (int k = k_lo; k < k_hi; ++k) t.w.push_back(idx.step(k));
    return t;
}

}  // namespace

Trajectory unfold(const Trajectory& quarter) {
    const int N = quarter.n_t();
    return assemble(quarter, -2 * N, 2 * N,
                    {SymmetryKind::periodic, quarter.mode.period, 0.0});
}

Trajectory half_orbit(const Trajectory& quarter) {
    const int N = quarter.n_t();
    return assemble(quarter, -N, N, {SymmetryKind::free, quarter.mode.period, 0.0});
}

Trajectory init_feasible_brake(double T, const PotentialSpec& p, const KernelSpec& k, double rho,
                               int n_t) {
    if (!(T >= 8.0)) throw std::invalid_argument("T too small for feasible initializer (need T >= 8)");
    if (n_t < 2) throw std::invalid_argument("need at least two time steps");
    const Grid1D& g = k.grid;
    const auto plus = MinimizerSet::make(p, k.alpha, rho, Side::plus);
    const GridMeasure a = GridMeasure::ball(g, rho, p.a_plus);
    const GridMeasure b = GridMeasure::ball(g, rho, p.a_minus());
    std::vector<double> d(g.n_cells);
    for (int i = 0; i < g.n_cells; ++i) d[i] = 0.5 * (a[i] + b[i]);
    const GridMeasure start(g, std::move(d), rho);
    const GridMeasure target = GridMeasure::ball(g, rho, plus.c_lo);

    const double tau = T / 4.0 / n_t;
    const int n_leg = std::clamp(static_cast<int>(std::lround(1.0 / tau)), 1, n_t);
    Trajectory leg = geodesic(start, target, 0.0, n_leg * tau, n_leg);
    std::vector<GridMeasure> nodes = leg.m;
    for (int s = n_leg + 1; s <= n_t; ++s) nodes.push_back(target);
    return Trajectory::from_nodes(std::move(nodes), tau, 0.0,
                                  {SymmetryKind::quarter_brake, T, 0.0});
}

double renormalized_growth_constant(const PotentialSpec& p, const KernelSpec& k, double rho) {
    return p.c_w + k.scale * ball_interaction(k.alpha, rho);
}

double brake_energy_bound(const Trajectory& init, const PotentialSpec& p, const KernelSpec& k) {
    const GridMeasure& first = init.m.front();
    const GridMeasure& last = init.m.back();
    const double d = d2(first, last);
    const double c = renormalized_growth_constant(p, k, init.rho);
    const double reach = d + std::sqrt(moment2(last));
    return 4.0 * d * d + 4.0 * c * (1.0 + reach * reach);
}

namespace {

// Largest distance from the window ends at which dist >= q, with linear
// interpolation of the crossing between nodes.
double window_violation(const std::vector<double>& times, const std::vector<double>& dist, double q,
                        double lo, double hi) {
    double s = 0.0;
    const int n = static_cast<int>(times.size());
    const double mid = 0.5 * (lo + hi);
    for (int k = 0; k < n; ++k) {
        if (dist[k] < q) continue;
        double t = times[k];
        const int toward = times[k] < mid ? k + 1 : k - 1;
        if (toward >= 0 && toward < n && dist[toward] < q) {
            t += (dist[k] - q) / (dist[k] - dist[toward]) * (times[toward] - times[k]);
        }
        s = std::max(s, std::min(t - lo, hi - t));
    }
    return s;
}

}  // namespace

Closeness closeness_profile(const Trajectory& traj, const PotentialSpec& p, double alpha, double q) {
    Trajectory full;
    if (traj.mode.kind == SymmetryKind::quarter_brake) {
        full = unfold(traj);
    } else if (traj.mode.kind == SymmetryKind::periodic) {
        full = traj;
    } else {
        throw std::invalid_argument("closeness_profile needs a brake trajectory");
    }
    const double T = full.mode.period;
    const auto plus = MinimizerSet::make(p, alpha, full.rho, Side::plus);
    const auto minus = MinimizerSet::make(p, alpha, full.rho, Side::minus);
    std::vector<double> tp, dp_, tm, dm;
    const double eps = 1e-9 * full.tau;
    for (int k = 0; k <= full.n_t(); ++k) {
        const double t = full.time(k);
        if (t >= -eps) {
            tp.push_back(t);
            dp_.push_back(d2_to_minimizer_set(full.m[k], plus).distance);
        }
        if (t <= eps) {
            tm.push_back(t);
            dm.push_back(d2_to_minimizer_set(full.m[k], minus).distance);
        }
    }
    Closeness c;
    c.s_plus = window_violation(tp, dp_, q, 0.0, T / 2);
    c.s_minus = window_violation(tm, dm, q, -T / 2, 0.0);
    c.ok = c.s_plus < T / 4 && c.s_minus < T / 4;
    return c;
}

void write_trajectory_csv(std::ostream& density_out, std::ostream& flux_out, const Trajectory& traj) {
    char buf[96];
    density_out << "t,x,density\n";
    for (int k = 0; k <= traj.n_t(); ++k) {
        for (int i = 0; i < traj.grid.n_cells; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", traj.time(k), traj.grid.center(i),
                          traj.m[k][i]);
            density_out << buf;
        }
    }
    flux_out << "t,x_interface,flux\n";
    for (int k = 0; k < traj.n_t(); ++k) {
        for (int j = 0; j <= traj.grid.n_cells; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", traj.time(k) + 0.5 * traj.tau,
                          traj.grid.edge(j), traj.w[k][j]);
            flux_out << buf;
        }
    }
}

Trajectory read_trajectory_csv(std::istream& in, const Grid1D& grid, double rho, SymmetryMode mode) {
    std::string line;
    if (!std::getline(in, line) || line != "t,x,density") {
        throw std::invalid_argument("expected header t,x,density");
    }
    std::vector<double> times;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
            throw std::invalid_argument("malformed trajectory row");
        }
        const double t = std::stod(a);
        if (times.empty() || times.back() != t) {
            times.push_back(t);
            rows.emplace_back();
        }
        rows.back().push_back(std::stod(c));
    }
    if (times.size() < 2) throw std::invalid_argument("trajectory needs two nodes");
    std::vector<GridMeasure> nodes;
    for (auto& r : rows) nodes.emplace_back(grid, std::move(r), rho);
    const double tau = (times.back() - times.front()) / (times.size() - 1);
    return Trajectory::from_nodes(std::move(nodes), tau, times.front(), mode);
}

}  // namespace wbrake
