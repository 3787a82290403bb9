#include "wbrake/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "wbrake/error.hpp"

namespace wbrake {

SolverConfig::SolverConfig() {
    inner_warm.mu_start = 1e-9;
    inner_warm.mix = 1e-9;
    inner_warm.mu_factor = 0.01;
}

void SolverConfig::validate(double q0_value) const {
    if (!(q > 0.0 && q < q0_value)) throw std::invalid_argument("solver: need 0 < q < q0");
    if (q_prime != 0.0 && !(q_prime > 0.0 && q_prime < q)) {
        throw std::invalid_argument("solver: need 0 < q_prime < q");
    }
    if (!(tol_energy > 0.0) || !(tol_fixed_point > 0.0)) {
        throw std::invalid_argument("solver: tolerances must be positive");
    }
    if (outer_max_iter < 1 || inner_max_iter < 1) throw std::invalid_argument("solver: iteration caps");
    if (n_t < 2) throw std::invalid_argument("solver: n_t must be at least 2");
}

namespace {

using Table = std::vector<std::vector<double>>;

std::vector<double> trapezoid_weights(int n_t) {
    std::vector<double> w(n_t + 1, 1.0);
    w.front() = w.back() = 0.5;
    return w;
}

InnerProblem make_problem(const Table& cost, const Trajectory& t) {
    InnerProblem p;
    p.n = t.grid.n_cells;
    p.h = t.grid.h;
    p.rho = t.rho;
    p.tau = t.tau;
    p.n_t = t.n_t();
    p.cost = cost;
    p.weight = trapezoid_weights(p.n_t);
    switch (t.mode.kind) {
        case SymmetryKind::quarter_brake:
        case SymmetryKind::half_heteroclinic:
            p.start = InnerProblem::Start::symmetric;
            break;
        case SymmetryKind::free:
            p.start = InnerProblem::Start::free;
            break;
        case SymmetryKind::periodic:
            throw std::invalid_argument("inner solve on a periodic trajectory is not supported");
    }
    return p;
}

Table cumulative_table(const Trajectory& t) {
    Table c;
    c.reserve(t.m.size());
    for (const auto& m : t.m) c.push_back(m.cumulative());
    return c;
}

void check_boundary_mass(const Trajectory& t) {
    const int n = t.grid.n_cells;
    for (int k = 0; k <= t.n_t(); ++k) {
        const double edge_mass = (t.m[k][0] + t.m[k][n - 1]) * t.grid.h;
        if (!(edge_mass < 1e-8)) {
            std::ostringstream os;
            os << "grid too small: mass " << edge_mass << " in the outermost cells at t = " << t.time(k);
            throw GridTooSmall(os.str());
        }
    }
}

bool boundary_mass_ok(const Trajectory& t) {
    try {
        check_boundary_mass(t);
        return true;
    } catch (const GridTooSmall&) {
        return false;
    }
}

// b + beta (b - a) in cumulative masses, each node projected back onto the
// capped simplex and blended with 1e-12 of the uniform density.
Trajectory extrapolated(const Trajectory& a, const Trajectory& b, double beta) {
    const int n = b.grid.n_cells;
    const double uniform = 1.0 / (n * b.grid.h), mix = 1e-12;
    std::vector<GridMeasure> nodes;
    nodes.reserve(b.m.size());
    for (std::size_t k = 0; k < b.m.size(); ++k) {
        std::vector<double> raw(n);
        for (int i = 0; i < n; ++i) raw[i] = b.m[k][i] + beta * (b.m[k][i] - a.m[k][i]);
        std::vector<double> d = capped_simplex_projection(raw, b.grid.h, b.rho);
        for (double& x : d) x = (1.0 - mix) * x + mix * uniform;
        nodes.emplace_back(b.grid, std::move(d), b.rho);
    }
    if (b.mode.kind == SymmetryKind::quarter_brake || b.mode.kind == SymmetryKind::half_heteroclinic) {
        // Keep the start exactly reflection symmetric.
        const GridMeasure r = reflect(nodes.front());
        std::vector<double> d(n);
        for (int i = 0; i < n; ++i) d[i] = 0.5 * (nodes.front()[i] + r[i]);
        nodes.front() = GridMeasure(b.grid, std::move(d), b.rho);
    }
    return Trajectory::from_nodes(std::move(nodes), b.tau, b.t0, b.mode);
}

Trajectory central_start(const Trajectory& like, const MinimizerSet& plus) {
    const GridMeasure origin = GridMeasure::ball(like.grid, like.rho, 0.0);
    const GridMeasure target = GridMeasure::ball(like.grid, like.rho, plus.c_lo);
    const double span = like.tau * like.n_t();
    const int legs = std::clamp(static_cast<int>(std::lround(std::min(1.5, 0.5 * span) / like.tau)), 1,
                                like.n_t());
    std::vector<GridMeasure> nodes = geodesic(origin, target, 0.0, legs * like.tau, legs).m;
    while (static_cast<int>(nodes.size()) < like.n_t() + 1) nodes.push_back(target);
    return Trajectory::from_nodes(std::move(nodes), like.tau, like.t0, like.mode);
}

// Average over [lo, hi] of (|x - c| - r)_+^2.
double cell_mean_sq_excess(double lo, double hi, double c, double r) {
    // Primitive of (x - b)_+^2 is (x - b)_+^3 / 3.
    auto right = [&](double x) {
        const double e = std::max(0.0, x - (c + r));
        return e * e * e / 3.0;
    };
    auto left = [&](double x) {
        const double e = std::max(0.0, (c - r) - x);
        return -e * e * e / 3.0;
    };
    return (right(hi) - right(lo) + left(hi) - left(lo)) / (hi - lo);
}

std::vector<double> sq_distance_to_ball(const Grid1D& g, double c, double r) {
    std::vector<double> out(g.n_cells);
    for (int i = 0; i < g.n_cells; ++i) out[i] = cell_mean_sq_excess(g.edge(i), g.edge(i + 1), c, r);
    return out;
}

double dot_h(const std::vector<double>& f, const GridMeasure& m) {
    double s = 0.0;
    for (int i = 0; i < m.size(); ++i) s += f[i] * m[i];
    return s * m.grid().h;
}

// Centre in the plus interval minimizing int dist(x, B(c, r))^2 m dx (convex in c).
double best_penalty_center(const GridMeasure& m, const MinimizerSet& set) {
    auto f = [&](double c) { return dot_h(sq_distance_to_ball(m.grid(), c, set.r_rho), m); };
    double a = set.c_lo, b = set.c_hi;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 80 && b - a > 1e-13; ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

struct Objective {
    const PotentialSpec& p;
    const KernelSpec& k;
    double penalty;
    MinimizerSet plus;

    double penalty_term(const GridMeasure& end) const {
        if (penalty <= 0.0) return 0.0;
        const double c = best_penalty_center(end, plus);
        return penalty * dot_h(sq_distance_to_ball(end.grid(), c, plus.r_rho), end);
    }

    double value(const Trajectory& t, EnergyReport* rep = nullptr) const {
        EnergyReport r = action_energy(t, p, k);
        const double v = r.total + penalty_term(t.m.back());
        if (rep) *rep = std::move(r);
        return v;
    }

    // Problem data of the full action with the penalty centre frozen at `t`:
    // linear cost W (+ penalty) and the kernel as the concave term.
    Table full_cost(const Trajectory& t) const {
        const int nt = t.n_t();
        const auto w = trapezoid_weights(nt);
        Table cost(nt + 1, p.on(t.grid));
        if (penalty > 0.0) {
            const double c = best_penalty_center(t.m.back(), plus);
            const auto d = sq_distance_to_ball(t.grid, c, plus.r_rho);
            const double scale = penalty / (w[nt] * t.tau);
            for (int i = 0; i < t.grid.n_cells; ++i) cost[nt][i] += scale * d[i];
        }
        return cost;
    }

    // Linear cost of the surrogate at `t`, plus the constant making it touch J.
    Table surrogate(const Trajectory& t, double& constant) const {
        Table cost;
        const int nt = t.n_t();
        const auto w = trapezoid_weights(nt);
        const double i_ball = k.scale * ball_interaction(k.alpha, t.rho);
        constant = 0.0;
        for (int s = 0; s <= nt; ++s) {
            cost.push_back(linearized_cost(t.m[s], p, k));
            constant += w[s] * t.tau * (interaction(t.m[s], k) + i_ball);
        }
        if (penalty > 0.0) {
            const GridMeasure& end = t.m.back();
            const double c = best_penalty_center(end, plus);
            const auto d = sq_distance_to_ball(t.grid, c, plus.r_rho);
            const double scale = penalty / (w[nt] * t.tau);
            for (int i = 0; i < t.grid.n_cells; ++i) cost[nt][i] += scale * d[i];
        }
        return cost;
    }
};

}  // namespace

Trajectory solve_inner(const Table& linear_cost, const Trajectory& init, const SolverConfig& cfg,
                       bool warm, InnerResult* info) {
    InnerProblem prob = make_problem(linear_cost, init);
    InnerOptions opt = warm ? cfg.inner_warm : cfg.inner;
    opt.max_newton = cfg.inner_max_iter;
    InnerResult res;
    try {
        res = solve_inner_barrier(prob, cumulative_table(init), opt);
    } catch (const NonConvergence&) {
        if (!warm) throw;
        // A warm start too close to the box boundary can make the Newton
        // system singular; redo the solve from the cold settings.
        opt = cfg.inner;
        opt.max_newton = cfg.inner_max_iter;
        res = solve_inner_barrier(prob, cumulative_table(init), opt);
    }
    Trajectory out =
        Trajectory::from_cumulative(init.grid, init.rho, res.cumulative, init.tau, init.t0, init.mode);
    if (info) *info = std::move(res);
    return out;
}

double inner_objective(const Table& linear_cost, const Trajectory& traj) {
    return inner_objective(make_problem(linear_cost, traj), cumulative_table(traj));
}

SolveResult minimize_action(Trajectory init, const PotentialSpec& p, const KernelSpec& k,
                            const SolverConfig& cfg, double terminal_penalty,
                            const ProgressFn& progress) {
    const Objective obj{p, k, terminal_penalty, MinimizerSet::make(p, k.alpha, init.rho, Side::plus)};
    const double factor = init.mode.kind == SymmetryKind::quarter_brake ? 4.0 : 1.0;

    SolveResult res;
    Trajectory cur = std::move(init);
    check_boundary_mass(cur);
    double J = obj.value(cur);
    // A coarse time step can leave the initializer with flux through vacuum
    // (infinite action); the history starts at the first finite value.
    if (std::isfinite(J)) {
        res.energy_history.push_back(factor * J);
        if (progress) progress(0, factor * J);
    }
    if (cfg.central_start && cur.mode.kind != SymmetryKind::periodic) {
        // Competing start: one ball at the origin sliding to the nearest
        // plus-side minimizer. Used when it has the lower action.
        Trajectory alt = central_start(cur, obj.plus);
        if (boundary_mass_ok(alt)) {
            const double J_alt = obj.value(alt);
            if (J_alt < J) {
                cur = std::move(alt);
                J = J_alt;
                res.energy_history.push_back(factor * J);
                if (progress) progress(0, factor * J);
            }
        }
    }

    bool warm = false;
    double beta = 1.0;
    for (int it = 1; it <= cfg.outer_max_iter; ++it) {
        double constant = 0.0;
        const Table cost = obj.surrogate(cur, constant);
        const double surr_cur = inner_objective(cost, cur) + constant;
        InnerResult info;
        Trajectory cand = solve_inner(cost, cur, cfg, warm, &info);
        res.newton_steps += info.newton_steps;
        res.outer_iterations = it;
        check_boundary_mass(cand);
        const double surr_cand = info.objective + constant;
        double J_cand = obj.value(cand);
        const double decrease = J - J_cand;
        // Surrogate decrease bounds the Nash gap of the current iterate.
        res.fixed_point_change = factor * std::max(0.0, surr_cur - surr_cand);
        if (!(J_cand <= J)) {
            // The barrier solve is only accurate to its duality gap; keep the iterate.
            res.converged = factor * (surr_cur - surr_cand) < cfg.tol_fixed_point;
            break;
        }
        if (cfg.extrapolate) {
            // Try cand + beta (cand - cur), re-projected node by node.
            for (int tries = 0; tries < 8; ++tries) {
                Trajectory y = extrapolated(cur, cand, beta);
                const double J_y = obj.value(y);
                if (J_y < J_cand && boundary_mass_ok(y)) {
                    cand = std::move(y);
                    J_cand = J_y;
                    beta *= 2.0;
                    break;
                }
                beta *= 0.5;
                if (beta < 0.25) {
                    beta = 0.25;
                    break;
                }
            }
        }
        cur = std::move(cand);
        J = J_cand;
        warm = true;
        res.energy_history.push_back(factor * J);
        if (progress) progress(it, factor * J);
        if (factor * decrease < cfg.tol_energy * (1.0 + factor * std::abs(J)) &&
            res.fixed_point_change < cfg.tol_fixed_point) {
            res.converged = true;
            break;
        }
    }
    res.trajectory = std::move(cur);
    obj.value(res.trajectory, &res.report);
    res.total = factor * J;
    return res;
}

SolveResult solve_brake(double T, const PotentialSpec& p, const KernelSpec& k, double rho,
                        const SolverConfig& cfg, const ProgressFn& progress) {
    cfg.validate(q0(p, rho));
    Trajectory init = init_feasible_brake(T, p, k, rho, cfg.n_t);
    const double c_prime = brake_energy_bound(init, p, k);
    SolveResult res = minimize_action(std::move(init), p, k, cfg, 0.0, progress);
    res.c_prime = c_prime;
    res.closeness = closeness_profile(res.trajectory, p, k.alpha, cfg.q);
    NashOptions nopt;
    nopt.seed = cfg.seed;
    nopt.n_competitors = cfg.n_competitors;
    res.nash_gap = nash_gap(res.trajectory, p, k, nopt, cfg);
    res.report.nash_gap = res.nash_gap;
    return res;
}

SolveResult solve_heteroclinic_direct(double L, int n_t, double penalty, const PotentialSpec& p,
                                      const KernelSpec& k, double rho, const SolverConfig& cfg,
                                      const ProgressFn& progress) {
    if (!(L >= 2.0)) throw std::invalid_argument("direct solve needs L >= 2");
    if (!(penalty > 0.0)) throw std::invalid_argument("direct solve needs a positive penalty");
    // Same start as the brake initializer on a quarter of length L.
    Trajectory init = init_feasible_brake(4.0 * L, p, k, rho, n_t);
    init.mode = {SymmetryKind::half_heteroclinic, 0.0, L};
    return minimize_action(std::move(init), p, k, cfg, penalty, progress);
}

double linearized_objective(const Trajectory& traj, const Table& cost) {
    double s = kinetic_energy(traj);
    const int nt = traj.n_t();
    for (int k = 0; k <= nt; ++k) {
        const double w = (k == 0 || k == nt) ? 0.5 : 1.0;
        s += w * traj.tau * dot_h(cost[k], traj.m[k]);
    }
    return s;
}

Trajectory symmetrize(const Trajectory& t) {
    const int N = t.n_t();
    if (std::abs(t.t0 + t.time(N)) > 1e-9 * std::max(1.0, t.tau * N)) {
        throw std::invalid_argument("symmetrize needs a time grid symmetric about 0");
    }
    const int n = t.grid.n_cells;
    Trajectory s = t;
    for (int k = 0; k <= N; ++k) {
        const GridMeasure r = reflect(t.m[N - k]);
        std::vector<double> d(n);
        for (int i = 0; i < n; ++i) d[i] = 0.5 * (t.m[k][i] + r[i]);
        s.m[k] = GridMeasure(t.grid, std::move(d), t.rho);
    }
    // Reflection mirrors the interfaces and time reversal cancels the sign flip.
    for (int k = 0; k < N; ++k) {
        const auto& src = t.w[N - 1 - k];
        for (int j = 0; j <= n; ++j) s.w[k][j] = 0.5 * (t.w[k][j] + src[n - j]);
    }
    return s;
}

namespace {

Trajectory random_competitor(const Trajectory& full, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double T = full.tau * full.n_t();
    const double X = full.grid.x_max;
    const double amp = full.rho * std::pow(10.0, -3.0 + 2.5 * unif(rng));
    struct Mode {
        int a, b;
        double phase_t, phase_x, coef;
    };
    std::vector<Mode> modes;
    const int n_modes = 1 + static_cast<int>(unif(rng) * 4);
    for (int i = 0; i < n_modes; ++i) {
        modes.push_back({static_cast<int>(unif(rng) * 3), 1 + static_cast<int>(unif(rng) * 6),
                         2 * M_PI * unif(rng), 2 * M_PI * unif(rng), 2 * unif(rng) - 1});
    }
    const int n = full.grid.n_cells;
    const double mix = 1e-6, uniform = 1.0 / (n * full.grid.h);
    std::vector<GridMeasure> nodes;
    for (int k = 0; k < full.n_t(); ++k) {
        const double t = full.time(k);
        std::vector<double> raw(n);
        for (int i = 0; i < n; ++i) {
            const double x = full.grid.center(i);
            double v = 0.0;
            for (const auto& md : modes) {
                v += md.coef * std::cos(2 * M_PI * md.a * t / T + md.phase_t) *
                     std::cos(M_PI * md.b * x / X + md.phase_x);
            }
            raw[i] = full.m[k][i] + amp * v;
        }
        std::vector<double> d = capped_simplex_projection(raw, full.grid.h, full.rho);
        for (double& x : d) x = (1.0 - mix) * x + mix * uniform;
        nodes.emplace_back(full.grid, std::move(d), full.rho);
    }
    nodes.push_back(nodes.front());
    return Trajectory::from_nodes(std::move(nodes), full.tau, full.t0, full.mode);
}

}  // namespace

double nash_gap(const Trajectory& candidate, const PotentialSpec& p, const KernelSpec& k,
                const NashOptions& opt, const SolverConfig& cfg) {
    Trajectory full;
    if (candidate.mode.kind == SymmetryKind::quarter_brake) {
        full = unfold(candidate);
    } else if (candidate.mode.kind == SymmetryKind::periodic) {
        full = candidate;
    } else {
        throw std::invalid_argument("nash_gap needs a brake or periodic trajectory");
    }
    Table cost;
    for (const auto& m : full.m) cost.push_back(linearized_cost(m, p, k));
    const double base = linearized_objective(full, cost);
    double gap = 0.0;
    auto consider = [&](const Trajectory& c) { gap = std::max(gap, base - linearized_objective(c, cost)); };

    if (opt.best_response && candidate.mode.kind == SymmetryKind::quarter_brake) {
        Table qcost(cost.begin() + 2 * candidate.n_t(), cost.begin() + 3 * candidate.n_t() + 1);
        consider(unfold(solve_inner(qcost, candidate, cfg, true)));
    }
    for (int c = 0; c < opt.n_competitors; ++c) {
        const Trajectory comp = random_competitor(full, opt.seed * 0x9E3779B97F4A7C15ULL + c);
        consider(comp);
        consider(symmetrize(comp));
    }
    return std::max(0.0, gap);
}

GridMeasure sample(const Trajectory& traj, double t) {
    const double s = (t - traj.t0) / traj.tau;
    const int nt = traj.n_t();
    if (s <= 0.0) return traj.m.front();
    if (s >= nt) return traj.m.back();
    const int k = std::min(static_cast<int>(std::floor(s)), nt - 1);
    const double l = s - k;
    if (l == 0.0) return traj.m[k];
    std::vector<double> d(traj.grid.n_cells);
    for (int i = 0; i < traj.grid.n_cells; ++i) d[i] = (1.0 - l) * traj.m[k][i] + l * traj.m[k + 1][i];
    return GridMeasure(traj.grid, std::move(d), traj.rho);
}

double window_distance(const Trajectory& a, const Trajectory& b, double L, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("window step must be positive");
    const int steps = static_cast<int>(std::ceil(2.0 * L / dt - 1e-9));
    double worst = 0.0;
    for (int i = 0; i <= steps; ++i) {
        const double t = std::min(-L + i * dt, L);
        worst = std::max(worst, d2(sample(a, t), sample(b, t)));
    }
    return worst;
}

namespace {

// Action of steps [k1, k2) plus the trapezoid potential on nodes k1..k2.
double window_action(const Trajectory& t, int k1, int k2, const PotentialSpec& p, const KernelSpec& k) {
    double s = kinetic_energy(t, k1, k2);
    for (int j = k1; j <= k2; ++j) {
        const double w = (j == k1 || j == k2) ? 0.5 : 1.0;
        s += w * t.tau * renormalized_energy(t.m[j], p, k);
    }
    return s;
}

}  // namespace

SurgeryResult surgery(const Trajectory& traj, double t1, double t2, Side side,
                      const PotentialSpec& p, const KernelSpec& k, const SolverConfig& cfg) {
    const double qp = cfg.q_prime;
    if (!(qp > 0.0)) throw std::invalid_argument("surgery needs q_prime > 0");
    if (traj.mode.kind == SymmetryKind::quarter_brake) {
        throw std::invalid_argument("surgery expects an unfolded trajectory");
    }
    const int k1 = static_cast<int>(std::lround((t1 - traj.t0) / traj.tau));
    const int k2 = static_cast<int>(std::lround((t2 - traj.t0) / traj.tau));
    if (k1 < 0 || k2 > traj.n_t() || k1 >= k2) throw std::invalid_argument("surgery window outside trajectory");
    const int leg = std::max(1, static_cast<int>(std::lround(qp / traj.tau)));
    if (k2 - k1 <= 2 * leg || (k2 - k1) * traj.tau <= 2 * qp) {
        throw std::invalid_argument("surgery window shorter than two legs");
    }
    const auto set = MinimizerSet::make(p, k.alpha, traj.rho, side);
    const auto e1 = d2_to_minimizer_set(traj.m[k1], set);
    const double slack = 1e-9;
    const GridMeasure target = GridMeasure::ball(traj.grid, traj.rho, e1.center);
    const double r1 = d2(traj.m[k1], target), r2 = d2(traj.m[k2], target);
    if (r1 > qp + slack || r2 > qp + slack) {
        std::ostringstream os;
        os << "surgery entry radius violated: d2 = " << r1 << ", " << r2 << " > q' = " << qp;
        throw std::invalid_argument(os.str());
    }

    Trajectory out = traj;
    const Trajectory in = geodesic(traj.m[k1], target, traj.time(k1), traj.time(k1 + leg), leg);
    const Trajectory back = geodesic(target, traj.m[k2], traj.time(k2 - leg), traj.time(k2), leg);
    const std::vector<double> zero(traj.grid.n_cells + 1, 0.0);
    for (int s = 0; s <= leg; ++s) out.m[k1 + s] = in.m[s];
    for (int j = k1 + leg + 1; j < k2 - leg; ++j) out.m[j] = target;
    for (int s = 0; s <= leg; ++s) out.m[k2 - leg + s] = back.m[s];
    for (int s = 0; s < leg; ++s) {
        out.w[k1 + s] = in.w[s];
        out.w[k2 - leg + s] = back.w[s];
    }
    for (int j = k1 + leg; j < k2 - leg; ++j) out.w[j] = zero;
    // Endpoints are copied exactly; keep the original nodes bitwise.
    out.m[k1] = traj.m[k1];
    out.m[k2] = traj.m[k2];

    SurgeryResult r;
    r.delta_energy = window_action(out, k1, k2, p, k) - window_action(traj, k1, k2, p, k);
    r.ball_center = e1.center;
    r.trajectory = std::move(out);
    return r;
}

Excursion synthetic_excursion(const PotentialSpec& p, const KernelSpec& k, double rho,
                              double amplitude, double tau, double rest_time, double leg_time) {
    const auto set = MinimizerSet::make(p, k.alpha, rho, Side::plus);
    const Grid1D& g = k.grid;
    const GridMeasure home = GridMeasure::ball(g, rho, set.c_hi);
    const GridMeasure away = GridMeasure::ball(g, rho, set.c_hi + amplitude);
    const int n_rest = std::max(1, static_cast<int>(std::lround(rest_time / tau)));
    const int n_leg = std::max(1, static_cast<int>(std::lround(leg_time / tau)));
    std::vector<GridMeasure> nodes(n_rest, home);
    const Trajectory out = geodesic(home, away, 0.0, n_leg * tau, n_leg);
    const Trajectory back = geodesic(away, home, 0.0, n_leg * tau, n_leg);
    for (std::size_t s = 1; s < out.m.size(); ++s) nodes.push_back(out.m[s]);
    for (std::size_t s = 1; s < back.m.size(); ++s) nodes.push_back(back.m[s]);
    for (int s = 0; s < n_rest - 1; ++s) nodes.push_back(home);
    Excursion e;
    e.t1 = (n_rest - 1) * tau;
    e.t2 = e.t1 + 2 * n_leg * tau;
    e.trajectory = Trajectory::from_nodes(std::move(nodes), tau, 0.0);
    return e;
}

QPrimeSizing size_q_prime(double q, double c_prime, double delta, double growth, double c_hat) {
    if (!(q > 0.0 && c_prime > 0.0 && delta > 0.0 && growth > 0.0)) {
        throw std::invalid_argument("q' sizing needs positive inputs");
    }
    QPrimeSizing s{};
    s.c_hat = c_hat;
    s.q_prime = 0.5 * std::min(q * q / (4.0 * c_prime), q);
    s.rhs = 0.5 * q * std::sqrt(2.0 * delta);
    auto lhs = [&](double qp) { return 2.0 * qp + 2.0 * qp * growth * (1.0 + c_hat + q); };
    // The sizing rule is a strict bound; start just inside it.
    s.q_prime *= 0.5;
    s.halvings = 0;
    while (lhs(s.q_prime) >= s.rhs && s.halvings < 200) {
        s.q_prime *= 0.5;
        ++s.halvings;
    }
    s.lhs = lhs(s.q_prime);
    return s;
}

double surgery_c_hat(const PotentialSpec& p, double rho, double q) {
    const double r = 0.5 / rho;
    const double c_sup = std::sqrt(std::pow(p.a_plus + p.r_tilde - r, 2) + r * r / 3.0);
    return (c_sup + q) * (c_sup + q) - q;
}

StudyReport heteroclinic_study(const std::vector<double>& T_list, const PotentialSpec& p,
                               const KernelSpec& k, double rho, const SolverConfig& cfg,
                               double window, int threads, const ProgressFn& progress) {
    for (std::size_t i = 0; i < T_list.size(); ++i) {
        if (!(T_list[i] >= 8.0)) throw std::invalid_argument("T_list entries must be >= 8");
        if (i > 0 && !(T_list[i] > T_list[i - 1])) throw std::invalid_argument("T_list must increase");
    }
    StudyReport rep;
    rep.window = window;
    std::map<double, StudyEntry> by_T;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    const auto plus = MinimizerSet::make(p, k.alpha, rho, Side::plus);
    const auto minus = MinimizerSet::make(p, k.alpha, rho, Side::minus);
    auto worker = [&]() {
        for (std::size_t i; (i = next++) < T_list.size();) {
            StudyEntry e;
            e.T = T_list[i];
            try {
                e.result = solve_brake(e.T, p, k, rho, cfg, progress);
                const Trajectory half = half_orbit(e.result.trajectory);
                e.e_plus = d2_to_minimizer_set(half.m.back(), plus).distance;
                e.e_minus = d2_to_minimizer_set(half.m.front(), minus).distance;
                e.J_T = e.result.total;
                e.half_action = action_energy(half, p, k).total;
                e.ok = true;
            } catch (const std::exception& ex) {
                e.error = ex.what();
            }
            std::lock_guard<std::mutex> lock(mu);
            by_T[e.T] = std::move(e);
        }
    };
    const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(T_list.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < n_workers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (auto& [T, e] : by_T) rep.entries.push_back(std::move(e));

    const std::size_t n = rep.entries.size();
    rep.window_distance.assign(n, std::vector<double>(n, 0.0));
    std::vector<Trajectory> halves(n);
    for (std::size_t i = 0; i < n; ++i)
        if (rep.entries[i].ok) halves[i] = half_orbit(rep.entries[i].result.trajectory);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!rep.entries[i].ok || !rep.entries[j].ok) {
                rep.window_distance[i][j] = rep.window_distance[j][i] =
                    std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const double dt = std::min(halves[i].tau, halves[j].tau);
            rep.window_distance[i][j] = rep.window_distance[j][i] =
                window_distance(halves[i], halves[j], window, dt);
        }
    }
    return rep;
}

EndLabels check_bounded_energy_asymptotics(const Trajectory& window, const PotentialSpec& p,
                                           double alpha) {
    const auto plus = MinimizerSet::make(p, alpha, window.rho, Side::plus);
    const auto minus = MinimizerSet::make(p, alpha, window.rho, Side::minus);
    const double settle = 0.5 * q0(p, window.rho);
    auto label = [&](const GridMeasure& m, const char* which) {
        const double dp = d2_to_minimizer_set(m, plus).distance;
        const double dm = d2_to_minimizer_set(m, minus).distance;
        if (std::min(dp, dm) > settle) {
            std::ostringstream os;
            os << "not settled: " << which << " is " << std::min(dp, dm) << " from both sets";
            throw InvariantFailure(os.str());
        }
        return dp <= dm ? Side::plus : Side::minus;
    };
    EndLabels out{label(window.m.front(), "start"), label(window.m.back(), "end")};

    const int N = window.n_t();
    bool symmetric = std::abs(window.t0 + window.time(N)) <= 1e-9 * std::max(1.0, N * window.tau);
    for (int s = 0; symmetric && s <= N; ++s) {
        const GridMeasure r = reflect(window.m[N - s]);
        for (int i = 0; i < r.size(); ++i) {
            if (std::abs(r[i] - window.m[s][i]) > 1e-12) {
                symmetric = false;
                break;
            }
        }
    }
    if (symmetric && out.start == out.end) {
        throw InvariantFailure("symmetric trajectory must connect opposite sets");
    }
    return out;
}

std::vector<double> greedy_fill(const std::vector<double>& f, double h, double rho) {
    const int n = static_cast<int>(f.size());
    if (n * h * rho < 1.0) throw std::invalid_argument("cap too small to hold the mass");
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });
    std::vector<double> m(n, 0.0);
    double left = 1.0;
    for (int i : order) {
        if (left <= 0.0) break;
        const double take = std::min(rho * h, left);
        m[i] = take / h;
        left -= take;
    }
    return m;
}

StationaryResult minimize_stationary(const Grid1D& grid, double rho, const PotentialSpec& p,
                                     const KernelSpec& k, Side side, int max_iter) {
    // Side bias: flat density over the chosen plateau, widened when the cap
    // cannot hold the unit mass there.
    const double c = side == Side::plus ? p.a_plus : p.a_minus();
    const double half = std::max(p.r_tilde, 0.5 / rho);
    std::vector<double> raw(grid.n_cells);
    for (int i = 0; i < grid.n_cells; ++i) {
        const double lo = std::max(grid.edge(i), c - half), hi = std::min(grid.edge(i + 1), c + half);
        raw[i] = std::max(0.0, hi - lo) / (2.0 * half * grid.h);
    }
    const std::vector<double> d = capped_simplex_projection(raw, grid.h, rho);
    StationaryResult res;
    res.minimizer = GridMeasure(grid, d, rho);
    res.w0 = renormalized_energy(res.minimizer, p, k);
    res.history.push_back(res.w0);
    for (int it = 1; it <= max_iter; ++it) {
        GridMeasure next(grid, greedy_fill(linearized_cost(res.minimizer, p, k), grid.h, rho), rho);
        const double w0 = renormalized_energy(next, p, k);
        res.iterations = it;
        if (!(w0 < res.w0)) break;
        res.minimizer = std::move(next);
        res.w0 = w0;
        res.history.push_back(w0);
    }
    return res;
}

}  // namespace wbrake
