#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "wbrake/error.hpp"
#include "wbrake/experiments.hpp"
#include "wbrake/inner_solver.hpp"
#include "wbrake/solver.hpp"

using namespace wbrake;

namespace {

// ---- toy inner problem: 2 cells, 3 nodes -----------------------------------
// With two cells every flux location sees m0 + m1 = 1/h at both time levels,
// so the mean density there is 1/(2h) and the objective is an explicit
// quadratic in the interior cumulative mass M^k in [1 - rho h, rho h].

struct Toy {
    InnerProblem prob;
    double lo, hi;

    double objective(const double* M) const {
        const double h = prob.h, tau = prob.tau, mbar = 1.0 / (2.0 * h);
        double s = 0.0;
        for (int k = 0; k < prob.n_t; ++k) s += (h / tau) * (M[k + 1] - M[k]) * (M[k + 1] - M[k]) / mbar;
        for (int k = 0; k <= prob.n_t; ++k) {
            s += prob.weight[k] * tau * (prob.cost[k][0] * M[k] + prob.cost[k][1] * (1.0 - M[k]));
        }
        return s;
    }
};

Toy make_toy(std::uint64_t seed, InnerProblem::Start start) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> c(-2.0, 2.0);
    Toy t;
    t.prob.n = 2;
    t.prob.h = 0.5;
    t.prob.rho = 1.5;
    t.prob.tau = 0.5;
    t.prob.n_t = 2;
    t.prob.weight = {0.5, 1.0, 0.5};
    t.prob.start = start;
    for (int k = 0; k < 3; ++k) t.prob.cost.push_back({c(rng), c(rng)});
    t.lo = 1.0 - t.prob.rho * t.prob.h;
    t.hi = t.prob.rho * t.prob.h;
    return t;
}

// Exhaustive grid search with one local refinement (the objective is convex).
double grid_search(const Toy& t, bool fix_first) {
    double best = std::numeric_limits<double>::infinity();
    double arg[3] = {0.5, 0.5, 0.5};
    auto scan = [&](const double* lo, const double* hi, int n) {
        double M[3];
        const int n0 = fix_first ? 1 : n;
        for (int a = 0; a < n0; ++a) {
            M[0] = fix_first ? 0.5 : lo[0] + (hi[0] - lo[0]) * a / (n - 1);
            for (int b = 0; b < n; ++b) {
                M[1] = lo[1] + (hi[1] - lo[1]) * b / (n - 1);
                for (int c = 0; c < n; ++c) {
                    M[2] = lo[2] + (hi[2] - lo[2]) * c / (n - 1);
                    const double v = t.objective(M);
                    if (v < best) best = v, std::copy(M, M + 3, arg);
                }
            }
        }
    };
    const double lo[3] = {t.lo, t.lo, t.lo}, hi[3] = {t.hi, t.hi, t.hi};
    scan(lo, hi, 201);
    const double step = (t.hi - t.lo) / 200;
    double lo2[3], hi2[3];
    for (int i = 0; i < 3; ++i) lo2[i] = std::max(t.lo, arg[i] - 2 * step), hi2[i] = std::min(t.hi, arg[i] + 2 * step);
    scan(lo2, hi2, 201);
    return best;
}

const std::vector<std::vector<double>> kToyInit(3, std::vector<double>{0.0, 0.5, 1.0});

// ---- coarse brake model shared by the solver tests -------------------------

const Model& coarse() {
    static const Model m = [] {
        RunConfig cfg;
        cfg.grid.n_cells = 64;
        cfg.solver.n_t = 16;
        return build_model(cfg);
    }();
    return m;
}

const SolveResult& coarse_brake() {
    static const SolveResult r =
        solve_brake(24.0, coarse().potential, coarse().kernel, coarse().rho, coarse().solver);
    return r;
}

}  // namespace

TEST(InnerToy, FreeStartMatchesGridSearch) {
    for (std::uint64_t seed : {1, 2, 3, 4}) {
        const Toy t = make_toy(seed, InnerProblem::Start::free);
        const InnerResult r = solve_inner_barrier(t.prob, kToyInit);
        EXPECT_NEAR(r.objective, grid_search(t, false), 1e-6) << "seed " << seed;
        EXPECT_NEAR(inner_objective(t.prob, r.cumulative), r.objective, 1e-12);
        EXPECT_NEAR(t.objective(std::vector<double>{r.cumulative[0][1], r.cumulative[1][1], r.cumulative[2][1]}.data()),
                    r.objective, 1e-12);
    }
}

TEST(InnerToy, SymmetricStartPinsFirstNode) {
    for (std::uint64_t seed : {5, 6}) {
        const Toy t = make_toy(seed, InnerProblem::Start::symmetric);
        const InnerResult r = solve_inner_barrier(t.prob, kToyInit);
        EXPECT_NEAR(r.cumulative[0][1], 0.5, 1e-12);
        EXPECT_NEAR(r.objective, grid_search(t, true), 1e-6) << "seed " << seed;
    }
}

TEST(InnerToy, ActiveCapBound) {
    // A large cost gap pushes all mass towards the cap of the cheap cell.
    Toy t = make_toy(7, InnerProblem::Start::free);
    for (auto& c : t.prob.cost) c = {-50.0, 50.0};
    const InnerResult r = solve_inner_barrier(t.prob, kToyInit);
    EXPECT_NEAR(r.objective, grid_search(t, false), 1e-6);
    for (const auto& row : r.cumulative) EXPECT_NEAR(row[1], t.hi, 1e-6);
}

TEST(InnerToy, TooFewNewtonStepsThrows) {
    const Toy t = make_toy(8, InnerProblem::Start::free);
    InnerOptions o;
    o.max_newton = 1;
    EXPECT_THROW(solve_inner_barrier(t.prob, kToyInit, o), NonConvergence);
}

TEST(SolverConfig, Validation) {
    SolverConfig c;
    EXPECT_NO_THROW(c.validate(0.75));
    c.q = 0.8;
    EXPECT_THROW(c.validate(0.75), std::invalid_argument);
    c.q = 0.3;
    c.q_prime = 0.4;
    EXPECT_THROW(c.validate(0.75), std::invalid_argument);
    c.q_prime = 0.0;
    c.tol_energy = 0.0;
    EXPECT_THROW(c.validate(0.75), std::invalid_argument);
}

TEST(Brake, CoarseRunCertificates) {
    const SolveResult& r = coarse_brake();
    ASSERT_TRUE(r.converged);
    EXPECT_LE(max_increase(r.energy_history), kMonotoneTol);
    EXPECT_LE(r.nash_gap, 1e-5);
    EXPECT_TRUE(r.closeness.ok);
    EXPECT_LE(r.total, r.c_prime);
    EXPECT_LE(r.report.continuity_residual, 1e-9);
    EXPECT_EQ(r.report.max_cap_violation, 0.0);
    EXPECT_NEAR(r.total, 4.0 * r.report.total, 1e-12 * r.total);
    EXPECT_EQ(r.energy_history.back(), r.total);
}

TEST(Brake, FixedPointOfOneMoreStep) {
    const SolveResult& r = coarse_brake();
    const auto& p = coarse().potential;
    const auto& k = coarse().kernel;
    std::vector<std::vector<double>> cost;
    for (const auto& m : r.trajectory.m) cost.push_back(linearized_cost(m, p, k));
    const Trajectory next = solve_inner(cost, r.trajectory, coarse().solver, true);
    const double J1 = 4.0 * action_energy(next, p, k).total;
    EXPECT_LT(std::abs(J1 - r.total), coarse().solver.tol_energy * (1.0 + r.total));
}

TEST(Brake, RejectsShortPeriod) {
    EXPECT_THROW(solve_brake(6.0, coarse().potential, coarse().kernel, coarse().rho, coarse().solver),
                 std::invalid_argument);
}

TEST(Brake, DeterministicForFixedSeed) {
    const SolveResult again = solve_brake(24.0, coarse().potential, coarse().kernel, coarse().rho, coarse().solver);
    EXPECT_EQ(again.energy_history, coarse_brake().energy_history);
    EXPECT_EQ(again.nash_gap, coarse_brake().nash_gap);
}

TEST(Brake, TimeRefinementDoesNotRaiseTheInfimum) {
    SolverConfig cfg = coarse().solver;
    cfg.n_t = 32;
    const SolveResult fine = solve_brake(24.0, coarse().potential, coarse().kernel, coarse().rho, cfg);
    EXPECT_LE(fine.total, coarse_brake().total + cfg.tol_energy * (1.0 + coarse_brake().total));
}

TEST(Nash, SolutionBeatsInitializer) {
    const auto& m = coarse();
    const Trajectory init = init_feasible_brake(24.0, m.potential, m.kernel, m.rho, m.solver.n_t);
    NashOptions o;
    o.n_competitors = 20;
    const double g_init = nash_gap(init, m.potential, m.kernel, o, m.solver);
    const double g_sol = nash_gap(coarse_brake().trajectory, m.potential, m.kernel, o, m.solver);
    EXPECT_GT(g_init, 1e-3);
    EXPECT_GE(g_sol, 0.0);
    EXPECT_LE(g_sol, 1e-5);
}

TEST(Symmetrize, FixesSymmetricOrbits) {
    const Trajectory full = unfold(coarse_brake().trajectory);
    const Trajectory s = symmetrize(full);
    for (int k = 0; k <= full.n_t(); ++k) EXPECT_EQ(s.m[k].density(), full.m[k].density());
    EXPECT_THROW(symmetrize(coarse_brake().trajectory), std::invalid_argument);
}

TEST(Sample, InterpolatesBetweenNodes) {
    const Trajectory& t = coarse_brake().trajectory;
    EXPECT_EQ(sample(t, t.time(3)).density(), t.m[3].density());
    const GridMeasure mid = sample(t, t.time(3) + 0.5 * t.tau);
    for (int i = 0; i < mid.size(); ++i) EXPECT_NEAR(mid[i], 0.5 * (t.m[3][i] + t.m[4][i]), 1e-14);
    EXPECT_EQ(window_distance(t, t, 2.0, t.tau), 0.0);
}

TEST(Labels, ClassifiesEndsAndEquivariance) {
    const auto& m = coarse();
    const Trajectory half = half_orbit(coarse_brake().trajectory);
    const EndLabels l = check_bounded_energy_asymptotics(half, m.potential, m.kernel.alpha);
    EXPECT_EQ(l.start, Side::minus);
    EXPECT_EQ(l.end, Side::plus);

    const GridMeasure ball = GridMeasure::ball(m.grid, m.rho, 1.0);
    const Trajectory rest = Trajectory::from_nodes(std::vector<GridMeasure>(5, ball), 0.5, 0.0);
    const EndLabels r = check_bounded_energy_asymptotics(rest, m.potential, m.kernel.alpha);
    EXPECT_EQ(r.start, Side::plus);
    EXPECT_EQ(r.end, Side::plus);
    const Trajectory mirrored =
        Trajectory::from_nodes(std::vector<GridMeasure>(5, reflect(ball)), 0.5, 0.0);
    EXPECT_EQ(check_bounded_energy_asymptotics(mirrored, m.potential, m.kernel.alpha).start, Side::minus);

    const GridMeasure middle = GridMeasure::ball(m.grid, m.rho, 0.0);
    const Trajectory unsettled = Trajectory::from_nodes(std::vector<GridMeasure>(3, middle), 0.5, 0.0);
    EXPECT_THROW(check_bounded_energy_asymptotics(unsettled, m.potential, m.kernel.alpha), InvariantFailure);
}

TEST(Surgery, SizingSatisfiesThresholdInequality) {
    const QPrimeSizing s = size_q_prime(0.3, 144.4, 0.05, 12.0, 3.0);
    EXPECT_LT(s.lhs, s.rhs);
    EXPECT_LE(s.q_prime, 0.5 * std::min(0.3, 0.09 / (4 * 144.4)));
    EXPECT_NEAR(s.lhs, 2 * s.q_prime + 2 * s.q_prime * 12.0 * (1.0 + 3.0 + 0.3), 1e-15);
    EXPECT_THROW(size_q_prime(0.3, 144.4, 0.0, 12.0, 3.0), std::invalid_argument);
}

TEST(Surgery, ExcursionsAreImproved) {
    const auto& m = coarse();
    const double q = 0.3;
    const double delta = delta_estimate(q, 40, 7, m.grid, m.rho, m.potential, m.kernel);
    const QPrimeSizing s = size_q_prime(q, coarse_brake().c_prime, delta,
                                        renormalized_growth_constant(m.potential, m.kernel, m.rho),
                                        surgery_c_hat(m.potential, m.rho, q));
    SolverConfig cfg = m.solver;
    cfg.q_prime = s.q_prime;
    for (double f : {1.0, 1.5, 2.0}) {
        const Excursion ex = synthetic_excursion(m.potential, m.kernel, m.rho, f * q, 0.05, 1.0, 1.0);
        const auto& a = ex.trajectory;
        const int k1 = static_cast<int>(std::lround(ex.t1 / a.tau)), k2 = static_cast<int>(std::lround(ex.t2 / a.tau));
        EXPECT_EQ(a.m[k1].density(), a.m[k2].density());
        const SurgeryResult r = surgery(a, ex.t1, ex.t2, Side::plus, m.potential, m.kernel, cfg);
        EXPECT_LT(r.delta_energy, 0.0) << "amplitude " << f * q;
        for (int j = 0; j <= a.n_t(); ++j) {
            if (j <= k1 || j >= k2) {
                EXPECT_EQ(r.trajectory.m[j].density(), a.m[j].density());
            } else {
                EXPECT_LE(d2(r.trajectory.m[j], GridMeasure::ball(a.grid, a.rho, r.ball_center)), s.q_prime + 1e-12);
            }
        }
        EXPECT_LE(r.trajectory.continuity_residual(), 1e-9);
    }
}

TEST(Surgery, RejectsBadInputs) {
    const auto& m = coarse();
    const Excursion ex = synthetic_excursion(m.potential, m.kernel, m.rho, 0.3, 0.05, 1.0, 1.0);
    SolverConfig cfg = m.solver;
    cfg.q_prime = 0.0;
    EXPECT_THROW(surgery(ex.trajectory, ex.t1, ex.t2, Side::plus, m.potential, m.kernel, cfg), std::invalid_argument);
    cfg.q_prime = 1e-3;
    EXPECT_THROW(surgery(coarse_brake().trajectory, 1.0, 4.0, Side::plus, m.potential, m.kernel, cfg),
                 std::invalid_argument);
    // Window ends far from the minus set.
    EXPECT_THROW(surgery(ex.trajectory, ex.t1, ex.t2, Side::minus, m.potential, m.kernel, cfg), std::invalid_argument);
}

TEST(Stationary, GreedyFillIsOptimal) {
    // Compare against every vertex of the capped simplex on 6 cells.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double h = 0.25, rho = 2.0;  // two saturated cells hold the mass
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> f(6);
        for (double& v : f) v = u(rng);
        const auto g = greedy_fill(f, h, rho);
        double got = 0.0, best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 6; ++i) got += f[i] * g[i] * h;
        for (int a = 0; a < 6; ++a)
            for (int b = a + 1; b < 6; ++b) best = std::min(best, (f[a] + f[b]) * rho * h);
        EXPECT_NEAR(got, best, 1e-14);
    }
    EXPECT_THROW(greedy_fill(std::vector<double>(1, 0.0), h, rho), std::invalid_argument);
}
