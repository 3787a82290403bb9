#include "wbrake/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>

#include "wbrake/error.hpp"

namespace wbrake {

GridMeasure random_measure(const Grid1D& grid, double rho, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double span = grid.x_max - grid.x_min;
    const double len = std::min(span, 2.0 / rho + unif(rng) * 0.5 * span);
    const double lo = grid.x_min + unif(rng) * (span - len);
    std::vector<double> raw(grid.n_cells, 0.0);
    for (int i = 0; i < grid.n_cells; ++i) {
        const double x = grid.center(i);
        if (x >= lo && x <= lo + len) raw[i] = 2.0 * rho * unif(rng);
    }
    return GridMeasure::project(grid, raw, rho);
}

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

class Runner {
public:
    explicit Runner(std::ostream* log) : log_(log) {}

    void check(const std::string& id, const std::function<CheckResult()>& body) {
        const auto t0 = Clock::now();
        CheckResult r;
        try {
            r = body();
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.id = id;
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        if (log_) *log_ << (r.passed ? "PASS " : "FAIL ") << id << "  " << r.detail << "  (" << fmt("%.1f s", secs) << ")\n"
                        << std::flush;
        results.push_back(std::move(r));
    }

    std::vector<CheckResult> results;

private:
    std::ostream* log_;
};

CheckResult verdict(bool ok, std::string detail) { return {"", ok, std::move(detail)}; }

// ---- measure_grid --------------------------------------------------------

void measure_grid_suite(Runner& run, const Model& model, const ValidationOptions& opt) {
    const Grid1D& g = model.grid;
    const double rho = model.rho;
    std::mt19937_64 rng(model.config.seed);

    run.check("measure_grid.triangle_inequality", [&] {
        double worst = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < 100; ++i) {
            const auto a = random_measure(g, rho, rng), b = random_measure(g, rho, rng), c = random_measure(g, rho, rng);
            worst = std::max(worst, d2(a, c) - d2(a, b) - d2(b, c));
        }
        return verdict(worst <= 1e-9, fmt("max excess %.3g over 100 triples", worst));
    });

    run.check("measure_grid.lp_oracle", [&] {
        const int n = opt.oracle ? 32 : 16;
        const Grid1D small = Grid1D::symmetric(2.0, n);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const auto a = random_measure(small, rho, rng), b = random_measure(small, rho, rng);
            worst = std::max(worst, std::abs(d2(a, b) - d2_lp_oracle(a, b)));
        }
        return verdict(worst <= 2.0 * small.h, fmt("max |d2 - lp| = %.3g, 2h = %.3g", worst, 2.0 * small.h));
    });

    run.check("measure_grid.reflection", [&] {
        double iso = 0.0;
        bool involution = true;
        for (int i = 0; i < 100; ++i) {
            const auto a = random_measure(g, rho, rng), b = random_measure(g, rho, rng);
            iso = std::max(iso, std::abs(d2(reflect(a), reflect(b)) - d2(a, b)));
            involution = involution && reflect(reflect(a)).density() == a.density();
        }
        return verdict(involution && iso <= 1e-12, fmt("isometry error %.3g", iso) + (involution ? "" : ", not an involution"));
    });

    run.check("measure_grid.geodesic", [&] {
        const auto m1 = GridMeasure::ball(g, rho, 0.75), m2 = GridMeasure::ball(g, rho, 1.25);
        const Trajectory geo = geodesic(m1, m2, 0.0, 1.0, 32);
        const double dist = d2(m1, m2);
        const double kin = kinetic_energy(geo);
        double cap = 0.0, speed = 0.0;
        for (int k = 0; k <= geo.n_t(); ++k) {
            for (double v : geo.m[k].density()) cap = std::max(cap, v - rho);
            const double s = static_cast<double>(k) / geo.n_t();
            speed = std::max(speed, std::abs(d2(m1, geo.m[k]) - s * dist) / dist);
        }
        const double rel = std::abs(kin - dist * dist) / (dist * dist);
        return verdict(rel <= 0.05 && cap <= 1e-12 && speed <= 0.05,
                       fmt("kinetic rel err %.3g, speed err %.3g", rel, speed) + fmt(", cap excess %.3g", cap));
    });
}

// ---- potential_model -----------------------------------------------------

void potential_suite(Runner& run, const Model& model) {
    const Grid1D& g = model.grid;
    const double rho = model.rho;
    const KernelSpec& k = model.kernel;
    std::mt19937_64 rng(model.config.seed + 1);

    run.check("potential_model.kernel_psd", [&] {
        const double ev = k.smallest_eigenvalue;
        return verdict(std::isfinite(ev) && ev >= -1e-10, fmt("smallest eigenvalue %.3g", ev));
    });

    run.check("potential_model.riesz_rearrangement", [&] {
        double worst = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < 200; ++i) {
            const auto m = random_measure(g, rho, rng);
            worst = std::max(worst, interaction(m, k) - interaction(rearrange_decreasing(m), k));
        }
        return verdict(worst <= 1e-10, fmt("max I(m) - I(m*) = %.3g", worst));
    });

    run.check("potential_model.interaction_supremum", [&] {
        const double top = interaction(GridMeasure::ball(g, rho, 0.0), k);
        double worst = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < 500; ++i) worst = std::max(worst, interaction(random_measure(g, rho, rng), k) - top);

        // All characteristic functions with unit mass on 8 cells of width 1/4, rho = 1.
        const Grid1D eight = Grid1D::symmetric(1.0, 8);
        const KernelSpec k8 = kernel_cell_matrix(eight, k.alpha);
        // I is translation invariant, so every saturated run of 4 cells ties.
        double best = -1.0, centred = 0.0;
        std::vector<std::pair<int, double>> values;
        for (int mask = 0; mask < 256; ++mask) {
            if (__builtin_popcount(mask) != 4) continue;
            std::vector<double> d(8);
            for (int i = 0; i < 8; ++i) d[i] = (mask >> i) & 1;
            const double v = interaction(GridMeasure(eight, d, 1.0), k8);
            values.emplace_back(mask, v);
            best = std::max(best, v);
            if (mask == 0b00111100) centred = v;
        }
        bool runs_only = true;
        for (const auto& [mask, v] : values) {
            const int low = mask & -mask;
            if (v >= best - 1e-12) runs_only = runs_only && mask == low * 0b1111;
        }
        const bool ok = worst <= 1e-8 && centred >= best - 1e-12 && runs_only;
        return verdict(ok, fmt("max I(m) - I(ball) = %.3g", worst) +
                               fmt(", 8-cell: centred block %.3g below the max", best - centred) +
                               (runs_only ? "" : ", a non-contiguous set attains the max"));
    });

    run.check("potential_model.brute_force_stationary", [&] {
        const auto b = brute_force_stationary(model.potential, k.alpha, rho);
        if (!b.ran) return verdict(true, "skipped: " + b.skipped_reason);
        return verdict(b.contiguous_block, fmt("%g vectors, %g minimizers", static_cast<double>(b.enumerated),
                                               b.n_minimizers));
    });

    run.check("potential_model.w0_continuity", [&] {
        const auto set = MinimizerSet::make(model.potential, k.alpha, rho, Side::plus);
        const auto r = minimize_stationary(g, rho, model.potential, k, Side::plus, model.config.solver.outer_max_iter);
        const double dist = d2_to_minimizer_set(r.minimizer, set).distance;
        const bool ok = !(r.w0 <= 1e-4) || dist <= 2.0 * g.h;
        return verdict(ok, fmt("W0 = %.3g, d2 to set = %.3g", r.w0, dist));
    });
}

// ---- action --------------------------------------------------------------

void action_suite_basic(Runner& run, const Model& model) {
    std::mt19937_64 rng(model.config.seed + 2);
    run.check("action.kinetic_convexity", [&] {
        std::uniform_real_distribution<double> pos(1e-3, 3.0), flux(-3.0, 3.0), lam(0.0, 1.0);
        double worst = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < 10000; ++i) {
            const double m1 = pos(rng), m2 = pos(rng), w1 = flux(rng), w2 = flux(rng), l = lam(rng);
            const double lhs = kinetic_density(l * m1 + (1 - l) * m2, l * w1 + (1 - l) * w2);
            const double rhs = l * kinetic_density(m1, w1) + (1 - l) * kinetic_density(m2, w2);
            worst = std::max(worst, (lhs - rhs) / (1.0 + rhs));
        }
        return verdict(worst <= 1e-12, fmt("max relative excess %.3g", worst));
    });

    run.check("action.lsc_refinement", [&] {
        // Coarse model so the two solves stay cheap.
        const Grid1D g = Grid1D::symmetric(model.grid.x_max, 64);
        const auto p = PotentialSpec::make(model.potential.a_plus, model.potential.r_tilde,
                                           model.potential.w_scale, g);
        const auto k = kernel_cell_matrix(g, model.kernel.alpha);
        SolverConfig cfg = model.solver;
        cfg.n_t = 16;
        const SolveResult coarse = solve_brake(model.config.experiment.T, p, k, model.rho, cfg);
        cfg.n_t = 32;
        const SolveResult fine = solve_brake(model.config.experiment.T, p, k, model.rho, cfg);
        const double tol = cfg.tol_energy * (1.0 + std::abs(coarse.total));
        return verdict(fine.total <= coarse.total + tol,
                       fmt("J(n_t=16) = %.10g, J(n_t=32) = %.10g", coarse.total, fine.total));
    });
}

// ---- solver-backed suites ------------------------------------------------

void solver_suites(Runner& run, const Model& model, const ValidationOptions& opt) {
    const auto& p = model.potential;
    const auto& k = model.kernel;
    const auto& e = model.config.experiment;
    if (opt.log) *opt.log << "running brake solves for T in the sweep list...\n" << std::flush;
    const StudyReport study = heteroclinic_study(e.T_list, p, k, model.rho, model.solver, e.window, opt.threads);
    std::vector<const StudyEntry*> done;
    std::string errors;
    for (const auto& s : study.entries) {
        if (s.ok && s.result.converged) done.push_back(&s);
        else errors += fmt(" T=%g", s.T) + (s.ok ? " not converged" : ": " + s.error);
    }
    run.check("solver.runs_converge", [&] { return verdict(errors.empty(), errors.empty() ? "all converged" : errors); });
    if (done.empty()) return;

    run.check("action.continuity_residual", [&] {
        double worst = 0.0;
        for (auto* s : done) worst = std::max(worst, s->result.report.continuity_residual);
        return verdict(worst <= 1e-9, fmt("max residual %.3g", worst));
    });

    run.check("action.unfold_exact", [&] {
        bool ok = true;
        double err = 0.0;
        for (auto* s : done) {
            const auto c = check_unfold_symmetry(s->result.trajectory, p, k);
            ok = ok && c.reflection_error == 0.0 && c.time_error == 0.0 &&
                 c.energy_ratio_error <= 1e-12 * (1.0 + std::abs(s->result.total));
            err = std::max(err, c.energy_ratio_error);
        }
        return verdict(ok, fmt("max |J(unfold) - 4 J(quarter)| = %.3g", err));
    });

    run.check("action.ac_estimate", [&] {
        std::mt19937_64 rng(model.config.seed + 3);
        double worst = -std::numeric_limits<double>::infinity();
        for (auto* s : done) {
            const Trajectory full = unfold(s->result.trajectory);
            std::uniform_int_distribution<int> node(0, full.n_t());
            for (int i = 0; i < 50; ++i) {
                int a = node(rng), b = node(rng);
                if (a == b) continue;
                if (a > b) std::swap(a, b);
                const double dist = d2(full.m[a], full.m[b]);
                worst = std::max(worst, dist * dist - (b - a) * full.tau * kinetic_energy(full, a, b));
            }
        }
        return verdict(worst <= 1e-8, fmt("max d2^2 - (t-s) kinetic = %.3g", worst));
    });

    run.check("solver.mm_monotone", [&] {
        double worst = 0.0;
        for (auto* s : done) worst = std::max(worst, max_increase(s->result.energy_history));
        return verdict(worst <= kMonotoneTol, fmt("largest history increase %.3g", worst));
    });

    run.check("solver.fixed_point", [&] {
        const SolveResult& r = done.front()->result;
        const Trajectory& cur = r.trajectory;
        std::vector<std::vector<double>> cost;
        for (const auto& m : cur.m) cost.push_back(linearized_cost(m, p, k));
        const Trajectory next = solve_inner(cost, cur, model.solver, true);
        const double J0 = 4.0 * action_energy(cur, p, k).total;
        const double J1 = 4.0 * action_energy(next, p, k).total;
        const double tol = model.solver.tol_energy * (1.0 + std::abs(J0));
        return verdict(std::abs(J1 - J0) < tol, fmt("one more MM step changes J by %.3g", J1 - J0));
    });

    run.check("solver.energy_bound", [&] {
        bool ok = true;
        std::string d;
        for (auto* s : done) {
            ok = ok && s->result.total <= s->result.c_prime;
            d += fmt(" T=%g: %.4g", s->T, s->result.total) + fmt(" <= %.4g;", s->result.c_prime);
        }
        return verdict(ok, d);
    });

    run.check("solver.nash_gap", [&] {
        double worst = 0.0;
        for (auto* s : done) worst = std::max(worst, s->result.nash_gap);
        return verdict(worst <= model.solver.tol_fixed_point, fmt("max Nash gap %.3g", worst));
    });

    run.check("solver.closeness_stability", [&] {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        bool ok = true;
        for (auto* s : done) {
            ok = ok && s->result.closeness.ok;
            lo = std::min(lo, s->result.closeness.s_plus);
            hi = std::max(hi, s->result.closeness.s_plus);
        }
        const double var = (hi - lo) / lo;
        return verdict(ok && var < 0.25, fmt("s in [%.4g, %.4g]", lo, hi) + fmt(", variation %.3g", var));
    });

    run.check("solver.surgery_dominance", [&] {
        const double q = model.solver.q;
        const double delta = delta_estimate(q, e.delta_samples, model.config.seed, model.grid, model.rho, p, k);
        const QPrimeSizing qs =
            size_q_prime(q, done.front()->result.c_prime, delta, renormalized_growth_constant(p, k, model.rho),
                         surgery_c_hat(p, model.rho, q));
        SolverConfig cfg = model.solver;
        cfg.q_prime = qs.q_prime;
        double worst = -std::numeric_limits<double>::infinity();
        bool outside = true, inside = true;
        for (double f : {1.05, 1.25, 1.5, 1.75, 2.0}) {
            const Excursion ex = synthetic_excursion(p, k, model.rho, f * q, 0.05, 1.0, 1.0);
            const SurgeryResult s = surgery(ex.trajectory, ex.t1, ex.t2, Side::plus, p, k, cfg);
            worst = std::max(worst, s.delta_energy);
            const auto& a = ex.trajectory;
            const int k1 = static_cast<int>(std::lround(ex.t1 / a.tau)), k2 = static_cast<int>(std::lround(ex.t2 / a.tau));
            for (int j = 0; j <= a.n_t(); ++j) {
                if (j <= k1 || j >= k2) outside = outside && a.m[j].density() == s.trajectory.m[j].density();
                else inside = inside && d2(s.trajectory.m[j], GridMeasure::ball(a.grid, a.rho, s.ball_center)) <= qs.q_prime + 1e-12;
            }
        }
        return verdict(worst < 0.0 && outside && inside,
                       fmt("q' = %.3g, max delta_energy = %.4g", qs.q_prime, worst) +
                           (outside ? "" : ", changed outside the window") + (inside ? "" : ", left the q' ball"));
    });
}

// ---- experiments_cli -----------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void cli_suite(Runner& run, const Model& model) {
    run.check("experiments_cli.determinism", [&] {
        const auto base = std::filesystem::temp_directory_path() / ("wbrake_det_" + std::to_string(model.config.seed));
        std::filesystem::remove_all(base);
        RunConfig cfg = model.config;
        cfg.experiment.svg = false;
        RunOptions a, b;
        a.out_dir = (base / "a").string();
        b.out_dir = (base / "b").string();
        cmd_stationary(cfg, a);
        cmd_stationary(cfg, b);
        bool same = true;
        int files = 0;
        for (const auto& f : std::filesystem::directory_iterator(a.out_dir)) {
            ++files;
            same = same && slurp(f.path()) == slurp(std::filesystem::path(b.out_dir) / f.path().filename());
        }
        std::filesystem::remove_all(base);
        return verdict(same && files > 0, fmt("%g artifacts compared", files));
    });

    run.check("experiments_cli.round_trip", [&] {
        std::mt19937_64 rng(model.config.seed + 4);
        const auto m = random_measure(model.grid, model.rho, rng);
        std::stringstream s;
        write_csv(s, m);
        const bool measure_ok = read_measure_csv(s, model.grid, model.rho).density() == m.density();

        const Trajectory geo = geodesic(GridMeasure::ball(model.grid, model.rho, 0.75),
                                        GridMeasure::ball(model.grid, model.rho, 1.25), 0.0, 1.0, 8);
        std::stringstream dens, flux;
        write_trajectory_csv(dens, flux, geo);
        const Trajectory back = read_trajectory_csv(dens, model.grid, model.rho);
        // tau is re-derived from the time column, so it may differ in the last bit.
        bool traj_ok = back.n_t() == geo.n_t() && std::abs(back.tau - geo.tau) <= 1e-14 && back.t0 == geo.t0;
        for (int j = 0; traj_ok && j <= geo.n_t(); ++j) traj_ok = back.m[j].density() == geo.m[j].density();

        const nlohmann::json c = to_json(model.config);
        const bool config_ok = to_json(parse_config(nlohmann::json::parse(c.dump()))) == c;

        nlohmann::json doc = {{"values", m.density()}};
        const bool json_ok = nlohmann::json::parse(doc.dump()) == doc;
        return verdict(measure_ok && traj_ok && config_ok && json_ok,
                       std::string("measure ") + (measure_ok ? "ok" : "lossy") + ", trajectory " +
                           (traj_ok ? "ok" : "lossy") + ", config " + (config_ok ? "ok" : "lossy") + ", json " +
                           (json_ok ? "ok" : "lossy"));
    });
}

}  // namespace

std::vector<CheckResult> run_validation(const Model& model, const ValidationOptions& opt) {
    Runner run(opt.log);
    measure_grid_suite(run, model, opt);
    potential_suite(run, model);
    action_suite_basic(run, model);
    if (opt.solver_suites) solver_suites(run, model, opt);
    cli_suite(run, model);
    return run.results;
}

std::string format_table(const std::vector<CheckResult>& results) {
    std::size_t width = 0;
    for (const auto& r : results) width = std::max(width, r.id.size());
    std::ostringstream o;
    int failed = 0;
    for (const auto& r : results) {
        o << (r.passed ? "PASS  " : "FAIL  ") << r.id << std::string(width - r.id.size() + 2, ' ') << r.detail << '\n';
        if (!r.passed) ++failed;
    }
    o << results.size() - failed << " passed, " << failed << " failed\n";
    return o.str();
}

}  // namespace wbrake
