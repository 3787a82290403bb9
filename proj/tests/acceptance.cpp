// Acceptance run on the canonical configuration: one PASS/FAIL line per
// criterion, exit status 1 if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wbrake/experiments.hpp"
#include "wbrake/validation.hpp"

using namespace wbrake;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

int failures = 0;

void criterion(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < limit_s;
    const bool ok = o.ok && in_time;
    if (!ok) ++failures;
    std::cout << (ok ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << o.detail
              << fmt("  (%.1f s, limit %.0f s)", secs, limit_s) << (in_time ? "" : " over time limit") << "\n"
              << std::flush;
}

// Test-side AC check on one trajectory: worst d2^2 - (t - s) * kinetic.
double ac_excess(const Trajectory& t, int samples, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> node(0, t.n_t());
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples;) {
        int a = node(rng), b = node(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        const double d = d2(t.m[a], t.m[b]);
        worst = std::max(worst, d * d - (b - a) * t.tau * kinetic_energy(t, a, b));
        ++i;
    }
    return worst;
}

}  // namespace

int main() {
    const RunConfig cfg = parse_config(nlohmann::json::object());
    const Model model = build_model(cfg);
    const Grid1D& g = model.grid;
    const double rho = model.rho;
    const auto& p = model.potential;
    const auto& k = model.kernel;
    std::mt19937_64 rng(cfg.seed);

    std::cout << fmt("canonical grid: n = %g, X = %g, rho = %g", g.n_cells, g.x_max, rho)
              << fmt(", n_t = %g, alpha = %g\n", model.solver.n_t, cfg.kernel.alpha);

    criterion(1, "exact-OT oracle", 10.0, [&] {
        const Grid1D small = Grid1D::symmetric(cfg.grid.x_max, 16);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const auto a = random_measure(small, rho, rng), b = random_measure(small, rho, rng);
            worst = std::max(worst, std::abs(d2(a, b) - d2_lp_oracle(a, b)));
        }
        return Outcome{worst <= 2.0 * small.h, fmt("max |d2 - lp| = %.3g over 100 pairs, 2h = %.3g", worst, 2.0 * small.h)};
    });

    criterion(2, "geodesic identity", 5.0, [&] {
        const auto m1 = GridMeasure::ball(g, rho, 0.75), m2 = GridMeasure::ball(g, rho, 1.25);
        const Trajectory geo = geodesic(m1, m2, 0.0, 1.0, 64);
        const double kin = kinetic_energy(geo);
        double cap = 0.0, speed = 0.0;
        for (int j = 0; j <= geo.n_t(); ++j) {
            for (double v : geo.m[j].density()) cap = std::max(cap, v - rho);
            // Exact translation: the ball centre moves at speed 0.5.
            speed = std::max(speed, std::abs(d2(m1, geo.m[j]) - 0.5 * j / geo.n_t()) / 0.5);
        }
        const double rel = std::abs(kin - 0.25) / 0.25;
        return Outcome{rel <= 0.05 && cap <= 0.0 && speed <= 0.05,
                       fmt("kinetic %.5g vs 0.25 (rel %.3g), speed err %.3g", kin, rel, speed) + fmt(", cap excess %.3g", cap)};
    });

    criterion(3, "kernel PSD", 30.0, [&] {
        const KernelSpec fresh = kernel_cell_matrix(g, cfg.kernel.alpha);
        const double ev = fresh.smallest_eigenvalue;
        return Outcome{std::isfinite(ev) && ev >= -1e-10, fmt("smallest eigenvalue %.4g at n = %g", ev, g.n_cells)};
    });

    criterion(4, "Riesz rearrangement", 10.0, [&] {
        double worst = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < 200; ++i) {
            const auto m = random_measure(g, rho, rng);
            worst = std::max(worst, interaction(m, k) - interaction(rearrange_decreasing(m), k));
        }
        return Outcome{worst <= 1e-10, fmt("max I(m) - I(m*) = %.3g over 200 measures", worst)};
    });

    criterion(5, "stationary classification", 120.0, [&] {
        const fs::path dir = fs::temp_directory_path() / "wbrake_acceptance_stationary";
        fs::remove_all(dir);
        RunConfig c = cfg;
        c.experiment.svg = false;
        RunOptions opt;
        opt.out_dir = dir.string();
        const int code = cmd_stationary(c, opt);
        std::ifstream in(dir / "stationary_report.json");
        const auto r = nlohmann::json::parse(in);
        std::ifstream csv(dir / "stationary_minimizer.csv");
        const GridMeasure m = read_measure_csv(csv, g, rho);
        // Recompute from the written minimizer rather than trusting the report.
        const double w0 = renormalized_energy(m, p, k);
        const double dist = d2_to_minimizer_set(m, MinimizerSet::make(p, cfg.kernel.alpha, rho, Side::plus)).distance;
        const double frac = r["is_characteristic"].get<double>();
        const bool block = r["brute_force"]["contiguous_block"].get<bool>();
        fs::remove_all(dir);
        return Outcome{code == 0 && w0 <= 1e-4 && dist <= 2.0 * g.h && frac >= 0.98 && block,
                       fmt("W0 = %.3g, d2 to ball family = %.3g, characteristic fraction = %.4g", w0, dist, frac) +
                           (block ? ", brute force: contiguous block" : ", brute force: NOT a contiguous block")};
    });

    std::vector<Trajectory> converged;  // for criterion 9

    criterion(6, "brake orbit at T = 24", 600.0, [&] {
        const BrakeReport r = run_brake(model, 24.0, {});
        const SolveResult& s = r.result;
        if (s.converged) converged.push_back(unfold(s.trajectory));
        const double rise = max_increase(s.energy_history);
        const SymmetryCheck sym = check_unfold_symmetry(s.trajectory, p, k);
        const double c_gap = std::abs(r.c_prime_T20 - r.c_prime_T200);
        const bool ok = s.converged && rise <= 1e-9 && model.solver.n_competitors == 100 && s.nash_gap <= 1e-5 &&
                        s.closeness.ok && sym.reflection_error == 0.0 && sym.time_error == 0.0 &&
                        s.total <= s.c_prime && c_gap <= 1e-10;
        return Outcome{ok, fmt("J_T = %.8g <= C' = %.6g, history rise %.3g", s.total, s.c_prime, rise) +
                               fmt(", nash gap %.3g (100 competitors)", s.nash_gap) +
                               (s.closeness.ok ? ", closeness ok" : ", closeness FAILED") +
                               fmt(", symmetry errors %.3g/%.3g, |C'(20) - C'(200)| = %.3g", sym.reflection_error,
                                   sym.time_error, c_gap)};
    });

    criterion(7, "surgery on synthetic excursions", 120.0, [&] {
        const double q = cfg.experiment.q;
        const double c_prime = brake_energy_bound(init_feasible_brake(24.0, p, k, rho, model.solver.n_t), p, k);
        const double delta = delta_estimate(q, cfg.experiment.delta_samples, cfg.seed, g, rho, p, k);
        const QPrimeSizing qs = size_q_prime(q, c_prime, delta, renormalized_growth_constant(p, k, rho),
                                             surgery_c_hat(p, rho, q));
        SolverConfig sc = model.solver;
        sc.q_prime = qs.q_prime;
        double worst = -std::numeric_limits<double>::infinity(), reach = 0.0;
        bool outside = true;
        for (double f : {1.05, 1.25, 1.5, 1.75, 2.0}) {
            const Excursion ex = synthetic_excursion(p, k, rho, f * q, 0.05, 1.0, 1.0);
            const SurgeryResult s = surgery(ex.trajectory, ex.t1, ex.t2, Side::plus, p, k, sc);
            worst = std::max(worst, s.delta_energy);
            const Trajectory& a = ex.trajectory;
            const int k1 = static_cast<int>(std::lround(ex.t1 / a.tau)), k2 = static_cast<int>(std::lround(ex.t2 / a.tau));
            const GridMeasure target = GridMeasure::ball(g, rho, s.ball_center);
            for (int j = 0; j <= a.n_t(); ++j) {
                if (j <= k1 || j >= k2) outside = outside && a.m[j].density() == s.trajectory.m[j].density();
                else reach = std::max(reach, d2(s.trajectory.m[j], target));
            }
        }
        const bool ok = qs.lhs < qs.rhs && worst < 0.0 && outside && reach <= qs.q_prime + 1e-12;
        return Outcome{ok, fmt("q' = %.3g (threshold %.3g < %.3g)", qs.q_prime, qs.lhs, qs.rhs) +
                               fmt(", max delta_energy = %.4g, max closeness inside = %.3g", worst, reach) +
                               (outside ? ", unchanged outside" : ", CHANGED outside the window")};
    });

    criterion(8, "heteroclinic limit over T = 24, 48, 96", 2700.0, [&] {
        const HeteroclinicReport r = run_heteroclinic(model, {});
        const auto& es = r.study.entries;
        bool all_ok = es.size() == 3;
        for (const auto& e : es) {
            all_ok = all_ok && e.ok && e.result.converged;
            if (e.ok && e.result.converged) converged.push_back(unfold(e.result.trajectory));
        }
        if (r.direct.converged) converged.push_back(r.direct.trajectory);
        if (!all_ok) return Outcome{false, "sweep did not converge for every T"};
        bool decreasing = true;
        double s_lo = std::numeric_limits<double>::infinity(), s_hi = 0.0;
        std::string eplus;
        for (std::size_t i = 0; i < es.size(); ++i) {
            if (i > 0) decreasing = decreasing && es[i].e_plus < es[i - 1].e_plus;
            s_lo = std::min(s_lo, es[i].result.closeness.s_plus);
            s_hi = std::max(s_hi, es[i].result.closeness.s_plus);
            eplus += fmt("%.6g ", es[i].e_plus);
        }
        const auto& last = es.back();
        const double rel = std::abs(last.J_T - 2.0 * last.half_action) / last.J_T;
        const double var = (s_hi - s_lo) / s_lo;
        const bool ok = decreasing && last.e_plus < 0.05 && rel <= 0.05 && var < 0.25 && r.direct.converged &&
                        r.direct_sup_distance <= 0.1;
        return Outcome{ok, "e+ = " + eplus + (decreasing ? "(strictly decreasing)" : "(NOT decreasing)") +
                               fmt(", half-action rel err %.3g, s variation %.3g", rel, var) +
                               fmt(", direct sup d2 = %.3g", r.direct_sup_distance)};
    });

    criterion(9, "AC estimate on converged trajectories", 60.0, [&] {
        if (converged.empty()) return Outcome{false, "no converged trajectory"};
        std::mt19937_64 local(cfg.seed + 9);
        double worst = -std::numeric_limits<double>::infinity();
        for (const Trajectory& t : converged) worst = std::max(worst, ac_excess(t, 50, local));
        return Outcome{worst <= 1e-8, fmt("max d2^2 - (t-s) kinetic = %.3g over %g trajectories x 50 intervals", worst,
                                          static_cast<double>(converged.size()))};
    });

    std::cout << (failures == 0 ? "all criteria passed\n" : fmt("%g criteria failed\n", failures));
    return failures == 0 ? 0 : 1;
}
