#include "wbrake/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>

#include "wbrake/error.hpp"
#include "wbrake/svg.hpp"
#include "wbrake/validation.hpp"

namespace wbrake {

using nlohmann::json;

Model build_model(const RunConfig& cfg) {
    Model m;
    m.config = cfg;
    try {
        m.grid = Grid1D(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n_cells);
        m.rho = cfg.grid.rho;
        m.potential = PotentialSpec::make(cfg.potential.a_plus, cfg.potential.r_tilde, cfg.potential.w_scale, m.grid);
        const bool cached = !cfg.kernel.cache.empty() &&
                            load_kernel_cache(cfg.kernel.cache, m.grid, cfg.kernel.alpha, m.kernel);
        if (!cached) {
            m.kernel = kernel_cell_matrix(m.grid, cfg.kernel.alpha);
            if (!cfg.kernel.cache.empty()) save_kernel_cache(cfg.kernel.cache, m.kernel);
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (m.kernel.smallest_eigenvalue < -1e-10) throw ConfigError("kernel matrix is not positive semidefinite");

    SolverConfig& s = m.solver;
    s.q = cfg.experiment.q;
    s.q_prime = cfg.solver.q_prime;
    s.outer_max_iter = cfg.solver.outer_max_iter;
    s.inner_max_iter = cfg.solver.inner_max_iter;
    s.tol_energy = cfg.solver.tol_energy;
    s.tol_fixed_point = cfg.solver.tol_fixed_point;
    s.seed = cfg.seed;
    s.n_t = cfg.solver.n_t;
    s.n_competitors = cfg.solver.n_competitors;
    s.central_start = cfg.solver.central_start;
    s.extrapolate = cfg.solver.extrapolate;
    try {
        s.validate(q0(m.potential, m.rho));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return m;
}

int threads_from_env() {
    const char* v = std::getenv("WBRAKE_THREADS");
    if (!v) return 1;
    const int n = std::atoi(v);
    return std::max(1, n);
}

void write_artifact(const std::string& dir, const std::string& name, const std::string& text) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + name + " in " + dir);
    out << text;
}

namespace {

std::string t_tag(double T) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", T);
    return buf;
}

// Config echo without the output location, so reruns elsewhere hash equal.
json config_echo(const Model& model) {
    json c = to_json(model.config);
    c["experiment"].erase("output_dir");
    return c;
}

json stamp(const char* command, const Model& model, json extra = json::object()) {
    json inputs = {{"command", command}, {"config", config_echo(model)}};
    for (auto& [k, v] : extra.items()) inputs[k] = v;
    return json{{"config", config_echo(model)}, {"input_hash", content_hash(inputs)}};
}

ProgressFn logger(std::ostream* log, std::string tag) {
    if (!log) return {};
    return [log, tag](int it, double J) {
        char buf[96];
        std::snprintf(buf, sizeof buf, " iter %4d  J = %.12g\n", it, J);
        *log << tag << buf << std::flush;
    };
}

std::string trajectory_csv(const Trajectory& t, bool flux) {
    std::ostringstream d, f;
    write_trajectory_csv(d, f, t);
    return flux ? f.str() : d.str();
}

std::vector<double> index_axis(std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
    return x;
}

json closeness_json(const Closeness& c, double q) {
    return {{"q", q}, {"s_plus", c.s_plus}, {"s_minus", c.s_minus}, {"ok", c.ok}};
}

json solve_json(const SolveResult& r) {
    return {{"total", r.total},
            {"kinetic", r.report.kinetic},
            {"potential", r.report.potential},
            {"energy_history", r.energy_history},
            {"nash_gap", r.nash_gap},
            {"fixed_point_change", r.fixed_point_change},
            {"outer_iterations", r.outer_iterations},
            {"newton_steps", r.newton_steps},
            {"converged", r.converged},
            {"continuity_residual", r.report.continuity_residual},
            {"max_cap_violation", r.report.max_cap_violation}};
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const GridTooSmall& e) {
        std::cerr << "grid too small: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const NonConvergence& e) {
        std::cerr << "solver did not converge: " << e.what() << '\n';
        return 3;
    } catch (const InvariantFailure& e) {
        std::cerr << "invariant failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}

int report_failures(const std::vector<std::string>& failures) {
    for (const auto& f : failures) std::cerr << "FAILED: " << f << '\n';
    return failures.empty() ? 0 : 4;
}

bool inside_plateau(double lo, double hi, const PotentialSpec& p) {
    const double tol = 1e-12;
    auto in = [&](double a) { return lo >= a - p.r_tilde - tol && hi <= a + p.r_tilde + tol; };
    return in(p.a_plus) || in(p.a_minus());
}

}  // namespace

// ---- stationary ----------------------------------------------------------

BruteForceStationary brute_force_stationary(const PotentialSpec& p, double alpha, double rho) {
    BruteForceStationary b;
    constexpr int kCells = 12, kLevels = 4;
    const double half = p.a_plus + p.r_tilde;
    const Grid1D g(-half, half, kCells);
    const double units = kLevels / (g.h * rho);
    const int total = static_cast<int>(std::lround(units));
    if (std::abs(units - total) > 1e-9 || total > kCells * kLevels) {
        b.skipped_reason = "unit mass is not representable with 5 density levels on the 12-cell grid";
        return b;
    }
    const KernelSpec k = kernel_cell_matrix(g, alpha);
    const std::vector<double> w = p.on(g);
    const double step = rho / kLevels;

    std::vector<int> level(kCells, 0);
    std::vector<std::vector<int>> best;
    double best_value = std::numeric_limits<double>::infinity();
    auto energy = [&]() {
        double s = 0.0;
        for (int i = 0; i < kCells; ++i) {
            if (!level[i]) continue;
            const double di = level[i] * step;
            s += w[i] * di * g.h;
            for (int j = 0; j < kCells; ++j) {
                if (level[j]) s -= di * level[j] * step * k.cell_matrix(i, j) * g.h * g.h;
            }
        }
        return s;
    };
    std::function<void(int, int)> place = [&](int cell, int left) {
        if (cell == kCells - 1) {
            if (left > kLevels) return;
            level[cell] = left;
            ++b.enumerated;
            const double v = energy();
            if (v < best_value - 1e-10) {
                best_value = v;
                best.clear();
            }
            if (v <= best_value + 1e-10) best.push_back(level);
            return;
        }
        for (int l = 0; l <= std::min(kLevels, left); ++l) {
            level[cell] = l;
            place(cell + 1, left - l);
        }
        level[cell] = 0;
    };
    place(0, total);

    b.ran = true;
    b.w_min = best_value;
    b.n_minimizers = static_cast<int>(best.size());
    b.contiguous_block = !best.empty();
    for (const auto& v : best) {
        int first = -1, last = -1;
        for (int i = 0; i < kCells; ++i) {
            if (v[i]) {
                if (first < 0) first = i;
                last = i;
            }
        }
        bool ok = first >= 0;
        for (int i = first; ok && i <= last; ++i) ok = v[i] == kLevels;
        ok = ok && inside_plateau(g.edge(first), g.edge(last + 1), p);
        b.contiguous_block = b.contiguous_block && ok;
    }
    if (!best.empty()) {
        for (int l : best.front()) b.best.push_back(l * step);
    }
    return b;
}

StationaryReport run_stationary(const Model& model, const RunOptions& opt) {
    StationaryReport r;
    const Grid1D& g = model.grid;
    const double rho = model.rho;
    r.ass3_ok = 0.5 / rho <= model.potential.r_tilde;
    if (!r.ass3_ok) r.warnings.push_back("ass3 violated; ball classification not guaranteed");
    if (opt.log) {
        for (const auto& w : r.warnings) *opt.log << "warning: " << w << '\n';
    }

    r.result = minimize_stationary(g, rho, model.potential, model.kernel, Side::plus,
                                   model.config.solver.outer_max_iter);
    r.w0_min = r.result.w0;
    int conforming = 0;
    for (int i = 0; i < g.n_cells; ++i) {
        const double d = r.result.minimizer[i];
        if (d <= g.h || std::abs(d - rho) <= g.h) ++conforming;
    }
    r.is_characteristic = static_cast<double>(conforming) / g.n_cells;

    const StationaryResult mirror =
        minimize_stationary(g, rho, model.potential, model.kernel, Side::minus, model.config.solver.outer_max_iter);
    const GridMeasure back = reflect(mirror.minimizer);
    double diff = 0.0;
    for (int i = 0; i < g.n_cells; ++i) diff = std::max(diff, std::abs(back[i] - r.result.minimizer[i]));
    r.reflection_consistent = diff <= 1e-12;
    if (!r.reflection_consistent) r.failures.push_back("minus-side run is not the reflected plus-side run");

    if (r.ass3_ok) {
        const auto set = MinimizerSet::make(model.potential, model.kernel.alpha, rho, Side::plus);
        const auto sd = d2_to_minimizer_set(r.result.minimizer, set);
        r.d2_to_ball = sd.distance;
        r.ball_center = sd.center;
        if (!(r.w0_min <= 1e-4)) r.failures.push_back("W0_min above 1e-4");
        if (!(r.d2_to_ball <= 2.0 * g.h)) r.failures.push_back("minimizer farther than 2h from the ball family");
        if (!(r.is_characteristic >= 0.98)) r.failures.push_back("minimizer is not a characteristic function");
    } else {
        r.d2_to_ball = std::numeric_limits<double>::quiet_NaN();
        r.ball_center = std::numeric_limits<double>::quiet_NaN();
    }

    r.brute = brute_force_stationary(model.potential, model.kernel.alpha, rho);
    if (r.brute.ran && r.ass3_ok && !r.brute.contiguous_block) {
        r.failures.push_back("brute-force minimizer is not a saturated block inside a plateau");
    }
    return r;
}

json to_json(const StationaryReport& r, const Model& model) {
    json j = stamp("stationary", model);
    j["W0_min"] = r.w0_min;
    j["d2_to_ball"] = r.d2_to_ball;
    j["ball_center"] = r.ball_center;
    j["is_characteristic"] = r.is_characteristic;
    j["ass3_ok"] = r.ass3_ok;
    j["warnings"] = r.warnings;
    j["history"] = r.result.history;
    j["iterations"] = r.result.iterations;
    j["reflection_consistent"] = r.reflection_consistent;
    j["brute_force"] = {{"ran", r.brute.ran},
                        {"skipped_reason", r.brute.skipped_reason},
                        {"enumerated", r.brute.enumerated},
                        {"n_minimizers", r.brute.n_minimizers},
                        {"W_min", r.brute.w_min},
                        {"contiguous_block", r.brute.contiguous_block},
                        {"best_density", r.brute.best}};
    j["failures"] = r.failures;
    return j;
}

// ---- brake ---------------------------------------------------------------

double max_increase(const std::vector<double>& history) {
    double worst = 0.0;
    for (std::size_t i = 1; i < history.size(); ++i) worst = std::max(worst, history[i] - history[i - 1]);
    return worst;
}

SymmetryCheck check_unfold_symmetry(const Trajectory& quarter, const PotentialSpec& p, const KernelSpec& k) {
    const Trajectory full = unfold(quarter);
    const int N = quarter.n_t();
    SymmetryCheck s;
    for (int j = -2 * N; j <= 2 * N; ++j) {
        const GridMeasure r = reflect(full.m[2 * N + j]);
        const GridMeasure& mirror = full.m[2 * N - j];
        for (int i = 0; i < r.size(); ++i) s.reflection_error = std::max(s.reflection_error, std::abs(r[i] - mirror[i]));
    }
    for (int j = 0; j <= N; ++j) {
        const GridMeasure& a = full.m[3 * N + j];
        const GridMeasure& b = full.m[3 * N - j];
        for (int i = 0; i < a.size(); ++i) s.time_error = std::max(s.time_error, std::abs(a[i] - b[i]));
    }
    s.energy_ratio_error = std::abs(action_energy(full, p, k).total - 4.0 * action_energy(quarter, p, k).total);
    return s;
}

BrakeReport run_brake(const Model& model, double T, const RunOptions& opt) {
    BrakeReport r;
    r.T = T;
    const auto& p = model.potential;
    const auto& k = model.kernel;
    r.result = solve_brake(T, p, k, model.rho, model.solver, logger(opt.log, "[brake T=" + t_tag(T) + "]"));
    r.max_history_increase = max_increase(r.result.energy_history);
    r.c_prime_T20 = brake_energy_bound(init_feasible_brake(20.0, p, k, model.rho, model.solver.n_t), p, k);
    r.c_prime_T200 = brake_energy_bound(init_feasible_brake(200.0, p, k, model.rho, model.solver.n_t), p, k);
    r.symmetry = check_unfold_symmetry(r.result.trajectory, p, k);

    // Surgery scan on the plus-side window [T/8, 3T/8] of the unfolded orbit.
    SurgeryScan& sc = r.surgery;
    sc.t1 = T / 8.0;
    sc.t2 = 3.0 * T / 8.0;
    sc.tolerance = model.solver.tol_energy * (1.0 + std::abs(r.result.total));
    {
        const Trajectory full = unfold(r.result.trajectory);
        const auto set = MinimizerSet::make(p, k.alpha, model.rho, Side::plus);
        const int k1 = static_cast<int>(std::lround((sc.t1 - full.t0) / full.tau));
        const int k2 = static_cast<int>(std::lround((sc.t2 - full.t0) / full.tau));
        const auto e1 = d2_to_minimizer_set(full.m[k1], set);
        const GridMeasure ball = GridMeasure::ball(full.grid, model.rho, e1.center);
        const double entry = std::max(d2(full.m[k1], ball), d2(full.m[k2], ball));
        SolverConfig cfg = model.solver;
        cfg.q_prime = entry * (1.0 + 1e-6) + 1e-12;
        sc.q_prime = cfg.q_prime;
        if (cfg.q_prime < cfg.q) {
            const SurgeryResult s = surgery(full, sc.t1, sc.t2, Side::plus, p, k, cfg);
            sc.attempted = true;
            sc.delta_energy = s.delta_energy;
        } else {
            sc.note = "orbit is not within q of the plus set at the window ends";
        }
    }

    const SolveResult& s = r.result;
    if (!s.converged) r.failures.push_back("outer loop did not converge");
    if (r.max_history_increase > kMonotoneTol) r.failures.push_back("energy history increases");
    if (!(s.nash_gap <= model.solver.tol_fixed_point)) r.failures.push_back("Nash gap above tol_fixed_point");
    if (!s.closeness.ok) r.failures.push_back("closeness profile not ok");
    if (!(s.total <= s.c_prime)) r.failures.push_back("J_T exceeds the initializer bound C'");
    if (std::abs(r.c_prime_T20 - r.c_prime_T200) > 1e-10) r.failures.push_back("C' depends on T");
    if (r.symmetry.reflection_error != 0.0 || r.symmetry.time_error != 0.0) {
        r.failures.push_back("unfolded orbit is not exactly symmetric");
    }
    if (r.symmetry.energy_ratio_error > 1e-12 * (1.0 + std::abs(s.total))) {
        r.failures.push_back("J_T(unfold) differs from 4 x quarter action");
    }
    if (!(s.report.continuity_residual <= 1e-9)) r.failures.push_back("continuity residual not at machine precision");
    if (sc.attempted && sc.delta_energy < -sc.tolerance) r.failures.push_back("surgery strictly improves the orbit");
    return r;
}

json to_json(const BrakeReport& r, const Model& model) {
    json j = stamp("brake", model, {{"T", r.T}});
    const SolveResult& s = r.result;
    j["T"] = r.T;
    j["J_T"] = s.total;
    j["solve"] = solve_json(s);
    j["nash_gap"] = s.nash_gap;
    j["n_competitors"] = model.config.solver.n_competitors;
    j["closeness"] = closeness_json(s.closeness, model.solver.q);
    j["c_prime"] = s.c_prime;
    j["c_prime_T20"] = r.c_prime_T20;
    j["c_prime_T200"] = r.c_prime_T200;
    j["max_history_increase"] = r.max_history_increase;
    j["symmetry"] = {{"reflection_error", r.symmetry.reflection_error},
                     {"time_error", r.symmetry.time_error},
                     {"energy_ratio_error", r.symmetry.energy_ratio_error}};
    j["surgery_scan"] = {{"attempted", r.surgery.attempted},
                         {"note", r.surgery.note},
                         {"t1", r.surgery.t1},
                         {"t2", r.surgery.t2},
                         {"q_prime", r.surgery.q_prime},
                         {"delta_energy", r.surgery.delta_energy},
                         {"tolerance", r.surgery.tolerance}};
    j["failures"] = r.failures;
    return j;
}

// ---- heteroclinic --------------------------------------------------------

HeteroclinicReport run_heteroclinic(const Model& model, const RunOptions& opt) {
    HeteroclinicReport r;
    const auto& p = model.potential;
    const auto& k = model.kernel;
    const auto& e = model.config.experiment;
    r.study = heteroclinic_study(e.T_list, p, k, model.rho, model.solver, e.window, opt.threads,
                                 logger(opt.log, "[sweep]"));
    const auto& entries = r.study.entries;
    bool all_ok = true;
    for (const auto& s : entries) {
        if (!s.ok) {
            all_ok = false;
            r.failures.push_back("T=" + t_tag(s.T) + " failed: " + s.error);
        }
    }
    r.e_plus_decreasing = all_ok;
    for (std::size_t i = 1; all_ok && i < entries.size(); ++i) {
        if (!(entries[i].e_plus < entries[i - 1].e_plus) || !(entries[i].e_minus < entries[i - 1].e_minus)) {
            r.e_plus_decreasing = false;
        }
    }
    if (!r.e_plus_decreasing) r.failures.push_back("e+(T) / e-(T) do not decrease across the sweep");
    if (!all_ok) return r;

    const StudyEntry& last = entries.back();
    r.half_action_rel_error = std::abs(last.J_T - 2.0 * last.half_action) / std::abs(last.J_T);
    double s_min = std::numeric_limits<double>::infinity(), s_max = 0.0;
    for (const auto& s : entries) {
        s_min = std::min(s_min, s.result.closeness.s_plus);
        s_max = std::max(s_max, s.result.closeness.s_plus);
    }
    r.s_variation = s_min > 0.0 ? (s_max - s_min) / s_min : std::numeric_limits<double>::infinity();

    const Trajectory half = half_orbit(last.result.trajectory);
    try {
        const EndLabels l = check_bounded_energy_asymptotics(half, p, k.alpha);
        r.labels = std::string(to_string(l.start)) + "," + to_string(l.end);
        r.labels_ok = l.start == Side::minus && l.end == Side::plus;
    } catch (const InvariantFailure& ex) {
        r.labels = ex.what();
    }
    if (!r.labels_ok) r.failures.push_back("half orbit does not connect minus to plus: " + r.labels);

    r.direct = solve_heteroclinic_direct(e.direct_L, e.direct_n_t, e.direct_penalty, p, k, model.rho, model.solver,
                                         logger(opt.log, "[direct]"));
    const double span = std::min({e.window, e.direct_L, last.T / 4.0});
    const double dt = std::min(half.tau, r.direct.trajectory.tau);
    // Both objects are reflection symmetric about t = 0, so [0, span] covers [-span, span].
    const int steps = static_cast<int>(std::floor(span / dt + 1e-9));
    for (int s = 0; s <= steps; ++s) {
        const double t = s * dt;
        r.direct_sup_distance = std::max(r.direct_sup_distance, d2(sample(half, t), sample(r.direct.trajectory, t)));
    }
    return r;
}

json to_json(const HeteroclinicReport& r, const Model& model) {
    json j = stamp("heteroclinic", model);
    json rows = json::array();
    for (const auto& s : r.study.entries) {
        json row = {{"T", s.T}, {"ok", s.ok}, {"error", s.error}};
        if (s.ok) {
            row["e_plus"] = s.e_plus;
            row["e_minus"] = s.e_minus;
            row["J_T"] = s.J_T;
            row["half_action"] = s.half_action;
            row["closeness"] = closeness_json(s.result.closeness, model.solver.q);
            row["nash_gap"] = s.result.nash_gap;
            row["solve"] = solve_json(s.result);
        }
        rows.push_back(row);
    }
    j["sweep"] = rows;
    j["window"] = r.study.window;
    j["window_distance"] = r.study.window_distance;
    j["e_plus_decreasing"] = r.e_plus_decreasing;
    j["half_action_rel_error"] = r.half_action_rel_error;
    j["s_variation"] = r.s_variation;
    j["labels"] = r.labels;
    j["labels_ok"] = r.labels_ok;
    j["direct"] = {{"L", model.config.experiment.direct_L},
                   {"n_t", model.config.experiment.direct_n_t},
                   {"penalty", model.config.experiment.direct_penalty},
                   {"solve", solve_json(r.direct)},
                   {"sup_window_distance", r.direct_sup_distance}};
    j["failures"] = r.failures;
    return j;
}

// ---- commands ------------------------------------------------------------

int cmd_stationary(const RunConfig& cfg, const RunOptions& opt) {
    return guarded([&] {
        const Model model = build_model(cfg);
        const StationaryReport r = run_stationary(model, opt);
        std::ostringstream csv;
        write_csv(csv, r.result.minimizer);
        write_artifact(opt.out_dir, "stationary_minimizer.csv", csv.str());
        write_artifact(opt.out_dir, "stationary_report.json", to_json(r, model).dump(2) + "\n");
        if (cfg.experiment.svg) {
            std::vector<double> x;
            for (int i = 0; i < model.grid.n_cells; ++i) x.push_back(model.grid.center(i));
            write_artifact(opt.out_dir, "stationary_minimizer.svg",
                           svg_line_chart("Stationary minimizer", {{"density", x, r.result.minimizer.density()}}, "x",
                                          "density"));
        }
        if (opt.log) {
            *opt.log << "W0_min = " << r.w0_min << "  d2_to_ball = " << r.d2_to_ball
                     << "  is_characteristic = " << r.is_characteristic << '\n';
        }
        return report_failures(r.failures);
    });
}

int cmd_brake(const RunConfig& cfg, const RunOptions& opt) {
    return guarded([&] {
        const Model model = build_model(cfg);
        const double T = cfg.experiment.T;
        const BrakeReport r = run_brake(model, T, opt);
        const std::string tag = "brake_T" + t_tag(T);
        const Trajectory full = unfold(r.result.trajectory);
        write_artifact(opt.out_dir, tag + ".csv", trajectory_csv(full, false));
        write_artifact(opt.out_dir, tag + "_flux.csv", trajectory_csv(full, true));
        write_artifact(opt.out_dir, tag + "_report.json", to_json(r, model).dump(2) + "\n");
        if (cfg.experiment.svg) {
            const auto& h = r.result.energy_history;
            write_artifact(opt.out_dir, tag + "_energy.svg",
                           svg_line_chart("MM energy history, T=" + t_tag(T), {{"J_T", index_axis(h.size()), h}},
                                          "outer iteration", "J_T"));
            write_artifact(opt.out_dir, tag + "_density.svg",
                           svg_heatmap("Brake orbit density, T=" + t_tag(T), full));
        }
        if (opt.log) {
            *opt.log << "J_T = " << r.result.total << "  nash_gap = " << r.result.nash_gap
                     << "  closeness ok = " << r.result.closeness.ok << '\n';
        }
        if (!r.result.converged) {
            report_failures(r.failures);
            return 3;
        }
        return report_failures(r.failures);
    });
}

int cmd_heteroclinic(const RunConfig& cfg, const RunOptions& opt) {
    return guarded([&] {
        const Model model = build_model(cfg);
        const HeteroclinicReport r = run_heteroclinic(model, opt);
        write_artifact(opt.out_dir, "heteroclinic_study.json", to_json(r, model).dump(2) + "\n");
        for (const auto& s : r.study.entries) {
            if (!s.ok) continue;
            const Trajectory half = half_orbit(s.result.trajectory);
            write_artifact(opt.out_dir, "heteroclinic_T" + t_tag(s.T) + "_half.csv", trajectory_csv(half, false));
        }
        if (!r.direct.trajectory.m.empty()) {
            write_artifact(opt.out_dir, "heteroclinic_direct.csv", trajectory_csv(r.direct.trajectory, false));
            write_artifact(opt.out_dir, "heteroclinic_direct_flux.csv", trajectory_csv(r.direct.trajectory, true));
        }
        if (cfg.experiment.svg) {
            Series ep{"e+(T)", {}, {}}, em{"e-(T)", {}, {}};
            std::vector<Series> hist;
            for (const auto& s : r.study.entries) {
                if (!s.ok) continue;
                ep.x.push_back(s.T);
                ep.y.push_back(s.e_plus);
                em.x.push_back(s.T);
                em.y.push_back(s.e_minus);
                const auto& h = s.result.energy_history;
                hist.push_back({"T=" + t_tag(s.T), index_axis(h.size()), h});
            }
            write_artifact(opt.out_dir, "heteroclinic_e_plus.svg",
                           svg_line_chart("Distance of m(T/4) to the plus set", {ep, em}, "T", "d2", true));
            write_artifact(opt.out_dir, "heteroclinic_energy.svg",
                           svg_line_chart("MM energy histories", hist, "outer iteration", "J_T"));
        }
        if (opt.log) {
            for (const auto& s : r.study.entries) {
                *opt.log << "T = " << s.T << "  e+ = " << s.e_plus << "  J_T = " << s.J_T << '\n';
            }
            *opt.log << "direct cross-check sup d2 = " << r.direct_sup_distance << '\n';
        }
        return report_failures(r.failures);
    });
}

int cmd_validate(const RunConfig& cfg, const RunOptions& opt) {
    return guarded([&] {
        const Model model = build_model(cfg);
        ValidationOptions v;
        v.oracle = opt.oracle;
        v.threads = opt.threads;
        v.log = opt.log;
        const auto results = run_validation(model, v);
        std::cout << format_table(results);
        json rows = json::array();
        std::vector<std::string> failing;
        for (const auto& c : results) {
            rows.push_back({{"id", c.id}, {"passed", c.passed}, {"detail", c.detail}});
            if (!c.passed) failing.push_back(c.id);
        }
        json j = stamp("validate", model, {{"oracle", opt.oracle}});
        j["checks"] = rows;
        j["failing"] = failing;
        write_artifact(opt.out_dir, "validation_report.json", j.dump(2) + "\n");
        return report_failures(failing);
    });
}

}  // namespace wbrake
