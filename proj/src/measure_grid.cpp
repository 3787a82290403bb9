#include "wbrake/measure_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "wbrake/trajectory.hpp"

namespace wbrake {

namespace {

constexpr double kMassTol = 1e-12;

void require_same_grid(const GridMeasure& a, const GridMeasure& b) {
    if (!(a.grid() == b.grid())) throw std::invalid_argument("measures live on different grids");
}

}  // namespace

Grid1D::Grid1D(double x_min_, double x_max_, int n)
    : x_min(x_min_), x_max(x_max_), n_cells(n), h((x_max_ - x_min_) / n) {
    if (n < 4) throw std::invalid_argument("grid needs at least 4 cells");
    if (!(x_max > 0.0) || x_min != -x_max) {
        throw std::invalid_argument("grid must be symmetric about 0 (x_min = -x_max < 0)");
    }
}

GridMeasure::GridMeasure(const Grid1D& grid, std::vector<double> density, double rho)
    : grid_(grid), density_(std::move(density)), rho_(rho) {
    if (static_cast<int>(density_.size()) != grid_.n_cells) {
        throw std::invalid_argument("density length does not match the grid");
    }
    if (!(rho > 0.0)) throw std::invalid_argument("density cap must be positive");
    for (double& d : density_) {
        if (!std::isfinite(d)) throw std::invalid_argument("non-finite density");
        if (d < 0.0) {
            if (d < -kMassTol) throw std::invalid_argument("negative density");
            d = 0.0;
        } else if (d > rho) {
            if (d > rho * (1.0 + kMassTol)) throw std::invalid_argument("density exceeds the cap");
            d = rho;
        }
    }
    if (std::abs(mass() - 1.0) > kMassTol) {
        std::ostringstream os;
        os << "mass " << mass() << " differs from 1";
        throw std::invalid_argument(os.str());
    }
}

GridMeasure GridMeasure::ball(const Grid1D& grid, double rho, double center) {
    const double r = 0.5 / rho;
    const double lo = center - r, hi = center + r;
    if (lo < grid.x_min || hi > grid.x_max) throw std::invalid_argument("ball leaves the grid");
    std::vector<double> d(grid.n_cells, 0.0);
    for (int i = 0; i < grid.n_cells; ++i) {
        const double overlap = std::min(hi, grid.edge(i + 1)) - std::max(lo, grid.edge(i));
        if (overlap > 0.0) d[i] = rho * overlap / grid.h;
    }
    return GridMeasure(grid, std::move(d), rho);
}

GridMeasure GridMeasure::project(const Grid1D& grid, const std::vector<double>& raw, double rho) {
    return GridMeasure(grid, capped_simplex_projection(raw, grid.h, rho), rho);
}

double GridMeasure::mass() const {
    double s = 0.0;
    for (double d : density_) s += d;
    return s * grid_.h;
}

std::vector<double> GridMeasure::cumulative() const {
    const int n = grid_.n_cells;
    std::vector<double> c(n + 1, 0.0);
    for (int i = 0; i < n; ++i) c[i + 1] = c[i] + density_[i] * grid_.h;
    c[n] = 1.0;
    return c;
}

std::vector<double> capped_simplex_projection(const std::vector<double>& v, double h, double rho,
                                              double mass) {
    const int n = static_cast<int>(v.size());
    if (n * h * rho < mass) throw std::invalid_argument("cap too small to hold the mass");
    auto mass_at = [&](double lambda) {
        double s = 0.0;
        for (double x : v) s += std::clamp(x - lambda, 0.0, rho);
        return s * h;
    };
    double lo = *std::min_element(v.begin(), v.end()) - rho;
    double hi = *std::max_element(v.begin(), v.end());
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (mass_at(mid) > mass ? lo : hi) = mid;
    }
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = std::clamp(v[i] - lo, 0.0, rho);
    // Spread the bisection leftover over the unsaturated cells.
    double excess = mass_at(lo) - mass;
    std::vector<int> free_cells;
    for (int i = 0; i < n; ++i)
        if (out[i] > 0.0 && out[i] < rho) free_cells.push_back(i);
    if (!free_cells.empty()) {
        const double shift = excess / (h * free_cells.size());
        for (int i : free_cells) out[i] = std::clamp(out[i] - shift, 0.0, rho);
    }
    return out;
}

QuantileTable QuantileTable::of(const GridMeasure& m) {
    QuantileTable q;
    const Grid1D& g = m.grid();
    const double total = m.mass();
    double s = 0.0;
    for (int i = 0; i < g.n_cells; ++i) {
        if (m[i] <= 0.0) continue;
        const double s1 = s + m[i] * g.h / total;
        q.segments.push_back({s, s1, g.edge(i), g.edge(i + 1)});
        s = s1;
    }
    q.segments.back().s1 = 1.0;
    return q;
}

QuantileTable QuantileTable::ball(double center, double rho) {
    const double r = 0.5 / rho;
    return QuantileTable{{{0.0, 1.0, center - r, center + r}}};
}

namespace {

double seg_value(const QuantileTable::Segment& g, double s) {
    const double w = g.s1 - g.s0;
    if (w <= 0.0) return g.x0;
    return g.x0 + (s - g.s0) / w * (g.x1 - g.x0);
}

// Walks the merged s-breakpoints of two quantile tables, calling
// f(s_a, s_b, a(s_a), a(s_b), b(s_a), b(s_b)) on every sub-interval.
template <class F>
void merged_walk(const QuantileTable& a, const QuantileTable& b, F&& f) {
    std::size_t i = 0, j = 0;
    double s = 0.0;
    while (i < a.segments.size() && j < b.segments.size()) {
        const auto& sa = a.segments[i];
        const auto& sb = b.segments[j];
        const double s_next = std::min(sa.s1, sb.s1);
        if (s_next > s) {
            f(s, s_next, seg_value(sa, s), seg_value(sa, s_next), seg_value(sb, s),
              seg_value(sb, s_next));
        }
        s = std::max(s, s_next);
        if (sa.s1 <= s_next) ++i;
        if (sb.s1 <= s_next) ++j;
    }
}

}  // namespace

double QuantileTable::operator()(double s) const {
    for (const auto& g : segments)
        if (s <= g.s1) return seg_value(g, s);
    return segments.back().x1;
}

double mean(const GridMeasure& m) {
    const Grid1D& g = m.grid();
    double s = 0.0;
    for (int i = 0; i < g.n_cells; ++i) s += g.center(i) * m[i];
    return s * g.h;
}

double moment2(const GridMeasure& m) {
    const Grid1D& g = m.grid();
    double s = 0.0;
    for (int i = 0; i < g.n_cells; ++i) s += g.center(i) * g.center(i) * m[i];
    return s * g.h;
}

double d2(const QuantileTable& a, const QuantileTable& b) {
    double acc = 0.0;
    merged_walk(a, b, [&](double s0, double s1, double a0, double a1, double b0, double b1) {
        const double d0 = a0 - b0, d1 = a1 - b1;
        acc += (s1 - s0) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
    });
    return std::sqrt(std::max(acc, 0.0));
}

double d2(const GridMeasure& mu, const GridMeasure& nu) {
    require_same_grid(mu, nu);
    return d2(QuantileTable::of(mu), QuantileTable::of(nu));
}

double dp(const GridMeasure& mu, const GridMeasure& nu, double p) {
    require_same_grid(mu, nu);
    if (!(p >= 1.0)) throw std::invalid_argument("dp needs p >= 1");
    // Integral of |linear|^p over an interval where it keeps one sign.
    auto one_sign = [p](double len, double a, double b) {
        a = std::abs(a);
        b = std::abs(b);
        if (std::abs(b - a) <= 1e-9 * std::max(a, b)) return len * std::pow(0.5 * (a + b), p);
        return len * (std::pow(b, p + 1) - std::pow(a, p + 1)) / ((p + 1) * (b - a));
    };
    double acc = 0.0;
    merged_walk(QuantileTable::of(mu), QuantileTable::of(nu),
                [&](double s0, double s1, double a0, double a1, double b0, double b1) {
                    const double d0 = a0 - b0, d1 = a1 - b1;
                    const double len = s1 - s0;
                    if (d0 * d1 < 0.0) {
                        const double frac = d0 / (d0 - d1);
                        acc += one_sign(frac * len, d0, 0.0) + one_sign((1 - frac) * len, 0.0, d1);
                    } else {
                        acc += one_sign(len, d0, d1);
                    }
                });
    return std::pow(std::max(acc, 0.0), 1.0 / p);
}

GridMeasure reflect(const GridMeasure& m) {
    std::vector<double> d(m.density().rbegin(), m.density().rend());
    return GridMeasure(m.grid(), std::move(d), m.rho());
}

namespace {

// Cumulative mass at the grid edges of the interpolant with quantile
// (1-s) Q_a + s Q_b.
std::vector<double> interpolated_cumulative(const QuantileTable& qa, const QuantileTable& qb,
                                            double s, const Grid1D& g) {
    struct Piece {
        double s0, s1, q0, q1;
    };
    std::vector<Piece> pieces;
    merged_walk(qa, qb, [&](double s0, double s1, double a0, double a1, double b0, double b1) {
        pieces.push_back({s0, s1, (1 - s) * a0 + s * b0, (1 - s) * a1 + s * b1});
    });
    const int n = g.n_cells;
    std::vector<double> c(n + 1, 0.0);
    std::size_t p = 0;
    for (int j = 1; j < n; ++j) {
        const double e = g.edge(j);
        while (p < pieces.size() && pieces[p].q1 <= e) ++p;
        if (p == pieces.size()) {
            c[j] = 1.0;
        } else if (e <= pieces[p].q0) {
            c[j] = pieces[p].s0;
        } else {
            const Piece& pc = pieces[p];
            c[j] = pc.s0 + (e - pc.q0) / (pc.q1 - pc.q0) * (pc.s1 - pc.s0);
        }
    }
    c[n] = 1.0;
    return c;
}

GridMeasure from_cumulative_nodes(const Grid1D& g, double rho, const std::vector<double>& c) {
    std::vector<double> d(g.n_cells);
    for (int i = 0; i < g.n_cells; ++i) d[i] = std::max(0.0, (c[i + 1] - c[i]) / g.h);
    return GridMeasure(g, std::move(d), rho);
}

}  // namespace

GridMeasure interpolate(const GridMeasure& m1, const GridMeasure& m2, double s) {
    require_same_grid(m1, m2);
    if (s <= 0.0) return m1;
    if (s >= 1.0) return m2;
    const auto c = interpolated_cumulative(QuantileTable::of(m1), QuantileTable::of(m2), s,
                                           m1.grid());
    return from_cumulative_nodes(m1.grid(), m1.rho(), c);
}

Trajectory geodesic(const GridMeasure& m1, const GridMeasure& m2, double t1, double t2,
                    int n_steps) {
    require_same_grid(m1, m2);
    if (!(t2 > t1)) throw std::invalid_argument("geodesic needs t2 > t1");
    if (n_steps < 1) throw std::invalid_argument("geodesic needs at least one step");
    const QuantileTable qa = QuantileTable::of(m1), qb = QuantileTable::of(m2);
    std::vector<GridMeasure> nodes;
    nodes.reserve(n_steps + 1);
    nodes.push_back(m1);
    for (int k = 1; k < n_steps; ++k) {
        const double s = static_cast<double>(k) / n_steps;
        nodes.push_back(
            from_cumulative_nodes(m1.grid(), m1.rho(), interpolated_cumulative(qa, qb, s, m1.grid())));
    }
    nodes.push_back(m2);
    return Trajectory::from_nodes(std::move(nodes), (t2 - t1) / n_steps, t1);
}

GridMeasure rearrange_decreasing(const GridMeasure& m) {
    const int n = m.size();
    std::vector<double> v = m.density();
    std::sort(v.begin(), v.end(), std::greater<>());
    std::vector<double> out(n, 0.0);
    // Fill outward from the middle, alternating left and right.
    int left = (n - 1) / 2, right = left + 1;
    bool take_left = true;
    for (double x : v) {
        if ((take_left && left >= 0) || right >= n) {
            out[left--] = x;
        } else {
            out[right++] = x;
        }
        take_left = !take_left;
    }
    return GridMeasure(m.grid(), std::move(out), m.rho());
}

void write_csv(std::ostream& out, const GridMeasure& m) {
    out << "x,density\n";
    char buf[64];
    for (int i = 0; i < m.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", m.grid().center(i), m[i]);
        out << buf;
    }
}

GridMeasure read_measure_csv(std::istream& in, const Grid1D& grid, double rho) {
    std::string line;
    if (!std::getline(in, line) || line != "x,density") {
        throw std::invalid_argument("expected header x,density");
    }
    std::vector<double> d;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("malformed csv row");
        d.push_back(std::stod(line.substr(comma + 1)));
    }
    return GridMeasure(grid, std::move(d), rho);
}

}  // namespace wbrake
