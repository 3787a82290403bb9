#include "wbrake/potential_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace wbrake {

PotentialSpec PotentialSpec::make(double a_plus, double r_tilde, double w_scale, const Grid1D& grid) {
    if (!(r_tilde > 0.0)) throw std::invalid_argument("r_tilde must be positive");
    if (!(a_plus > r_tilde)) throw std::invalid_argument("plateaus overlap: need a_plus > r_tilde");
    if (!(w_scale > 0.0)) throw std::invalid_argument("w_scale must be positive");
    if (a_plus + r_tilde >= grid.x_max) throw std::invalid_argument("plateau reaches the grid edge");
    PotentialSpec p;
    p.a_plus = a_plus;
    p.r_tilde = r_tilde;
    p.w_scale = w_scale;
    p.c_w = tightest_growth_constant(p, grid);
    return p;
}

double PotentialSpec::operator()(double x) const {
    const double dp = std::max(std::abs(x - a_plus) - r_tilde, 0.0);
    const double dm = std::max(std::abs(x + a_plus) - r_tilde, 0.0);
    const double d = std::min(dp, dm);
    return w_scale * d * d;
}

std::vector<double> PotentialSpec::on(const Grid1D& grid) const {
    std::vector<double> v(grid.n_cells);
    for (int i = 0; i < grid.n_cells; ++i) v[i] = (*this)(grid.center(i));
    return v;
}

double tightest_growth_constant(const PotentialSpec& p, const Grid1D& grid) {
    double c = 0.0;
    for (int i = 0; i < grid.n_cells; ++i) {
        const double x = grid.center(i), w = p(x);
        c = std::max(c, w / (x * x + 1.0));
        // x^2/C - C <= W  <=>  C^2 + W C - x^2 >= 0
        c = std::max(c, 0.5 * (-w + std::sqrt(w * w + 4.0 * x * x)));
    }
    return c;
}

bool satisfies_growth(const PotentialSpec& p, const Grid1D& grid, double c) {
    if (!(c > 0.0)) return false;
    const double tol = 1e-12;
    for (int i = 0; i < grid.n_cells; ++i) {
        const double x = grid.center(i), w = p(x);
        if (w > c * x * x + c + tol) return false;
        if (x * x / c - c > w + tol) return false;
    }
    return true;
}

namespace {

// G(d+h) - 2G(d) + G(d-h) for G(r) = |r|^(a+1)/(a(a+1)), divided by h^2.
double cell_pair_average(double d, double h, double alpha) {
    const double beta = alpha + 1.0;
    const double norm = alpha * beta;
    if (d == 0.0) return 2.0 * std::pow(h, alpha - 1.0) / norm;
    const double u = h / d;
    if (u > 0.25) {
        auto g = [&](double r) { return std::pow(std::abs(r), beta); };
        return (g(d + h) - 2.0 * g(d) + g(d - h)) / (norm * h * h);
    }
    // Even part of the binomial series avoids the cancellation at large d.
    double sum = 0.0, coef = 1.0, upow = 1.0;
    for (int k = 1; k <= 40; ++k) {
        coef *= (beta - (k - 1)) / k;
        upow *= u;
        if (k % 2 == 0) {
            const double term = 2.0 * coef * upow;
            sum += term;
            if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
    }
    return std::pow(d, beta) * sum / (norm * h * h);
}

double min_eigenvalue(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace

KernelSpec kernel_cell_matrix(const Grid1D& grid, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    const int n = grid.n_cells;
    std::vector<double> by_offset(n);
    for (int d = 0; d < n; ++d) by_offset[d] = cell_pair_average(d * grid.h, grid.h, alpha);
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = by_offset[std::abs(i - j)];
    KernelSpec k;
    k.alpha = alpha;
    k.grid = grid;
    k.cell_matrix = std::move(m);
    k.smallest_eigenvalue =
        n <= 512 ? min_eigenvalue(k.cell_matrix) : std::numeric_limits<double>::quiet_NaN();
    if (k.smallest_eigenvalue < -1e-10) throw std::invalid_argument("kernel matrix is not PSD");
    return k;
}

KernelSpec kernel_from_table(const Grid1D& grid, double alpha, Eigen::MatrixXd table) {
    const int n = grid.n_cells;
    if (table.rows() != n || table.cols() != n) throw std::invalid_argument("kernel table size");
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (table(i, j) != table(j, i)) throw std::invalid_argument("kernel table not symmetric");
            if (!(table(i, j) > 0.0)) throw std::invalid_argument("kernel table not positive");
        }
        for (int j = i + 1; j + 1 < n; ++j)
            if (table(i, j + 1) > table(i, j)) throw std::invalid_argument("kernel not decreasing");
    }
    KernelSpec k;
    k.alpha = alpha;
    k.grid = grid;
    k.cell_matrix = std::move(table);
    k.smallest_eigenvalue =
        n <= 512 ? min_eigenvalue(k.cell_matrix) : std::numeric_limits<double>::quiet_NaN();
    if (k.smallest_eigenvalue < -1e-10) throw std::invalid_argument("kernel matrix is not PSD");
    return k;
}

namespace {

constexpr char kCacheMagic[8] = {'W', 'B', 'K', 'C', '0', '0', '0', '1'};

std::uint64_t fnv1a(const double* data, std::size_t count) {
    std::uint64_t hash = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < count * sizeof(double); ++i) {
        hash ^= bytes[i];
        hash *= 1099511628211ULL;
    }
    return hash;
}

}  // namespace

void save_kernel_cache(const std::string& path, const KernelSpec& k) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write kernel cache " + path);
    const std::int64_t n = k.grid.n_cells;
    const std::uint64_t hash = fnv1a(k.cell_matrix.data(), k.cell_matrix.size());
    out.write(kCacheMagic, sizeof kCacheMagic);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&k.grid.h), sizeof k.grid.h);
    out.write(reinterpret_cast<const char*>(&k.alpha), sizeof k.alpha);
    out.write(reinterpret_cast<const char*>(&k.smallest_eigenvalue), sizeof(double));
    out.write(reinterpret_cast<const char*>(k.cell_matrix.data()),
              static_cast<std::streamsize>(k.cell_matrix.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(&hash), sizeof hash);
}

bool load_kernel_cache(const std::string& path, const Grid1D& grid, double alpha, KernelSpec& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char magic[8];
    std::int64_t n = 0;
    double h = 0.0, a = 0.0, ev = 0.0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&h), sizeof h);
    in.read(reinterpret_cast<char*>(&a), sizeof a);
    in.read(reinterpret_cast<char*>(&ev), sizeof ev);
    if (!in || !std::equal(magic, magic + 8, kCacheMagic)) return false;
    if (n != grid.n_cells || h != grid.h || a != alpha) return false;
    Eigen::MatrixXd m(n, n);
    std::uint64_t hash = 0;
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(&hash), sizeof hash);
    if (!in || hash != fnv1a(m.data(), m.size())) return false;
    out.alpha = alpha;
    out.grid = grid;
    out.cell_matrix = std::move(m);
    out.smallest_eigenvalue = ev;
    out.scale = 1.0;
    return true;
}

double ball_interaction(double alpha, double rho) {
    const double len = 1.0 / rho;
    return 2.0 * std::pow(len, alpha + 1.0) * rho * rho / (alpha * (alpha + 1.0));
}

std::vector<double> convolve(const GridMeasure& m, const KernelSpec& k) {
    const int n = m.size();
    Eigen::Map<const Eigen::VectorXd> d(m.density().data(), n);
    Eigen::VectorXd v = (k.scale * m.grid().h) * (k.cell_matrix * d);
    return std::vector<double>(v.data(), v.data() + n);
}

double interaction(const GridMeasure& m, const KernelSpec& k) {
    const int n = m.size();
    Eigen::Map<const Eigen::VectorXd> d(m.density().data(), n);
    const double h = m.grid().h;
    return k.scale * h * h * d.dot(k.cell_matrix * d);
}

double potential_energy(const GridMeasure& m, const PotentialSpec& p, const KernelSpec& k) {
    const Grid1D& g = m.grid();
    double s = 0.0;
    for (int i = 0; i < g.n_cells; ++i) s += p(g.center(i)) * m[i];
    return s * g.h - interaction(m, k);
}

double renormalized_energy(const GridMeasure& m, const PotentialSpec& p, const KernelSpec& k) {
    return potential_energy(m, p, k) + k.scale * ball_interaction(k.alpha, m.rho());
}

std::vector<double> linearized_cost(const GridMeasure& m_bar, const PotentialSpec& p,
                                    const KernelSpec& k) {
    std::vector<double> f = convolve(m_bar, k);
    const Grid1D& g = m_bar.grid();
    for (int i = 0; i < g.n_cells; ++i) f[i] = p(g.center(i)) - 2.0 * f[i];
    return f;
}

MinimizerSet MinimizerSet::make(const PotentialSpec& p, double alpha, double rho, Side side) {
    MinimizerSet s;
    s.side = side;
    s.rho = rho;
    s.r_rho = 0.5 / rho;
    if (s.r_rho > p.r_tilde) throw std::invalid_argument("ball radius exceeds the plateau radius");
    const double a = side == Side::plus ? p.a_plus : p.a_minus();
    s.c_lo = a - (p.r_tilde - s.r_rho);
    s.c_hi = a + (p.r_tilde - s.r_rho);
    s.i_ball = ball_interaction(alpha, rho);
    return s;
}

double q0(const PotentialSpec& p, double rho) { return p.a_plus - p.r_tilde + 0.5 / rho; }

SetDistance d2_to_minimizer_set(const GridMeasure& m, const MinimizerSet& set) {
    // The ball quantile is c - r + s/rho, so the optimal shift is the mean.
    const double c = std::clamp(mean(m), set.c_lo, set.c_hi);
    return {d2(QuantileTable::of(m), QuantileTable::ball(c, set.rho)), c};
}

double d2_to_wells(const GridMeasure& m, const PotentialSpec& p, double alpha) {
    const auto plus = MinimizerSet::make(p, alpha, m.rho(), Side::plus);
    const auto minus = MinimizerSet::make(p, alpha, m.rho(), Side::minus);
    return std::min(d2_to_minimizer_set(m, plus).distance, d2_to_minimizer_set(m, minus).distance);
}

double delta_estimate(double q, int n_samples, std::uint64_t seed, const Grid1D& grid, double rho,
                      const PotentialSpec& p, const KernelSpec& k) {
    if (!(q > 0.0)) throw std::invalid_argument("q must be positive");
    if (q >= q0(p, rho)) throw std::invalid_argument("q must be below q0");
    const double r = 0.5 / rho;
    const double edge = grid.x_max - r;
    auto w0 = [&](const GridMeasure& m) { return renormalized_energy(m, p, k); };
    auto dist = [&](const GridMeasure& m) { return d2_to_wells(m, p, k.alpha); };
    const double penalty = 1e3;
    auto merit = [&](const GridMeasure& m) {
        const double gap = std::max(0.0, q - dist(m));
        return w0(m) + penalty * gap * gap;
    };

    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_samples; ++i) {
        // One generator per sample keeps sample sets nested in n_samples.
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(i));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double side = unif(rng) < 0.5 ? 1.0 : -1.0;
        GridMeasure m;
        switch (i % 4) {
            case 0: {  // ball pushed just outside the admissible interval
                const double c_hi = p.a_plus + p.r_tilde - r;
                const double c = std::min(c_hi + q * (1.0 + unif(rng)), edge);
                m = GridMeasure::ball(grid, rho, side * c);
                break;
            }
            case 1: {  // ball pushed towards the origin
                const double c_lo = p.a_plus - p.r_tilde + r;
                const double c = std::max(c_lo - q * (1.0 + unif(rng)), -edge);
                m = GridMeasure::ball(grid, rho, side * c);
                break;
            }
            case 2: {  // mass split between the wells
                const double frac = 0.5 * unif(rng) + 0.05;
                std::vector<double> d(grid.n_cells, 0.0);
                const GridMeasure a = GridMeasure::ball(grid, rho, side * p.a_plus);
                const GridMeasure b = GridMeasure::ball(grid, rho, -side * p.a_plus);
                for (int j = 0; j < grid.n_cells; ++j) d[j] = (1 - frac) * a[j] + frac * b[j];
                m = GridMeasure(grid, std::move(d), rho);
                break;
            }
            default: {  // smooth random bump
                const double c = side * (p.a_plus + (unif(rng) - 0.5) * 2.0 * p.r_tilde);
                const double width = 0.1 + 0.6 * unif(rng);
                std::vector<double> d(grid.n_cells);
                for (int j = 0; j < grid.n_cells; ++j) {
                    const double z = (grid.center(j) - c) / width;
                    d[j] = rho * std::exp(-z * z);
                }
                m = GridMeasure::project(grid, d, rho);
                break;
            }
        }
        // Local improvement: slide along the geodesic towards the nearest
        // ball, then random perturbations, accepting merit decreases.
        double fm = merit(m);
        const auto plus = MinimizerSet::make(p, k.alpha, rho, Side::plus);
        const auto minus = MinimizerSet::make(p, k.alpha, rho, Side::minus);
        const auto dp = d2_to_minimizer_set(m, plus), dm = d2_to_minimizer_set(m, minus);
        const auto& target = dp.distance < dm.distance ? dp : dm;
        if (target.distance > q) {
            const GridMeasure ball = GridMeasure::ball(grid, rho, target.center);
            for (double s : {0.9, 0.8, 0.6, 0.4, 0.2}) {
                const double t = s * (1.0 - q / target.distance);
                GridMeasure cand = interpolate(m, ball, t);
                const double fc = merit(cand);
                if (fc < fm) {
                    m = std::move(cand);
                    fm = fc;
                    break;
                }
            }
        }
        std::normal_distribution<double> noise(0.0, 1.0);
        double step = 0.05 * rho;
        for (int it = 0; it < 20; ++it) {
            std::vector<double> d = m.density();
            const int centre = static_cast<int>(unif(rng) * grid.n_cells);
            const int span = 2 + static_cast<int>(unif(rng) * 8);
            for (int j = std::max(0, centre - span); j < std::min(grid.n_cells, centre + span); ++j)
                d[j] += step * noise(rng);
            GridMeasure cand = GridMeasure::project(grid, d, rho);
            const double fc = merit(cand);
            if (fc < fm) {
                m = std::move(cand);
                fm = fc;
            } else {
                step *= 0.8;
            }
        }
        if (dist(m) >= q) best = std::min(best, w0(m));
    }
    return best;
}

}  // namespace wbrake
