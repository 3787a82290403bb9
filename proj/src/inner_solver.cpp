#include "wbrake/inner_solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "wbrake/error.hpp"

namespace wbrake {

namespace {

// M at full index (k, j) = offset + sign * x[var]; var < 0 means constant.
struct Ref {
    int var = -1;
    double sign = 0.0;
    double offset = 0.0;
};

class Layout {
public:
    explicit Layout(const InnerProblem& p) : n_(p.n), nt_(p.n_t), refs_((p.n_t + 1) * (p.n + 1)) {
        if (p.start == InnerProblem::Start::symmetric && p.n % 2 != 0) {
            throw std::invalid_argument("symmetric start needs an even number of cells");
        }
        for (int k = 0; k <= nt_; ++k) {
            at(k, 0) = {-1, 0.0, 0.0};
            at(k, n_) = {-1, 0.0, 1.0};
        }
        int v = 0;
        switch (p.start) {
            case InnerProblem::Start::free:
                for (int j = 1; j < n_; ++j) at(0, j) = {v++, 1.0, 0.0};
                break;
            case InnerProblem::Start::fixed:
                for (int j = 1; j < n_; ++j) at(0, j) = {-1, 0.0, p.start_cumulative.at(j)};
                break;
            case InnerProblem::Start::symmetric: {
                const int half = n_ / 2;
                for (int j = 1; j < half; ++j) {
                    at(0, j) = {v, 1.0, 0.0};
                    at(0, n_ - j) = {v, -1.0, 1.0};
                    ++v;
                }
                at(0, half) = {-1, 0.0, 0.5};
                break;
            }
        }
        for (int k = 1; k <= nt_; ++k)
            for (int j = 1; j < n_; ++j) at(k, j) = {v++, 1.0, 0.0};
        n_vars_ = v;
    }

    int n_vars() const { return n_vars_; }
    int index(int k, int j) const { return k * (n_ + 1) + j; }
    const Ref& ref(int idx) const { return refs_[idx]; }
    Ref& at(int k, int j) { return refs_[index(k, j)]; }

    void expand(const Eigen::VectorXd& x, std::vector<double>& full) const {
        full.resize(refs_.size());
        for (std::size_t a = 0; a < refs_.size(); ++a) {
            const Ref& r = refs_[a];
            full[a] = r.var < 0 ? r.offset : r.offset + r.sign * x[r.var];
        }
    }

    // Reads free variables from a full table (first reference wins).
    Eigen::VectorXd restrict_(const std::vector<std::vector<double>>& cum) const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_vars_);
        std::vector<bool> seen(n_vars_, false);
        for (int k = 0; k <= nt_; ++k) {
            for (int j = 0; j <= n_; ++j) {
                const Ref& r = refs_[index(k, j)];
                if (r.var < 0 || seen[r.var]) continue;
                x[r.var] = (cum[k][j] - r.offset) / r.sign;
                seen[r.var] = true;
            }
        }
        return x;
    }

private:
    int n_, nt_;
    std::vector<Ref> refs_;
    int n_vars_ = 0;
};

constexpr int kKin = 6;

class BarrierObjective {
public:
    BarrierObjective(const InnerProblem& p, const Layout& lay) : p_(p), lay_(lay) {
        build_pattern();
    }

    // phi = objective + mu * barrier; +inf outside the open box.
    double value(const Eigen::VectorXd& x, double mu) const {
        lay_.expand(x, full_);
        double obj = 0.0;
        const int n = p_.n;
        for (int k = 0; k <= p_.n_t; ++k) {
            const double beta = p_.weight[k] * p_.tau * p_.h;
            for (int i = 0; i < n; ++i) {
                const double m = density(k, i);
                if (!(m > 0.0 && m < p_.rho)) return std::numeric_limits<double>::infinity();
                obj += beta * (p_.cost[k][i] * m - mu * (std::log(m) + std::log(p_.rho - m)));
            }
        }
        return obj + kinetic();
    }

    // Objective without barrier, from the current expansion.
    double plain(const Eigen::VectorXd& x) const {
        lay_.expand(x, full_);
        double obj = 0.0;
        for (int k = 0; k <= p_.n_t; ++k) {
            const double beta = p_.weight[k] * p_.tau * p_.h;
            for (int i = 0; i < p_.n; ++i) obj += beta * p_.cost[k][i] * density(k, i);
        }
        return obj + kinetic();
    }

    void assemble(const Eigen::VectorXd& x, double mu, Eigen::VectorXd& g) {
        lay_.expand(x, full_);
        g.setZero(lay_.n_vars());
        std::fill(hess_.valuePtr(), hess_.valuePtr() + hess_.nonZeros(), 0.0);
        double* hv = hess_.valuePtr();
        const int n = p_.n;
        const double h = p_.h;

        // Linear cost and barrier, per cell: depends on M_{i+1} - M_i.
        std::size_t slot = 0;
        for (int k = 0; k <= p_.n_t; ++k) {
            const double beta = p_.weight[k] * p_.tau * h;
            for (int i = 0; i < n; ++i, ++slot) {
                const double m = density(k, i);
                const double gm = beta * (p_.cost[k][i] - mu * (1.0 / m - 1.0 / (p_.rho - m)));
                const double hm = beta * mu * (1.0 / (m * m) + 1.0 / ((p_.rho - m) * (p_.rho - m)));
                const int a[2] = {lay_.index(k, i + 1), lay_.index(k, i)};
                const double da[2] = {1.0 / h, -1.0 / h};
                for (int s = 0; s < 2; ++s) {
                    const Ref& r = lay_.ref(a[s]);
                    if (r.var >= 0) g[r.var] += r.sign * gm * da[s];
                }
                const auto& pos = cell_pos_[slot];
                for (int s = 0; s < 2; ++s)
                    for (int t = 0; t < 2; ++t)
                        if (pos[s * 2 + t] >= 0) {
                            hv[pos[s * 2 + t]] += lay_.ref(a[s]).sign * lay_.ref(a[t]).sign * hm *
                                                  da[s] * da[t];
                        }
            }
        }

        // Kinetic: (h/tau) u^2 / v with u = dM in time, v = four-cell mean.
        const double scale = h / p_.tau;
        slot = 0;
        for (int k = 0; k < p_.n_t; ++k) {
            for (int j = 1; j < n; ++j, ++slot) {
                const auto& idx = kin_idx_[slot];
                const double u = full_[idx[4]] - full_[idx[1]];
                const double v = (full_[idx[2]] - full_[idx[0]] + full_[idx[5]] - full_[idx[3]]) /
                                 (4.0 * h);
                const double r = u / v;
                std::array<double, kKin> du{0, -1, 0, 0, 1, 0};
                std::array<double, kKin> dv{-1, 0, 1, -1, 0, 1};
                std::array<double, kKin> c{};
                for (int s = 0; s < kKin; ++s) {
                    dv[s] /= 4.0 * h;
                    c[s] = du[s] - r * dv[s];
                    const Ref& ref = lay_.ref(idx[s]);
                    if (ref.var >= 0) g[ref.var] += ref.sign * scale * (2.0 * r * du[s] - r * r * dv[s]);
                }
                const double coef = 2.0 * scale / v;
                const auto& pos = kin_pos_[slot];
                for (int s = 0; s < kKin; ++s)
                    for (int t = 0; t < kKin; ++t)
                        if (pos[s * kKin + t] >= 0) {
                            hv[pos[s * kKin + t]] += lay_.ref(idx[s]).sign * lay_.ref(idx[t]).sign *
                                                     coef * c[s] * c[t];
                        }
            }
        }
    }

    const Eigen::SparseMatrix<double>& hessian() const { return hess_; }

    // Largest step in (0, 1] keeping every density inside (0, rho), times 0.99.
    double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& dx) const {
        std::vector<double> m0, dm;
        lay_.expand(x, full_);
        std::vector<double> base = full_;
        Eigen::VectorXd shifted = x + dx;
        lay_.expand(shifted, full_);
        double alpha = 1.0;
        for (int k = 0; k <= p_.n_t; ++k) {
            for (int i = 0; i < p_.n; ++i) {
                const int a = lay_.index(k, i + 1), b = lay_.index(k, i);
                const double m = (base[a] - base[b]) / p_.h;
                const double d = ((full_[a] - full_[b]) - (base[a] - base[b])) / p_.h;
                if (d < 0.0) alpha = std::min(alpha, 0.99 * (-m / d));
                if (d > 0.0) alpha = std::min(alpha, 0.99 * ((p_.rho - m) / d));
            }
        }
        return alpha;
    }

    double barrier_mass() const {
        double s = 0.0;
        for (int k = 0; k <= p_.n_t; ++k) s += 2.0 * p_.n * p_.weight[k] * p_.tau * p_.h;
        return s;
    }

private:
    double density(int k, int i) const {
        return (full_[lay_.index(k, i + 1)] - full_[lay_.index(k, i)]) / p_.h;
    }

    double kinetic() const {
        const double scale = p_.h / p_.tau;
        double s = 0.0;
        for (const auto& idx : kin_idx_) {
            const double u = full_[idx[4]] - full_[idx[1]];
            const double v =
                (full_[idx[2]] - full_[idx[0]] + full_[idx[5]] - full_[idx[3]]) / (4.0 * p_.h);
            s += scale * u * u / v;
        }
        return s;
    }

    void build_pattern() {
        const int n = p_.n;
        std::vector<Eigen::Triplet<double>> trip;
        auto add_pair = [&](int a, int b) {
            const Ref &ra = lay_.ref(a), &rb = lay_.ref(b);
            if (ra.var < 0 || rb.var < 0 || ra.var < rb.var) return;
            trip.emplace_back(ra.var, rb.var, 0.0);
        };
        for (int k = 0; k <= p_.n_t; ++k) {
            for (int i = 0; i < n; ++i) {
                const int a[2] = {lay_.index(k, i + 1), lay_.index(k, i)};
                for (int s : {0, 1})
                    for (int t : {0, 1}) add_pair(a[s], a[t]);
            }
        }
        for (int k = 0; k < p_.n_t; ++k) {
            for (int j = 1; j < n; ++j) {
                std::array<int, kKin> idx{lay_.index(k, j - 1),     lay_.index(k, j),
                                          lay_.index(k, j + 1),     lay_.index(k + 1, j - 1),
                                          lay_.index(k + 1, j),     lay_.index(k + 1, j + 1)};
                kin_idx_.push_back(idx);
                for (int s = 0; s < kKin; ++s)
                    for (int t = 0; t < kKin; ++t) add_pair(idx[s], idx[t]);
            }
        }
        const int nv = lay_.n_vars();
        hess_.resize(nv, nv);
        hess_.setFromTriplets(trip.begin(), trip.end());
        hess_.makeCompressed();

        auto position = [&](int a, int b) -> int {
            const Ref &ra = lay_.ref(a), &rb = lay_.ref(b);
            if (ra.var < 0 || rb.var < 0 || ra.var < rb.var) return -1;
            const int col = rb.var, row = ra.var;
            const int* begin = hess_.innerIndexPtr() + hess_.outerIndexPtr()[col];
            const int* end = hess_.innerIndexPtr() + hess_.outerIndexPtr()[col + 1];
            const int* it = std::lower_bound(begin, end, row);
            return static_cast<int>(it - hess_.innerIndexPtr());
        };
        for (int k = 0; k <= p_.n_t; ++k) {
            for (int i = 0; i < n; ++i) {
                const int a[2] = {lay_.index(k, i + 1), lay_.index(k, i)};
                std::array<int, 4> pos{};
                for (int s : {0, 1})
                    for (int t : {0, 1}) pos[s * 2 + t] = position(a[s], a[t]);
                cell_pos_.push_back(pos);
            }
        }
        for (const auto& idx : kin_idx_) {
            std::array<int, kKin * kKin> pos{};
            for (int s = 0; s < kKin; ++s)
                for (int t = 0; t < kKin; ++t) pos[s * kKin + t] = position(idx[s], idx[t]);
            kin_pos_.push_back(pos);
        }
    }

    const InnerProblem& p_;
    const Layout& lay_;
    mutable std::vector<double> full_;
    std::vector<std::array<int, kKin>> kin_idx_;
    std::vector<std::array<int, kKin * kKin>> kin_pos_;
    std::vector<std::array<int, 4>> cell_pos_;
    Eigen::SparseMatrix<double> hess_;
};

void validate(const InnerProblem& p) {
    if (p.n < 2 || p.n_t < 1 || !(p.h > 0) || !(p.tau > 0) || !(p.rho > 0)) {
        throw std::invalid_argument("inner problem: bad sizes");
    }
    if (p.n * p.h * p.rho <= 1.0) throw std::invalid_argument("inner problem: cap leaves no interior");
    if (static_cast<int>(p.cost.size()) != p.n_t + 1 || static_cast<int>(p.weight.size()) != p.n_t + 1) {
        throw std::invalid_argument("inner problem: cost/weight length");
    }
    for (const auto& c : p.cost) {
        if (static_cast<int>(c.size()) != p.n) throw std::invalid_argument("inner problem: cost width");
        for (double v : c)
            if (!std::isfinite(v)) throw std::invalid_argument("inner problem: non-finite cost");
    }
}

}  // namespace

double inner_objective(const InnerProblem& p, const std::vector<std::vector<double>>& cum) {
    double obj = 0.0;
    const int n = p.n;
    for (int k = 0; k <= p.n_t; ++k) {
        const double beta = p.weight[k] * p.tau;
        for (int i = 0; i < n; ++i) obj += beta * p.cost[k][i] * (cum[k][i + 1] - cum[k][i]);
    }
    const double scale = p.h / p.tau;
    for (int k = 0; k < p.n_t; ++k) {
        for (int j = 1; j < n; ++j) {
            const double u = cum[k + 1][j] - cum[k][j];
            const double v = (cum[k][j + 1] - cum[k][j - 1] + cum[k + 1][j + 1] - cum[k + 1][j - 1]) /
                             (4.0 * p.h);
            if (v > 0.0) {
                obj += scale * u * u / v;
            } else if (std::abs(u) > kVacuumFluxTol) {
                return std::numeric_limits<double>::infinity();
            }
        }
    }
    return obj;
}

namespace {

// Newton direction for the current barrier weight; returns the squared decrement.
using DirectionFn = std::function<double(BarrierObjective&, const Eigen::VectorXd&, double,
                                         Eigen::VectorXd& g, Eigen::VectorXd& dx)>;

InnerResult path_following(const InnerProblem& prob, const Layout& lay, BarrierObjective& obj,
                           const std::vector<std::vector<double>>& init, const InnerOptions& opt,
                           const DirectionFn& direction) {
    // Strictly interior start: blend with the uniform density.
    std::vector<std::vector<double>> start = init;
    const double mix = std::clamp(opt.mix, 1e-12, 1.0);
    for (auto& c : start)
        for (int j = 0; j <= prob.n; ++j)
            c[j] = (1.0 - mix) * c[j] + mix * static_cast<double>(j) / prob.n;
    Eigen::VectorXd x = lay.restrict_(start);
    if (!std::isfinite(obj.value(x, opt.mu_start))) {
        throw std::invalid_argument("inner solver start is not strictly feasible");
    }

    Eigen::VectorXd g, dx;
    InnerResult res;
    double mu = opt.mu_start;
    double lam2 = 0.0;
    for (;;) {
        for (;;) {
            lam2 = direction(obj, x, mu, g, dx);
            if (!(lam2 >= 0.0) || !std::isfinite(lam2)) {
                throw NonConvergence("inner solver: Newton direction is not a descent direction", lam2);
            }
            if (0.5 * lam2 <= opt.newton_tol) break;
            if (++res.newton_steps > opt.max_newton) {
                std::ostringstream os;
                os << "inner solver: no convergence in " << opt.max_newton << " Newton steps (decrement "
                   << lam2 << ", mu " << mu << ")";
                throw NonConvergence(os.str(), lam2);
            }
            double alpha = obj.max_step(x, dx);
            const double f0 = obj.value(x, mu);
            if (lam2 > 1e-9) {
                while (alpha > 1e-14) {
                    const double f1 = obj.value(x + alpha * dx, mu);
                    if (f1 <= f0 - 1e-4 * alpha * lam2) break;
                    alpha *= 0.5;
                }
                if (alpha <= 1e-14) break;  // no further progress at this precision
            }
            x += alpha * dx;
        }
        if (mu <= opt.mu_final) break;
        mu = std::max(mu * opt.mu_factor, opt.mu_final);
    }

    std::vector<double> full;
    lay.expand(x, full);
    res.cumulative.assign(prob.n_t + 1, std::vector<double>(prob.n + 1));
    for (int k = 0; k <= prob.n_t; ++k)
        for (int j = 0; j <= prob.n; ++j) res.cumulative[k][j] = full[lay.index(k, j)];
    res.objective = obj.plain(x);
    res.barrier_gap = mu * obj.barrier_mass();
    res.newton_decrement = lam2;
    return res;
}

}  // namespace

InnerResult solve_inner_barrier(const InnerProblem& prob,
                                const std::vector<std::vector<double>>& init,
                                const InnerOptions& opt) {
    validate(prob);
    if (static_cast<int>(init.size()) != prob.n_t + 1) throw std::invalid_argument("init length");
    Layout lay(prob);
    BarrierObjective obj(prob, lay);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt;
    bool analyzed = false;
    auto direction = [&](BarrierObjective& o, const Eigen::VectorXd& x, double mu, Eigen::VectorXd& g,
                         Eigen::VectorXd& dx) {
        o.assemble(x, mu, g);
        if (!analyzed) {
            ldlt.analyzePattern(o.hessian());
            analyzed = true;
        }
        ldlt.factorize(o.hessian());
        if (ldlt.info() != Eigen::Success) {
            throw NonConvergence("inner solver: Newton system factorization failed", 0.0);
        }
        dx = -ldlt.solve(g);
        return -g.dot(dx);
    };
    return path_following(prob, lay, obj, init, opt, direction);
}

}  // namespace wbrake
