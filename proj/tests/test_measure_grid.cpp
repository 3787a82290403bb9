#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "wbrake/action.hpp"
#include "wbrake/measure_grid.hpp"
#include "wbrake/validation.hpp"

using namespace wbrake;

namespace {

const Grid1D kGrid = Grid1D::symmetric(4.0, 256);
constexpr double kRho = 2.0;

}  // namespace

TEST(Grid1D, RejectsAsymmetricOrTinyGrids) {
    EXPECT_THROW(Grid1D(-1.0, 2.0, 16), std::invalid_argument);
    EXPECT_THROW(Grid1D(-1.0, 1.0, 2), std::invalid_argument);
    const Grid1D g(-2.0, 2.0, 16);
    EXPECT_DOUBLE_EQ(g.h, 0.25);
    EXPECT_DOUBLE_EQ(g.center(0), -1.875);
    EXPECT_DOUBLE_EQ(g.edge(16), 2.0);
}

TEST(GridMeasure, ValidatesMassAndCap) {
    const Grid1D g = Grid1D::symmetric(1.0, 4);
    EXPECT_THROW(GridMeasure(g, {1.0, 1.0, 1.0, 1.0}, 2.0), std::invalid_argument);  // mass 2
    EXPECT_THROW(GridMeasure(g, {0.0, 0.0, 0.0, 2.0}, 1.0), std::invalid_argument);  // above cap
    EXPECT_THROW(GridMeasure(g, {0.5, 0.5}, 1.0), std::invalid_argument);            // wrong size
    const GridMeasure m(g, {0.5, 0.5, 0.5, 0.5}, 1.0);
    EXPECT_DOUBLE_EQ(m.mass(), 1.0);
    const auto c = m.cumulative();
    EXPECT_EQ(c.front(), 0.0);
    EXPECT_EQ(c.back(), 1.0);
}

TEST(GridMeasure, AlignedBallIsSaturatedBlock) {
    // r = 1/(2 rho) = 0.25 = 8 cells of width 1/32.
    const GridMeasure b = GridMeasure::ball(kGrid, kRho, 1.0);
    int full = 0;
    for (int i = 0; i < kGrid.n_cells; ++i) {
        if (b[i] == kRho) ++full;
        else EXPECT_EQ(b[i], 0.0);
    }
    EXPECT_EQ(full, 16);
    EXPECT_NEAR(mean(b), 1.0, 1e-14);
}

TEST(Wasserstein, TranslationDistanceIsShift) {
    // Translating a measure by s moves every quantile by s.
    for (double s : {0.0, 0.25, 0.5, 1.3125}) {  // multiples of h keep balls aligned
        const auto a = GridMeasure::ball(kGrid, kRho, -0.5), b = GridMeasure::ball(kGrid, kRho, -0.5 + s);
        EXPECT_NEAR(d2(a, b), s, 1e-12);
    }
}

TEST(Wasserstein, MatchesQuantileIntegralOfUniformLaws) {
    // Uniform on [0,1] vs uniform on [0,2]: int_0^1 (s - 2 s)^2 ds = 1/3.
    const Grid1D g = Grid1D::symmetric(4.0, 64);
    std::vector<double> a(64, 0.0), b(64, 0.0);
    for (int i = 0; i < 64; ++i) {
        if (g.center(i) > 0.0 && g.center(i) < 1.0) a[i] = 1.0;
        if (g.center(i) > 0.0 && g.center(i) < 2.0) b[i] = 0.5;
    }
    EXPECT_NEAR(d2(GridMeasure(g, a, 2.0), GridMeasure(g, b, 2.0)), std::sqrt(1.0 / 3.0), 1e-12);
}

TEST(Wasserstein, AgreesWithLpOracle) {
    const Grid1D g = Grid1D::symmetric(2.0, 16);
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        const auto a = random_measure(g, kRho, rng), b = random_measure(g, kRho, rng);
        EXPECT_LE(std::abs(d2(a, b) - d2_lp_oracle(a, b)), 2.0 * g.h);
    }
}

TEST(Wasserstein, LpOracleOnPointMassesIsExact) {
    // Single saturated cells: the discrete plan moves one point mass.
    const Grid1D g = Grid1D::symmetric(2.0, 8);
    std::vector<double> a(8, 0.0), b(8, 0.0);
    a[1] = 2.0;
    b[6] = 2.0;
    EXPECT_NEAR(d2_lp_oracle(GridMeasure(g, a, 2.0), GridMeasure(g, b, 2.0)), 2.5, 1e-12);
}

TEST(Wasserstein, TriangleInequality) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const auto a = random_measure(kGrid, kRho, rng), b = random_measure(kGrid, kRho, rng),
                   c = random_measure(kGrid, kRho, rng);
        EXPECT_LE(d2(a, c), d2(a, b) + d2(b, c) + 1e-9);
    }
}

TEST(Wasserstein, DpWithTwoIsD2) {
    std::mt19937_64 rng(5);
    const auto a = random_measure(kGrid, kRho, rng), b = random_measure(kGrid, kRho, rng);
    EXPECT_NEAR(dp(a, b, 2.0), d2(a, b), 1e-12);
    EXPECT_LE(dp(a, b, 1.0), d2(a, b) + 1e-12);
}

TEST(Wasserstein, RejectsMismatchedGrids) {
    const auto a = GridMeasure::ball(kGrid, kRho, 0.0);
    const auto b = GridMeasure::ball(Grid1D::symmetric(4.0, 128), kRho, 0.0);
    EXPECT_THROW(d2(a, b), std::invalid_argument);
}

TEST(Reflection, InvolutionAndIsometry) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 50; ++i) {
        const auto a = random_measure(kGrid, kRho, rng), b = random_measure(kGrid, kRho, rng);
        EXPECT_EQ(reflect(reflect(a)).density(), a.density());
        EXPECT_NEAR(d2(reflect(a), reflect(b)), d2(a, b), 1e-12);
        EXPECT_NEAR(mean(reflect(a)), -mean(a), 1e-12);
    }
}

TEST(Projection, SatisfiesVariationalInequality) {
    // p = proj(v) iff <v - p, z - p> <= 0 for every feasible z.
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n01(0.0, 1.0);
    const Grid1D g = Grid1D::symmetric(1.0, 32);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(32);
        for (double& x : v) x = 2.0 * n01(rng);
        const auto p = capped_simplex_projection(v, g.h, kRho);
        double mass = 0.0;
        for (double x : p) {
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, kRho);
            mass += x * g.h;
        }
        EXPECT_NEAR(mass, 1.0, 1e-12);
        for (int z = 0; z < 20; ++z) {
            const auto feasible = random_measure(g, kRho, rng);
            double ip = 0.0;
            for (int i = 0; i < 32; ++i) ip += (v[i] - p[i]) * (feasible[i] - p[i]);
            EXPECT_LE(ip, 1e-9);
        }
    }
}

TEST(Geodesic, EnergyIdentityCapAndConstantSpeed) {
    const auto m1 = GridMeasure::ball(kGrid, kRho, 0.75), m2 = GridMeasure::ball(kGrid, kRho, 1.25);
    const Trajectory geo = geodesic(m1, m2, 0.0, 1.0, 32);
    EXPECT_NEAR(kinetic_energy(geo), 0.25, 0.05 * 0.25);
    for (int k = 0; k <= geo.n_t(); ++k) {
        EXPECT_LE(*std::max_element(geo.m[k].density().begin(), geo.m[k].density().end()), kRho + 1e-12);
        EXPECT_NEAR(d2(m1, geo.m[k]), 0.5 * k / 32.0, 0.05 * 0.5);
    }
    EXPECT_LE(geo.continuity_residual(), 1e-9);
}

TEST(Geodesic, EndpointsAreExact) {
    std::mt19937_64 rng(4);
    const auto a = random_measure(kGrid, kRho, rng), b = random_measure(kGrid, kRho, rng);
    const Trajectory geo = geodesic(a, b, 1.0, 3.0, 10);
    EXPECT_EQ(geo.m.front().density(), a.density());
    EXPECT_EQ(geo.m.back().density(), b.density());
    EXPECT_DOUBLE_EQ(geo.t0, 1.0);
    EXPECT_DOUBLE_EQ(geo.tau, 0.2);
}

TEST(Rearrangement, SymmetricDecreasingSameDistribution) {
    std::mt19937_64 rng(8);
    const auto m = random_measure(kGrid, kRho, rng);
    const auto r = rearrange_decreasing(m);
    auto a = m.density(), b = r.density();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    const int n = kGrid.n_cells;
    for (int i = n / 2; i + 1 < n; ++i) EXPECT_GE(r[i], r[i + 1]);
    for (int i = n / 2 - 1; i > 0; --i) EXPECT_GE(r[i], r[i - 1]);
    EXPECT_NEAR(mean(r), 0.0, kGrid.h);
}

TEST(Quantile, BallQuantileIsLinear) {
    const auto q = QuantileTable::ball(1.0, 2.0);
    EXPECT_NEAR(q(0.0), 0.75, 1e-14);
    EXPECT_NEAR(q(0.5), 1.0, 1e-14);
    EXPECT_NEAR(q(1.0), 1.25, 1e-14);
    const auto g = QuantileTable::of(GridMeasure::ball(kGrid, kRho, 1.0));
    EXPECT_NEAR(d2(q, g), 0.0, 1e-12);
}

TEST(Csv, RoundTripIsBitwise) {
    std::mt19937_64 rng(17);
    const auto m = random_measure(kGrid, kRho, rng);
    std::stringstream s;
    write_csv(s, m);
    EXPECT_EQ(read_measure_csv(s, kGrid, kRho).density(), m.density());
    std::stringstream bad("nope\n1,2\n");
    EXPECT_THROW(read_measure_csv(bad, kGrid, kRho), std::invalid_argument);
}
