#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "jkoflow/grid.hpp"
#include "jkoflow/mobility.hpp"
#include "test_support.hpp"

namespace jkoflow {
namespace {

using std::numbers::pi;
using testing::uniform;

Eigen::MatrixXd random_fluxes(const GridSpec& g, double scale = 0.1)
{
    Eigen::MatrixXd w(g.nt, g.nx);
    for (int i = 0; i < g.nt; ++i) {
        w(i, 0) = 0.0;
        for (int j = 1; j < g.nx; ++j) w(i, j) = uniform(-scale, scale);
    }
    return w;
}

Eigen::VectorXd random_row(int n, double lo = 0.5, double hi = 2.0)
{
    Eigen::VectorXd r(n);
    for (int j = 0; j < n; ++j) r[j] = uniform(lo, hi);
    return r;
}

TEST(GridSpec, StepsAreExactReciprocals)
{
    for (int n : {1, 2, 3, 7, 100, 300, 400}) {
        const GridSpec g(n, n);
        EXPECT_EQ(g.dt() * g.nt, 1.0);
        EXPECT_EQ(g.free_fluxes(), n * (n - 1));
    }
    EXPECT_THROW(GridSpec(0, 3), std::invalid_argument);
    EXPECT_THROW(GridSpec(2, -1), std::invalid_argument);
}

TEST(CellAverage, Constant)
{
    const auto a = cell_average([](double) { return 1.0; }, 13);
    for (int j = 0; j < 13; ++j) EXPECT_NEAR(a[j], 1.0, 1e-15);
}

TEST(CellAverage, CosineOverWholePeriods)
{
    // antiderivative sin(8 pi x)/(8 pi) vanishes at multiples of 1/4
    const auto a = cell_average([](double x) { return std::cos(8 * pi * x) + 1; }, 4);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(a[j], 1.0, 1e-14);
}

TEST(CellAverage, CosineAgainstClosedForm)
{
    const int nx = 25;
    const auto a = cell_average([](double x) { return std::cos(8 * pi * x) + 1; }, nx);
    for (int j = 0; j < nx; ++j) {
        const double l = static_cast<double>(j) / nx, r = static_cast<double>(j + 1) / nx;
        const double exact = 1.0 + (std::sin(8 * pi * r) - std::sin(8 * pi * l)) / (8 * pi) * nx;
        EXPECT_NEAR(a[j], exact, 1e-13);
    }
}

TEST(CellAverage, QuarticThinFilmDatum)
{
    // (1/dx) int_0^{1/2} (x - 1/2)^4 dx + 0.001 = 2 (1/2)^5 / 5 + 0.001
    const auto a = cell_average([](double x) { return std::pow(x - 0.5, 4) + 0.001; }, 2);
    EXPECT_NEAR(a[0], 0.0135, 1e-15);
    EXPECT_NEAR(a[1], 0.0135, 1e-15);
}

TEST(CellAverage, TableIsAveragedExactly)
{
    // interpolant of (0, 1, 0) on nodes 0, 1/2, 1 is the hat function
    const SampledProfile hat{{0.0, 1.0, 0.0}};
    auto a = cell_average(hat, 2);
    EXPECT_NEAR(a[0], 0.5, 1e-15);
    EXPECT_NEAR(a[1], 0.5, 1e-15);
    a = cell_average(hat, 4);
    EXPECT_NEAR(a[0], 0.25, 1e-15);
    EXPECT_NEAR(a[1], 0.75, 1e-15);
    // an arbitrary table: exact averages agree with fine quadrature of the interpolant
    SampledProfile table{{0.3, 1.2, 0.1, 2.0, 0.7, 0.7, 1.5}};
    const auto exact = cell_average(table, 9);
    const auto quad = cell_average([&](double x) { return table(x); }, 9);
    EXPECT_LT((exact - quad).cwiseAbs().maxCoeff(), 2e-3);  // kinks limit Gauss accuracy
    EXPECT_NEAR(exact.mean(), cell_average(table, 1)[0], 1e-14);
}

TEST(Regularize, Examples)
{
    Eigen::VectorXd half = Eigen::VectorXd::Constant(1, 0.5);
    EXPECT_DOUBLE_EQ(regularize_initial(half, 0.1, infinity)[0], 0.6);
    EXPECT_DOUBLE_EQ(regularize_initial(half, 0.1, 1.0)[0], 0.5);
    EXPECT_DOUBLE_EQ(regularize_initial(Eigen::VectorXd::Constant(1, 0.0), 0.1, 1.0)[0], 0.1);
    EXPECT_DOUBLE_EQ(regularize_initial(Eigen::VectorXd::Constant(1, 1.0), 0.1, 1.0)[0], 0.9);
}

TEST(Regularize, PreconditionViolations)
{
    Eigen::VectorXd v = Eigen::VectorXd::Constant(2, 0.5);
    EXPECT_THROW(regularize_initial(v, 0.0, infinity), std::invalid_argument);
    EXPECT_THROW(regularize_initial(v, 1.0, infinity), std::invalid_argument);
    EXPECT_THROW(regularize_initial(v, 0.3, 0.5), std::invalid_argument);  // eps >= M/2
    EXPECT_THROW(regularize_initial(Eigen::VectorXd::Constant(1, 1.5), 0.1, 1.0),
                 std::invalid_argument);
    EXPECT_THROW(regularize_initial(Eigen::VectorXd::Constant(1, -0.1), 0.1, infinity),
                 std::invalid_argument);
}

TEST(Deregularize, Examples)
{
    auto d = deregularize(Eigen::VectorXd::Constant(1, 0.6), 0.1, infinity);
    EXPECT_DOUBLE_EQ(d.values[0], 0.5);
    EXPECT_EQ(d.clamped, 0.0);
    d = deregularize(Eigen::VectorXd::Constant(1, 0.5), 0.1, 1.0);
    EXPECT_DOUBLE_EQ(d.values[0], 0.5);
    d = deregularize(Eigen::VectorXd::Constant(1, 0.05), 0.1, infinity);
    EXPECT_EQ(d.values[0], 0.0);
    EXPECT_NEAR(d.clamped, 0.05, 1e-16);
}

TEST(Deregularize, RoundTripIsIdentity)
{
    for (int s = 0; s < 100; ++s) {
        const double eps = uniform(1e-12, 0.2);
        const bool bounded = s % 2 == 0;
        const double max = bounded ? uniform(0.5, 3.0) : infinity;
        Eigen::VectorXd u(20);
        for (int j = 0; j < 20; ++j) {
            u[j] = bounded ? uniform(eps, max - eps) : uniform(eps, 5.0);
        }
        const auto raw = deregularize(u, eps, max);
        EXPECT_EQ(raw.clamped, 0.0);
        EXPECT_LT((regularize_initial(raw.values, eps, max) - u).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(MarchDensity, ZeroFluxFreezesDensity)
{
    const GridSpec g(3, 5);
    const auto row = random_row(5);
    const auto u = march_density(row, Eigen::MatrixXd::Zero(3, 5), g);
    for (int i = 0; i < 3; ++i) EXPECT_EQ((u.row(i).transpose() - row).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(ce_residual(row, u, Eigen::MatrixXd::Zero(3, 5), g), 0.0);
}

TEST(MarchDensity, TwoCellHandSolve)
{
    const GridSpec g(1, 2);  // dt = 1, dx = 1/2
    const double a = 0.7, b = 1.9, s = 0.13;
    Eigen::MatrixXd w(1, 2);
    w << 0.0, s;
    const auto u = march_density(Eigen::Vector2d(a, b), w, g);
    EXPECT_DOUBLE_EQ(u(0, 0), a - 2 * s);
    EXPECT_DOUBLE_EQ(u(0, 1), b + 2 * s);
}

TEST(MarchDensity, ShapeMismatch)
{
    const GridSpec g(2, 3);
    EXPECT_THROW(march_density(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Zero(2, 3), g),
                 std::invalid_argument);
    EXPECT_THROW(march_density(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(3, 3), g),
                 std::invalid_argument);
    EXPECT_THROW(ce_residual(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(1, 3),
                             Eigen::MatrixXd::Zero(2, 3), g),
                 std::invalid_argument);
}

TEST(MarchDensity, RandomFluxesSatisfyContinuityAndConserveMass)
{
    for (int s = 0; s < 50; ++s) {
        const GridSpec g(testing::uniform_int(1, 4), testing::uniform_int(2, 9));
        const auto row = random_row(g.nx);
        const auto w = random_fluxes(g);
        const auto u = march_density(row, w, g);
        EXPECT_LE(ce_residual(row, u, w, g), 1e-13 * std::max(1.0, row.cwiseAbs().maxCoeff()));
        const double m0 = discrete_mass(row, g.dx());
        for (int i = 0; i < g.nt; ++i) {
            EXPECT_NEAR(discrete_mass(u.row(i).transpose(), g.dx()), m0, 1e-14 * m0);
        }
    }
}

TEST(CeResidual, DetectsPerturbation)
{
    const GridSpec g(2, 5);
    const auto row = random_row(5);
    const auto w = random_fluxes(g);
    auto u = march_density(row, w, g);
    const double delta = 3e-4;
    u(1, 2) += delta;
    EXPECT_NEAR(ce_residual(row, u, w, g), delta * g.dx(), 1e-15);
    // a nonzero pinned flux is a violated equation on its own
    auto w_bad = w;
    w_bad(0, 0) = 0.25;
    EXPECT_GE(ce_residual(row, march_density(row, w_bad, g), w_bad, g), 0.25);
}

TEST(MarchDensity, AffineInFluxes)
{
    for (int s = 0; s < 20; ++s) {
        const GridSpec g(3, 6);
        const auto row = random_row(6);
        const auto w1 = random_fluxes(g), w2 = random_fluxes(g);
        const Eigen::MatrixXd lhs = march_density(row, w1 + w2, g) - march_density(row, w2, g);
        const Eigen::MatrixXd rhs = march_density(Eigen::VectorXd::Zero(6), w1, g);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(MarchDensity, MirrorImageIsFeasible)
{
    for (int s = 0; s < 20; ++s) {
        const GridSpec g(2, 7);
        const int n = g.nx;
        const auto row = random_row(n);
        const auto w = random_fluxes(g);
        const auto u = march_density(row, w, g);
        Eigen::VectorXd row_m = row.reverse();
        Eigen::MatrixXd u_m = u.rowwise().reverse();
        Eigen::MatrixXd w_m = Eigen::MatrixXd::Zero(g.nt, n);
        for (int i = 0; i < g.nt; ++i) {
            for (int j = 1; j < n; ++j) w_m(i, j) = -w(i, n - j);
        }
        EXPECT_LT(ce_residual(row_m, u_m, w_m, g), 1e-14);
    }
}

TEST(DiscreteMass, CompensatedSum)
{
    Eigen::VectorXd v = Eigen::VectorXd::Constant(1000, 0.1);
    EXPECT_DOUBLE_EQ(discrete_mass(v, 1e-3), 0.1);
}

}  // namespace
}  // namespace jkoflow
