#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "jkoflow/flow.hpp"

namespace jkoflow {
namespace {

using std::numbers::pi;

FlowConfig fokker_planck(int nx, int steps, double eps = 1e-8)
{
    FlowConfig c;
    c.tau = 1e-4;
    c.steps = steps;
    c.epsilon = eps;
    c.grid = GridSpec(2, nx);
    c.mobility = MobilitySpec::linear(1.0);
    c.energy = EnergyForm{Entropy{}, QuadraticPotential{50.0, 0.5}, NoGradient{}};
    return c;
}

auto cos8 = [](double x) { return std::cos(8 * pi * x) + 1; };

TEST(RunFlow, ZeroStepsGivesRegularizedDatum)
{
    const auto c = fokker_planck(20, 0);
    const auto t = run_flow(c, cos8);
    ASSERT_EQ(t.steps(), 0);
    ASSERT_EQ(t.times.size(), 1u);
    const auto expected = regularize_initial(cell_average(cos8, 20), c.epsilon, infinity);
    EXPECT_EQ((t.profiles[0] - expected).cwiseAbs().maxCoeff(), 0.0);
}

TEST(RunFlow, MassIsInvariant)
{
    const auto c = fokker_planck(50, 100);
    const auto t = run_flow(c, cos8);
    ASSERT_EQ(t.steps(), 100);
    const double m0 = discrete_mass(t.profiles[0], c.grid.dx());
    for (const auto& p : t.profiles) {
        EXPECT_NEAR(discrete_mass(p, c.grid.dx()), m0, 1e-12 * m0);
    }
    for (std::size_t k = 1; k < t.times.size(); ++k) {
        EXPECT_GT(t.times[k], t.times[k - 1]);
        EXPECT_TRUE(t.diagnostics[k].converged) << "step " << k;
    }
    const auto slack = check_energy_slack(t, c);
    EXPECT_TRUE(slack.passed) << slack.max_violation << " at step " << slack.worst_step;
}

TEST(RunFlow, ConstantProfileIsFixedPoint)
{
    for (const InternalEnergy& e : std::vector<InternalEnergy>{Entropy{}, PowerLawInternal{2.0}}) {
        FlowConfig c;
        c.tau = 1e-2;
        c.steps = 10;
        c.grid = GridSpec(2, 12);
        c.mobility = MobilitySpec::power(1.0, 0.5);
        c.energy = EnergyForm{e, {}, {}};
        const auto t = run_flow(c, [](double) { return 0.7; });
        for (const auto& p : t.profiles) {
            EXPECT_LT((p - t.profiles[0]).cwiseAbs().maxCoeff(), 1e-12);
        }
        // both sides of the slack inequality differ by the eps-term only
        const auto slack = check_energy_slack(t, c);
        EXPECT_TRUE(slack.passed);
        for (int k = 1; k <= t.steps(); ++k) {
            EXPECT_NEAR(slack.max_violation + slack.slack[k - 1], 0.0, 1e-9);
        }
    }
}

TEST(RunFlow, Deterministic)
{
    const auto c = fokker_planck(30, 20);
    const auto a = run_flow(c, cos8);
    const auto b = run_flow(c, cos8);
    ASSERT_EQ(a.profiles.size(), b.profiles.size());
    for (std::size_t k = 0; k < a.profiles.size(); ++k) {
        EXPECT_EQ((a.profiles[k] - b.profiles[k]).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(RunFlow, ObserverSeesEveryStep)
{
    auto c = fokker_planck(20, 7);
    std::vector<int> seen;
    run_flow(c, cos8, [&](int k, const Trajectory& t) {
        EXPECT_EQ(t.steps(), k);
        seen.push_back(k);
    });
    EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(RunFlow, RejectsInadmissibleData)
{
    auto c = fokker_planck(10, 1);
    EXPECT_THROW(run_flow(c, [](double x) { return x - 0.5; }), std::invalid_argument);
    EXPECT_THROW(run_flow(c, Eigen::VectorXd::Ones(9)), std::invalid_argument);
    c.snapshot_every = 0;
    EXPECT_THROW(run_flow(c, cos8), std::invalid_argument);
    c = fokker_planck(10, 1);
    c.mobility = MobilitySpec::bounded(1, 1, 1, 1);
    EXPECT_THROW(run_flow(c, [](double) { return 1.5; }), std::invalid_argument);
}

TEST(RunFlow, ClampingAboveThresholdAborts)
{
    // a steep confining potential and a long step drive the boundary cells
    // below eps, so deregularization has to clamp
    FlowConfig c;
    c.tau = 1.0;
    c.steps = 5;
    c.epsilon = 1e-3;
    c.grid = GridSpec(2, 10);
    c.mobility = MobilitySpec::linear(1.0);
    c.energy = EnergyForm{Entropy{}, QuadraticPotential{2000.0, 0.5}, NoGradient{}};
    c.max_clamped_mass = 1e-6;
    bool aborted = false;
    try {
        run_flow(c, [](double) { return 1.0; });
    } catch (const FlowError& e) {
        aborted = true;
        EXPECT_NE(std::string(e.what()).find("clamped"), std::string::npos);
    }
    EXPECT_TRUE(aborted);
    c.max_clamped_mass = 1.0;
    const auto t = run_flow(c, [](double) { return 1.0; });
    double clamped = 0.0;
    for (const auto& d : t.diagnostics) clamped += d.clamped_mass;
    EXPECT_GT(clamped, 1e-6);
}

TEST(InterpolatePwc, LeftOpenConvention)
{
    const auto c = fokker_planck(10, 4);
    const auto t = run_flow(c, cos8);
    EXPECT_EQ(&interpolate_pwc(t, 0.0), &t.profiles[0]);
    EXPECT_EQ(&interpolate_pwc(t, c.tau / 2), &t.profiles[1]);
    EXPECT_EQ(&interpolate_pwc(t, c.tau), &t.profiles[1]);
    EXPECT_EQ(&interpolate_pwc(t, 2.5 * c.tau), &t.profiles[3]);
    EXPECT_EQ(&interpolate_pwc(t, 4 * c.tau), &t.profiles[4]);
    EXPECT_THROW(interpolate_pwc(t, 4.5 * c.tau), std::out_of_range);
    EXPECT_THROW(interpolate_pwc(t, -1e-3), std::out_of_range);
}

TEST(EnergySlack, BoundScalesLinearlyInEpsilon)
{
    const auto a = fokker_planck(30, 10, 1e-6);
    const auto b = fokker_planck(30, 10, 1e-8);
    const auto ra = check_energy_slack(run_flow(a, cos8), a);
    const auto rb = check_energy_slack(run_flow(b, cos8), b);
    EXPECT_TRUE(ra.passed);
    EXPECT_TRUE(rb.passed);
    // the bound is eps * sum 1/m(previous profile); the profiles themselves
    // move with eps only where densities are comparable to eps
    for (std::size_t k = 0; k < ra.slack.size(); ++k) {
        EXPECT_NEAR(ra.slack[k] / rb.slack[k], 100.0, 10.0);
    }
}

TEST(EnergySlack, DetectsAnEnergyIncrease)
{
    const auto c = fokker_planck(10, 2);
    auto t = run_flow(c, cos8);
    t.profiles[2] = t.profiles[0];  // jump back to the higher energy
    const auto r = check_energy_slack(t, c);
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.worst_step, 2);
    EXPECT_GT(r.max_violation, 1e-3);
}

}  // namespace
}  // namespace jkoflow
