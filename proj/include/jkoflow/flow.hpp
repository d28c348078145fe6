#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "energy.hpp"
#include "grid.hpp"
#include "mobility.hpp"
#include "solver.hpp"

namespace jkoflow {

struct FlowConfig {
    double tau = 1e-3;
    int steps = 0;
    double epsilon = 1e-8;
    GridSpec grid{2, 50};
    MobilitySpec mobility;
    EnergyForm energy;
    int snapshot_every = 1;
    SolveOptions solver;
    /// Abort when deregularization clamps more than this much mass in a step.
    double max_clamped_mass = 1e-6;

    void validate() const
    {
        if (!(tau > 0.0)) throw std::invalid_argument("FlowConfig: tau must be positive");
        if (steps < 0) throw std::invalid_argument("FlowConfig: steps must be >= 0");
        if (snapshot_every < 1) throw std::invalid_argument("FlowConfig: snapshot_every must be >= 1");
        if (!(epsilon > 0.0 && epsilon < 1.0)) {
            throw std::invalid_argument("FlowConfig: epsilon must lie in (0,1)");
        }
        if (grid.nx < 2) throw std::invalid_argument("FlowConfig: need at least two cells");
        solver.validate();
    }
};

struct StepDiagnostics {
    double mass = 0.0;
    double energy = 0.0;
    double action = 0.0;
    int newton_iters = 0;
    double grad_norm = 0.0;
    double clamped_mass = 0.0;
    bool converged = true;
};

/// Outer-step profiles k = 0..K at times k tau, with per-step diagnostics.
struct Trajectory {
    double tau = 0.0;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> profiles;
    std::vector<StepDiagnostics> diagnostics;

    int steps() const { return static_cast<int>(profiles.size()) - 1; }
};

class FlowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Callback invoked after every outer step (k, trajectory so far).
using StepObserver = std::function<void(int, const Trajectory&)>;

/// Iterate the discrete minimizing movement scheme from the cell averages of u0.
inline Trajectory run_flow(const FlowConfig& config, const Eigen::VectorXd& initial_averages,
                           const StepObserver& observer = {})
{
    config.validate();
    const GridSpec& grid = config.grid;
    const double max = config.mobility.support_bound();
    const double dx = grid.dx();
    if (initial_averages.size() != grid.nx) {
        throw std::invalid_argument("run_flow: initial datum must have nx cell averages");
    }

    const auto potential = sample_potential(config.energy, grid);
    auto energy_of = [&](const Eigen::VectorXd& u) {
        return discrete_energy(config.energy, grid, potential, u);
    };

    Trajectory traj;
    traj.tau = config.tau;
    Eigen::VectorXd u0 = regularize_initial(initial_averages, config.epsilon, max);
    const double e0 = energy_of(u0);
    if (!std::isfinite(e0)) throw std::invalid_argument("run_flow: initial energy is infinite");
    traj.times.push_back(0.0);
    traj.profiles.push_back(u0);
    traj.diagnostics.push_back({discrete_mass(u0, dx), e0, 0.0, 0, 0.0, 0.0, true});
    if (observer) observer(0, traj);

    std::optional<Eigen::VectorXd> warm;
    for (int k = 1; k <= config.steps; ++k) {
        const Eigen::VectorXd& prev = traj.profiles.back();
        const auto raw = deregularize(prev, config.epsilon, max);
        const double clamped_mass = dx * raw.clamped;
        if (clamped_mass > config.max_clamped_mass) {
            throw FlowError("step " + std::to_string(k) + ": deregularization clamped mass " +
                            std::to_string(clamped_mass) + " above the abort threshold");
        }
        Eigen::VectorXd init_row = regularize_initial(raw.values, config.epsilon, max);
        if (raw.clamped == 0.0) {
            const double drift = (init_row - prev).lpNorm<Eigen::Infinity>();
            if (drift > 1e-12 * std::max(1.0, prev.lpNorm<Eigen::Infinity>())) {
                throw FlowError("step " + std::to_string(k) +
                                ": regularization round trip is not the identity");
            }
        }

        ObjectiveSpec spec{config.tau,    config.epsilon, config.mobility, config.energy,
                           potential,     grid,           std::move(init_row)};
        SolveResult res;
        try {
            res = solve_step(spec, config.solver, warm);
        } catch (const SolverError& e) {
            throw FlowError("step " + std::to_string(k) + ": " + e.what());
        }
        warm = res.free_fluxes();

        Eigen::VectorXd next = res.u.row(grid.nt - 1).transpose();
        traj.times.push_back(k * config.tau);
        traj.diagnostics.push_back({discrete_mass(next, dx), res.energy_part, res.action_part,
                                    res.iterations, res.grad_norm, clamped_mass, res.converged});
        traj.profiles.push_back(std::move(next));
        if (observer) observer(k, traj);
    }
    return traj;
}

template <std::invocable<double> Profile>
    requires(!std::is_base_of_v<Eigen::EigenBase<std::remove_cvref_t<Profile>>,
                                std::remove_cvref_t<Profile>>)
Trajectory run_flow(const FlowConfig& config, Profile&& u0, const StepObserver& observer = {})
{
    return run_flow(config, cell_average(std::forward<Profile>(u0), config.grid.nx), observer);
}

/// Profile at time t, piecewise constant and left-open: k = ceil(t / tau).
inline const Eigen::VectorXd& interpolate_pwc(const Trajectory& traj, double t)
{
    const int last = traj.steps();
    if (!(t >= 0.0) || t > last * traj.tau * (1.0 + 1e-12)) {
        throw std::out_of_range("interpolate_pwc: t outside [0, K tau]");
    }
    const int k = std::min(last, static_cast<int>(std::ceil(t / traj.tau - 1e-9)));
    return traj.profiles[static_cast<std::size_t>(std::max(k, 0))];
}

struct SlackReport {
    bool passed = true;
    double max_violation = 0.0;  // max_k of lhs - rhs, without the tolerance
    int worst_step = 0;
    std::vector<double> slack;  // eps-term bound per step k >= 1
};

/// Each step must beat the zero-flux competitor, whose value is the previous
/// energy plus the pure eps-part of the action:
///   E(u^k) <= E(u^{k-1}) + eps/(2 tau) dt dx sum_{i,j} 1/m(u^{k-1}_j) + tol.
inline SlackReport check_energy_slack(const Trajectory& traj, const FlowConfig& config,
                                      double tolerance = 1e-9)
{
    const GridSpec& grid = config.grid;
    const auto potential = sample_potential(config.energy, grid);
    SlackReport report;
    for (int k = 1; k <= traj.steps(); ++k) {
        const auto& prev = traj.profiles[k - 1];
        double inv_mobility = 0.0;
        for (Eigen::Index j = 0; j < prev.size(); ++j) {
            inv_mobility += 1.0 / mobility_eval(config.mobility, prev[j]).m;
        }
        // the inner time levels contribute nt * dt = 1 copies of the same sum
        const double bound = config.epsilon / (2.0 * config.tau) * grid.dx() * inv_mobility;
        report.slack.push_back(bound);
        const double lhs = discrete_energy(config.energy, grid, potential, traj.profiles[k]);
        const double rhs = discrete_energy(config.energy, grid, potential, prev) + bound;
        const double violation = lhs - rhs;
        if (k == 1 || violation > report.max_violation) {
            report.max_violation = violation;
            report.worst_step = k;
        }
        if (violation > tolerance) report.passed = false;
    }
    return report;
}

}  // namespace jkoflow
