#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "energy.hpp"
#include "grid.hpp"
#include "mobility.hpp"

namespace jkoflow {

struct SolveOptions {
    double grad_tol_abs = 1e-10;
    double grad_tol_rel = 1e-12;
    int max_iter = 200;
    double fraction_to_boundary = 0.99;
    double armijo_slope = 1e-4;
    double backtrack_factor = 0.5;
    double damping_init = 1e-8;
    double damping_growth = 10.0;

    void validate() const
    {
        if (!(fraction_to_boundary > 0.0 && fraction_to_boundary < 1.0)) {
            throw std::invalid_argument("SolveOptions: fraction_to_boundary must lie in (0,1)");
        }
        if (!(grad_tol_abs > 0.0) || !(grad_tol_rel > 0.0)) {
            throw std::invalid_argument("SolveOptions: tolerances must be positive");
        }
        if (max_iter < 1) throw std::invalid_argument("SolveOptions: max_iter must be >= 1");
        if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
            throw std::invalid_argument("SolveOptions: backtrack_factor must lie in (0,1)");
        }
        if (!(armijo_slope > 0.0 && armijo_slope < 0.5)) {
            throw std::invalid_argument("SolveOptions: armijo_slope must lie in (0,1/2)");
        }
        if (!(damping_init > 0.0) || !(damping_growth > 1.0)) {
            throw std::invalid_argument("SolveOptions: damping_init > 0 and damping_growth > 1 "
                                        "required");
        }
    }
};

/// Thrown when an accepted Newton iterate increases the objective or leaves
/// the open support box. Neither can happen unless the line search is broken.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One minimizing-movement step: action weight 1/(2 tau) and the discrete
/// energy evaluated at the last inner time level.
struct ObjectiveSpec {
    double tau = 1.0;
    double epsilon = 1e-8;
    MobilitySpec mobility;
    EnergyForm energy;
    PotentialSamples potential;
    GridSpec grid;
    Eigen::VectorXd init_row;

    static ObjectiveSpec make(double tau, double epsilon, MobilitySpec mobility, EnergyForm energy,
                              GridSpec grid, Eigen::VectorXd init_row)
    {
        auto samples = sample_potential(energy, grid);
        return {tau,  epsilon, std::move(mobility), std::move(energy), std::move(samples),
                grid, std::move(init_row)};
    }
};

struct SolveResult {
    Eigen::MatrixXd w;
    Eigen::MatrixXd u;
    double objective = infinity;
    double action_part = infinity;
    double energy_part = infinity;
    int iterations = 0;
    double grad_norm = infinity;
    bool converged = false;
    bool damping_used = false;

    /// Fluxes without the pinned first column, row-major by inner time level.
    Eigen::VectorXd free_fluxes() const
    {
        const auto nt = w.rows();
        const auto m = w.cols() - 1;
        Eigen::VectorXd x(nt * m);
        for (Eigen::Index i = 0; i < nt; ++i) x.segment(i * m, m) = w.row(i).tail(m).transpose();
        return x;
    }
};

/// Functional of the final inner density row u(1).
template <class T>
concept TerminalFunctional = requires(const T& t, const Eigen::VectorXd& u) {
    { t.value(u) } -> std::convertible_to<double>;
    { t.derivatives(u) } -> std::same_as<EnergyDerivatives>;
};

struct EnergyTerminal {
    EnergyForm form;
    GridSpec grid;
    PotentialSamples samples;

    double value(const Eigen::VectorXd& u) const { return discrete_energy(form, grid, samples, u); }
    EnergyDerivatives derivatives(const Eigen::VectorXd& u) const
    {
        return discrete_energy_grad_hess(form, grid, samples, u);
    }
};

/// (1/(2 eta)) dx sum (u_j - target_j)^2
struct PenaltyTerminal {
    Eigen::VectorXd target;
    double eta = 1e-2;
    double dx = 1.0;

    double value(const Eigen::VectorXd& u) const
    {
        return 0.5 / eta * dx * (u - target).squaredNorm();
    }
    EnergyDerivatives derivatives(const Eigen::VectorXd& u) const
    {
        const auto n = u.size();
        return {dx / eta * (u - target),
                {Eigen::VectorXd::Constant(n, dx / eta), Eigen::VectorXd::Zero(std::max<Eigen::Index>(n - 1, 0))}};
    }
};

struct ObjectiveValue {
    double total = infinity;
    double action = infinity;  // weighted action sum
    double terminal = infinity;
};

/// weight * dt dx sum_{i,j} phi_eps(u_ij, w_ij) + terminal(u(1)) as a function
/// of the free fluxes. The densities are eliminated through the continuity
/// equation, so every flux vector corresponds to exactly one admissible pair.
template <TerminalFunctional Terminal>
class ReducedObjective {
public:
    ReducedObjective(MobilitySpec mobility, double epsilon, GridSpec grid,
                     Eigen::VectorXd init_row, double action_weight, Terminal terminal)
        : mobility_(std::move(mobility)),
          params_{epsilon},
          grid_(grid),
          init_row_(std::move(init_row)),
          weight_(action_weight * grid.dt() * grid.dx()),
          terminal_(std::move(terminal))
    {
        if (init_row_.size() != grid_.nx) {
            throw std::invalid_argument("ReducedObjective: init_row must have length nx");
        }
        if (grid_.nx < 2) throw std::invalid_argument("ReducedObjective: need at least two cells");
    }

    int size() const { return grid_.free_fluxes(); }
    const GridSpec& grid() const { return grid_; }
    const MobilitySpec& mobility() const { return mobility_; }
    const Eigen::VectorXd& init_row() const { return init_row_; }

    Eigen::MatrixXd embed(const Eigen::VectorXd& free) const
    {
        check_size(free);
        const int m = grid_.nx - 1;
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(grid_.nt, grid_.nx);
        for (int i = 0; i < grid_.nt; ++i) w.row(i).tail(m) = free.segment(i * m, m).transpose();
        return w;
    }

    Eigen::MatrixXd densities(const Eigen::VectorXd& free) const
    {
        return march_density(init_row_, embed(free), grid_);
    }

    /// Change of the densities along a flux direction (the map is affine).
    Eigen::MatrixXd density_change(const Eigen::VectorXd& direction) const
    {
        return march_density(Eigen::VectorXd::Zero(grid_.nx), embed(direction), grid_);
    }

    ObjectiveValue evaluate(const Eigen::VectorXd& free) const
    {
        const Eigen::MatrixXd w = embed(free);
        const Eigen::MatrixXd u = march_density(init_row_, w, grid_);
        double action = 0.0;
        for (int i = 0; i < grid_.nt; ++i) {
            for (int j = 0; j < grid_.nx; ++j) {
                if (!mobility_.in_domain(u(i, j))) return {};
                action += action_density(mobility_, params_, u(i, j), w(i, j));
            }
        }
        action *= weight_;
        const double term = terminal_.value(u.row(grid_.nt - 1).transpose());
        if (!std::isfinite(term)) return {};
        return {action + term, action, term};
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& free) const
    {
        const Eigen::MatrixXd w = embed(free);
        const Eigen::MatrixXd u = march_density(init_row_, w, grid_);
        const int nt = grid_.nt;
        const int nx = grid_.nx;
        const int m = nx - 1;
        const double ratio = grid_.dt() / grid_.dx();

        Eigen::MatrixXd du(nt, nx);  // d objective / d u_ij
        Eigen::MatrixXd dw(nt, nx);  // explicit d objective / d w_ij
        for (int i = 0; i < nt; ++i) {
            for (int j = 0; j < nx; ++j) {
                const auto a = derivatives_at(u(i, j), w(i, j));
                du(i, j) = weight_ * a.gradient[0];
                dw(i, j) = weight_ * a.gradient[1];
            }
        }
        du.row(nt - 1) += terminal_.derivatives(u.row(nt - 1).transpose()).gradient.transpose();

        Eigen::VectorXd g(size());
        Eigen::RowVectorXd suffix = Eigen::RowVectorXd::Zero(nx);
        for (int i = nt - 1; i >= 0; --i) {
            suffix += du.row(i);
            for (int a = 1; a <= m; ++a) {
                g[i * m + a - 1] = dw(i, a) + ratio * (suffix[a] - suffix[a - 1]);
            }
        }
        return g;
    }

    Eigen::MatrixXd hessian(const Eigen::VectorXd& free) const
    {
        const Eigen::MatrixXd w = embed(free);
        const Eigen::MatrixXd u = march_density(init_row_, w, grid_);
        const int nt = grid_.nt;
        const int nx = grid_.nx;
        const int m = nx - 1;
        const int n = size();
        const double ratio = grid_.dt() / grid_.dx();
        const double r2 = ratio * ratio;

        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
        // cumulative[i] collects the density-density curvature of all levels >= i,
        // expressed in free-flux columns
        std::vector<Eigen::MatrixXd> cumulative(nt, Eigen::MatrixXd::Zero(m, m));

        const auto terminal = terminal_.derivatives(u.row(nt - 1).transpose());
        Eigen::MatrixXd& last = cumulative[nt - 1];
        for (int j = 0; j < nx; ++j) {
            add_coupled(last, j, j, terminal.hessian.diag[j]);
            if (j + 1 < nx) {
                add_coupled(last, j, j + 1, terminal.hessian.off[j]);
                add_coupled(last, j + 1, j, terminal.hessian.off[j]);
            }
        }

        for (int i = nt - 1; i >= 0; --i) {
            if (i + 1 < nt) cumulative[i] = cumulative[i + 1];
            for (int j = 0; j < nx; ++j) {
                const auto a = derivatives_at(u(i, j), w(i, j));
                add_coupled(cumulative[i], j, j, weight_ * a.hessian(0, 0));
                if (j == 0) continue;
                const int col = i * m + j - 1;
                h(col, col) += weight_ * a.hessian(1, 1);
                // mixed term: u_ij depends on columns j (+ratio) and j+1 (-ratio)
                // of every level i' <= i
                const double mixed = weight_ * ratio * a.hessian(0, 1);
                for (int ip = 0; ip <= i; ++ip) {
                    for (auto [fc, sign] : faces(j)) {
                        const int row = ip * m + fc - 1;
                        h(row, col) += sign * mixed;
                        h(col, row) += sign * mixed;
                    }
                }
            }
        }
        for (int ip = 0; ip < nt; ++ip) {
            for (int iq = 0; iq < nt; ++iq) {
                h.block(ip * m, iq * m, m, m) += r2 * cumulative[std::max(ip, iq)];
            }
        }
        return h;
    }

private:
    void check_size(const Eigen::VectorXd& free) const
    {
        if (free.size() != size()) {
            throw std::invalid_argument("flux vector has length " + std::to_string(free.size()) +
                                        ", expected " + std::to_string(size()));
        }
    }

    ActionDerivatives derivatives_at(double z, double v) const
    {
        if (!mobility_.in_domain(z)) {
            throw std::domain_error("objective derivatives requested at an infeasible point");
        }
        return action_grad_hess(mobility_, params_, z, v);
    }

    /// Free flux columns entering cell j, with the sign of d u_j / d w.
    std::vector<std::pair<int, double>> faces(int j) const
    {
        std::vector<std::pair<int, double>> f;
        if (j >= 1) f.emplace_back(j, 1.0);
        if (j + 1 <= grid_.nx - 1) f.emplace_back(j + 1, -1.0);
        return f;
    }

    void add_coupled(Eigen::MatrixXd& c, int j, int k, double value) const
    {
        if (value == 0.0) return;
        for (auto [a, sa] : faces(j)) {
            for (auto [b, sb] : faces(k)) c(a - 1, b - 1) += sa * sb * value;
        }
    }

    MobilitySpec mobility_;
    ActionParams params_;
    GridSpec grid_;
    Eigen::VectorXd init_row_;
    double weight_;
    Terminal terminal_;
};

namespace detail {

struct NewtonOutcome {
    Eigen::VectorXd x;
    ObjectiveValue value;
    int iterations = 0;
    double grad_norm = infinity;
    bool converged = false;
    bool damping_used = false;
};

/// Largest step along d keeping every density inside (0, M).
inline double max_feasible_step(const Eigen::MatrixXd& u, const Eigen::MatrixXd& du, double max)
{
    double step = infinity;
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        const double d = du.data()[k];
        const double v = u.data()[k];
        if (d < 0.0) {
            step = std::min(step, v / -d);
        } else if (d > 0.0 && std::isfinite(max)) {
            step = std::min(step, (max - v) / d);
        }
    }
    return step;
}

template <TerminalFunctional Terminal>
NewtonOutcome newton_minimize(const ReducedObjective<Terminal>& obj, const SolveOptions& opts,
                              Eigen::VectorXd x)
{
    opts.validate();
    constexpr double round_off = std::numeric_limits<double>::epsilon();
    const double max = obj.mobility().support_bound();
    NewtonOutcome out;
    out.value = obj.evaluate(x);
    if (!std::isfinite(out.value.total)) {
        throw std::invalid_argument("newton_minimize: starting point is infeasible");
    }

    const int n = obj.size();
    Eigen::MatrixXd damped(n, n);
    int stalls = 0;
    double last_noise_grad = infinity;
    for (;;) {
        const Eigen::VectorXd g = obj.gradient(x);
        out.grad_norm = n > 0 ? g.lpNorm<Eigen::Infinity>() : 0.0;
        const double f = out.value.total;
        if (out.grad_norm <= opts.grad_tol_abs + opts.grad_tol_rel * std::abs(f)) {
            out.converged = true;
            break;
        }
        if (out.iterations >= opts.max_iter) break;

        const Eigen::MatrixXd h = obj.hessian(x);
        const double scale = std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
        double lambda = 0.0;
        Eigen::VectorXd d;
        for (;;) {
            damped = h;
            damped.diagonal().array() += lambda;
            Eigen::LLT<Eigen::MatrixXd> llt(damped);
            if (llt.info() == Eigen::Success) {
                d = llt.solve(-g);
                if (d.allFinite() && g.dot(d) < 0.0) break;
            }
            lambda = lambda == 0.0 ? opts.damping_init * scale : lambda * opts.damping_growth;
            out.damping_used = true;
            if (lambda > 1e30 * scale) {
                d = -g;  // steepest descent as a last resort
                break;
            }
        }

        const double slope = g.dot(d);
        const Eigen::MatrixXd u = obj.densities(x);
        double alpha = std::min(1.0, opts.fraction_to_boundary *
                                         max_feasible_step(u, obj.density_change(d), max));
        // Below this predicted decrease objective differences are round-off,
        // and the gradient norm takes over as the merit function. The summands
        // of f are O(1) even when f is small, hence the floor.
        const double noise_band = 16.0 * round_off * std::max(std::abs(f), 1.0);
        const bool noise_level = std::abs(slope) <= noise_band;
        bool accepted = false;
        ObjectiveValue trial;
        Eigen::VectorXd candidate;
        for (int bt = 0; bt < 80 && alpha > 0.0; ++bt, alpha *= opts.backtrack_factor) {
            candidate = x + alpha * d;
            trial = obj.evaluate(candidate);
            if (!std::isfinite(trial.total)) continue;
            if (trial.total <= f + opts.armijo_slope * alpha * slope ||
                (noise_level && trial.total <= f + noise_band &&
                 obj.gradient(candidate).template lpNorm<Eigen::Infinity>() < out.grad_norm)) {
                accepted = true;
                break;
            }
        }
        ++out.iterations;
        if (!accepted) break;  // no representable decrease left
        // Steps below the noise level are judged by the gradient they leave
        // behind; a few without progress mean round-off has the last word.
        if (noise_level) {
            stalls = out.grad_norm < 0.5 * last_noise_grad ? 0 : stalls + 1;
            last_noise_grad = std::min(last_noise_grad, out.grad_norm);
        }

        if (trial.total > f + noise_band) {
            throw SolverError("objective increased along an accepted step");
        }
        const Eigen::MatrixXd un = obj.densities(candidate);
        for (Eigen::Index k = 0; k < un.size(); ++k) {
            if (!obj.mobility().in_domain(un.data()[k])) {
                throw SolverError("accepted iterate left the open support interval");
            }
        }
        x = std::move(candidate);
        out.value = trial;
        if (stalls >= 3) break;
    }
    out.x = std::move(x);
    return out;
}

template <TerminalFunctional Terminal>
SolveResult make_result(const ReducedObjective<Terminal>& obj, NewtonOutcome&& o)
{
    SolveResult r;
    r.w = obj.embed(o.x);
    r.u = march_density(obj.init_row(), r.w, obj.grid());
    r.objective = o.value.total;
    r.action_part = o.value.action;
    r.energy_part = o.value.terminal;
    r.iterations = o.iterations;
    r.grad_norm = o.grad_norm;
    r.converged = o.converged;
    r.damping_used = o.damping_used;
    return r;
}

inline ReducedObjective<EnergyTerminal> step_objective(const ObjectiveSpec& spec)
{
    if (!(spec.tau > 0.0)) throw std::invalid_argument("ObjectiveSpec: tau must be positive");
    for (Eigen::Index j = 0; j < spec.init_row.size(); ++j) {
        if (!spec.mobility.in_domain(spec.init_row[j])) {
            throw std::invalid_argument("ObjectiveSpec: init_row entry " + std::to_string(j) +
                                        " is not strictly inside (0, M)");
        }
    }
    return {spec.mobility,
            spec.epsilon,
            spec.grid,
            spec.init_row,
            0.5 / spec.tau,
            EnergyTerminal{spec.energy, spec.grid, spec.potential}};
}

}  // namespace detail

inline ObjectiveValue objective_parts(const ObjectiveSpec& spec, const Eigen::VectorXd& w_free)
{
    return detail::step_objective(spec).evaluate(w_free);
}

/// Step objective; +infinity when a density leaves (0, M).
inline double objective_eval(const ObjectiveSpec& spec, const Eigen::VectorXd& w_free)
{
    return objective_parts(spec, w_free).total;
}

inline Eigen::VectorXd objective_grad(const ObjectiveSpec& spec, const Eigen::VectorXd& w_free)
{
    return detail::step_objective(spec).gradient(w_free);
}

inline Eigen::MatrixXd objective_hess(const ObjectiveSpec& spec, const Eigen::VectorXd& w_free)
{
    return detail::step_objective(spec).hessian(w_free);
}

/// Damped Newton on the free fluxes. The warm start is used only when it is
/// feasible and not worse than the zero flux, so the result never loses
/// against the zero-flux competitor.
inline SolveResult solve_step(const ObjectiveSpec& spec, const SolveOptions& opts = {},
                              const std::optional<Eigen::VectorXd>& warm_start = std::nullopt)
{
    const auto obj = detail::step_objective(spec);
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(obj.size());
    if (warm_start && warm_start->size() == obj.size()) {
        const double f0 = obj.evaluate(x0).total;
        const double fw = obj.evaluate(*warm_start).total;
        if (std::isfinite(fw) && fw <= f0) x0 = *warm_start;
    }
    return detail::make_result(obj, detail::newton_minimize(obj, opts, std::move(x0)));
}

struct DistanceOptions {
    std::vector<double> penalty_schedule{1e-2, 1e-4, 1e-6};
    // The penalty gradient is (dx/eta)(u - to); 1e-8 still resolves the
    // terminal mismatch far below 1e-10 at eta = 1e-6, while the default
    // step tolerance sits under the round-off floor of that term.
    SolveOptions solver{.grad_tol_abs = 1e-8};
    double mass_tolerance = 1e-10;
};

struct DistanceEstimate {
    double value = infinity;             // sqrt of the minimized action
    double action = infinity;            // dt dx sum phi_eps
    double terminal_mismatch = infinity; // max_j |u(1)_j - to_j|
    bool converged = false;
    SolveResult path;
};

/// Generalized Wasserstein distance between two discrete profiles, via the
/// minimal action of a path whose end is pulled onto `to` by a quadratic
/// penalty with decreasing weight eta.
inline DistanceEstimate estimate_distance(const MobilitySpec& mobility, const GridSpec& grid,
                                          double epsilon, const Eigen::VectorXd& from,
                                          const Eigen::VectorXd& to,
                                          const DistanceOptions& opts = {})
{
    if (from.size() != grid.nx || to.size() != grid.nx) {
        throw std::invalid_argument("estimate_distance: profiles must have length nx");
    }
    for (Eigen::Index j = 0; j < from.size(); ++j) {
        if (!mobility.in_domain(from[j]) || !mobility.in_domain(to[j])) {
            throw std::invalid_argument("estimate_distance: profiles must lie strictly inside "
                                        "(0, M)");
        }
    }
    const double mf = discrete_mass(from, grid.dx());
    const double mt = discrete_mass(to, grid.dx());
    if (std::abs(mf - mt) > opts.mass_tolerance * std::max(1.0, std::abs(mf))) {
        throw std::invalid_argument("estimate_distance: profiles carry different mass");
    }
    if (opts.penalty_schedule.empty()) {
        throw std::invalid_argument("estimate_distance: empty penalty schedule");
    }

    DistanceEstimate est;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(grid.free_fluxes());
    bool all_converged = true;
    for (double eta : opts.penalty_schedule) {
        ReducedObjective<PenaltyTerminal> obj(mobility, epsilon, grid, from, 1.0,
                                              PenaltyTerminal{to, eta, grid.dx()});
        auto outcome = detail::newton_minimize(obj, opts.solver, x);
        all_converged = all_converged && outcome.converged;
        x = outcome.x;
        est.path = detail::make_result(obj, std::move(outcome));
    }
    est.action = est.path.action_part;
    est.value = std::sqrt(est.action);
    est.terminal_mismatch =
        (est.path.u.row(grid.nt - 1).transpose() - to).lpNorm<Eigen::Infinity>();
    est.converged = all_converged;
    return est;
}

}  // namespace jkoflow
