#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "grid.hpp"
#include "mobility.hpp"

namespace jkoflow {

// Internal energy densities E(z).

struct NoInternal {};

/// z log z - z + 1, extended by continuity with E(0) = 1.
struct Entropy {};

/// z^q / (q - 1), q > 1.
struct PowerLawInternal {
    double q = 2.0;
};

/// z^2 (1 - z)^2. Not convex; admitted for phase separation runs.
struct DoubleWell {};

struct CustomInternal {
    std::function<double(double)> e;
    std::function<double(double)> de;
    std::function<double(double)> d2e;
    bool convex = true;
};

using InternalEnergy =
    std::variant<NoInternal, Entropy, PowerLawInternal, DoubleWell, CustomInternal>;

// External potentials V(x) on [0,1].

struct ZeroPotential {};

/// a (x - center)^2
struct QuadraticPotential {
    double a = 0.0;
    double center = 0.5;
};

/// Equally spaced samples on [0,1], piecewise linear in between.
struct TablePotential {
    std::vector<double> values;
};

using Potential = std::variant<ZeroPotential, QuadraticPotential, TablePotential>;

// Gradient energy densities G(p).

struct NoGradient {};

/// theta p^2 / 2
struct QuadraticDirichlet {
    double theta = 1.0;
};

struct CustomGradient {
    std::function<double(double)> g;
    std::function<double(double)> dg;
    std::function<double(double)> d2g;
    double convexity_modulus = 0.0;
};

using GradientEnergy = std::variant<NoGradient, QuadraticDirichlet, CustomGradient>;

struct EnergyForm {
    InternalEnergy internal = NoInternal{};
    Potential potential = ZeroPotential{};
    GradientEnergy gradient = NoGradient{};

    /// Convex internal part and convex (or absent) gradient part.
    bool is_convex() const
    {
        if (std::holds_alternative<DoubleWell>(internal)) return false;
        if (auto* c = std::get_if<CustomInternal>(&internal); c && !c->convex) return false;
        return true;
    }
};

struct PotentialSamples {
    Eigen::VectorXd values;
};

struct ScalarDerivatives {
    double value;
    double first;
    double second;
};

/// E, E', E'' at z. Returns value +infinity where E is undefined (z < 0 for
/// the logarithmic and power-law kinds); derivatives at z = 0 may be infinite.
inline ScalarDerivatives internal_eval(const InternalEnergy& internal, double z)
{
    return std::visit(
        [z](const auto& k) -> ScalarDerivatives {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, NoInternal>) {
                return {0.0, 0.0, 0.0};
            } else if constexpr (std::is_same_v<K, Entropy>) {
                if (z < 0.0) return {infinity, infinity, infinity};
                if (z == 0.0) return {1.0, -infinity, infinity};
                return {z * std::log(z) - z + 1.0, std::log(z), 1.0 / z};
            } else if constexpr (std::is_same_v<K, PowerLawInternal>) {
                if (z < 0.0) return {infinity, infinity, infinity};
                const double q = k.q;
                return {std::pow(z, q) / (q - 1.0), q / (q - 1.0) * std::pow(z, q - 1.0),
                        q * std::pow(z, q - 2.0)};
            } else if constexpr (std::is_same_v<K, DoubleWell>) {
                const double y = 1.0 - z;
                return {z * z * y * y, 2.0 * z * y * (1.0 - 2.0 * z),
                        2.0 - 12.0 * z + 12.0 * z * z};
            } else {
                return {k.e(z), k.de(z), k.d2e(z)};
            }
        },
        internal);
}

inline ScalarDerivatives gradient_eval(const GradientEnergy& gradient, double p)
{
    return std::visit(
        [p](const auto& k) -> ScalarDerivatives {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, NoGradient>) {
                return {0.0, 0.0, 0.0};
            } else if constexpr (std::is_same_v<K, QuadraticDirichlet>) {
                return {0.5 * k.theta * p * p, k.theta * p, k.theta};
            } else {
                return {k.g(p), k.dg(p), k.d2g(p)};
            }
        },
        gradient);
}

inline double potential_eval(const Potential& potential, double x)
{
    return std::visit(
        [x](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ZeroPotential>) {
                return 0.0;
            } else if constexpr (std::is_same_v<K, QuadraticPotential>) {
                return k.a * (x - k.center) * (x - k.center);
            } else {
                return SampledProfile{k.values}(x);
            }
        },
        potential);
}

/// Left-endpoint samples V((j-1) dx), j = 1..nx.
inline PotentialSamples sample_potential(const EnergyForm& form, const GridSpec& grid)
{
    if (auto* t = std::get_if<TablePotential>(&form.potential); t && t->values.empty()) {
        throw std::invalid_argument("sample_potential: empty potential table");
    }
    PotentialSamples s{Eigen::VectorXd(grid.nx)};
    for (int j = 0; j < grid.nx; ++j) s.values[j] = potential_eval(form.potential, j * grid.dx());
    return s;
}

/// Symmetric tridiagonal matrix stored by its two nonzero diagonals.
struct SymTridiagonal {
    Eigen::VectorXd diag;
    Eigen::VectorXd off;  // off[j] couples j and j+1

    Eigen::MatrixXd to_dense() const
    {
        const auto n = diag.size();
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
        d.diagonal() = diag;
        for (Eigen::Index j = 0; j + 1 < n; ++j) d(j, j + 1) = d(j + 1, j) = off[j];
        return d;
    }
};

struct EnergyDerivatives {
    Eigen::VectorXd gradient;
    SymTridiagonal hessian;
};

namespace detail {

inline void check_profile(const Eigen::VectorXd& u, const GridSpec& grid,
                          const PotentialSamples& samples)
{
    if (u.size() != grid.nx || samples.values.size() != grid.nx) {
        throw std::invalid_argument("discrete energy: profile and potential samples must have "
                                    "length nx");
    }
}

}  // namespace detail

/// dx sum E(u_j) + dx sum V_j u_j + dx sum G((u_{j+1} - u_j)/dx).
inline double discrete_energy(const EnergyForm& form, const GridSpec& grid,
                              const PotentialSamples& samples, const Eigen::VectorXd& u)
{
    detail::check_profile(u, grid, samples);
    const double dx = grid.dx();
    const bool has_internal = !std::holds_alternative<NoInternal>(form.internal);
    const bool has_gradient = !std::holds_alternative<NoGradient>(form.gradient);
    double total = 0.0;
    for (int j = 0; j < grid.nx; ++j) {
        if (has_internal) {
            const double e = internal_eval(form.internal, u[j]).value;
            if (is_infinite(e)) return infinity;
            total += e;
        }
        total += samples.values[j] * u[j];
        if (has_gradient && j + 1 < grid.nx) {
            total += gradient_eval(form.gradient, (u[j + 1] - u[j]) / dx).value;
        }
    }
    return dx * total;
}

inline EnergyDerivatives discrete_energy_grad_hess(const EnergyForm& form, const GridSpec& grid,
                                                   const PotentialSamples& samples,
                                                   const Eigen::VectorXd& u)
{
    detail::check_profile(u, grid, samples);
    const int n = grid.nx;
    const double dx = grid.dx();
    EnergyDerivatives d{Eigen::VectorXd::Zero(n),
                        {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(std::max(n - 1, 0))}};
    const bool has_internal = !std::holds_alternative<NoInternal>(form.internal);
    for (int j = 0; j < n; ++j) {
        double de = 0.0;
        double d2e = 0.0;
        if (has_internal) {
            const auto e = internal_eval(form.internal, u[j]);
            if (is_infinite(e.value) || !std::isfinite(e.first) || !std::isfinite(e.second)) {
                throw std::domain_error("discrete_energy_grad_hess: profile outside the domain "
                                        "of the internal energy");
            }
            de = e.first;
            d2e = e.second;
        }
        d.gradient[j] += dx * (de + samples.values[j]);
        d.hessian.diag[j] += dx * d2e;
    }
    if (!std::holds_alternative<NoGradient>(form.gradient)) {
        for (int j = 0; j + 1 < n; ++j) {
            const auto g = gradient_eval(form.gradient, (u[j + 1] - u[j]) / dx);
            d.gradient[j] -= g.first;
            d.gradient[j + 1] += g.first;
            d.hessian.diag[j] += g.second / dx;
            d.hessian.diag[j + 1] += g.second / dx;
            d.hessian.off[j] -= g.second / dx;
        }
    }
    return d;
}

}  // namespace jkoflow
