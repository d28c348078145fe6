#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

namespace jkoflow {

/// Equidistant space-time lattice over [0,1] x [0,1]. Only the counts are
/// stored so that dt * nt == 1 and dx * nx == 1 hold by construction.
struct GridSpec {
    int nt = 1;
    int nx = 1;

    GridSpec() = default;
    GridSpec(int time_cells, int space_cells) : nt(time_cells), nx(space_cells)
    {
        if (nt < 1 || nx < 1) {
            throw std::invalid_argument("GridSpec: cell counts must be positive (got nt=" +
                                        std::to_string(nt) + ", nx=" + std::to_string(nx) + ")");
        }
    }

    double dt() const { return 1.0 / nt; }
    double dx() const { return 1.0 / nx; }
    /// Number of free fluxes once the first column is pinned to zero.
    int free_fluxes() const { return nt * (nx - 1); }
    double cell_center(int j) const { return (j + 0.5) * dx(); }

    bool operator==(const GridSpec&) const = default;
};

/// Densities and fluxes of one inner time-stepping problem. Rows are inner
/// time levels, columns are cells; w.col(0) is identically zero.
struct StepState {
    Eigen::VectorXd init_row;
    Eigen::MatrixXd w;
    Eigen::MatrixXd u;
};

/// Initial datum given by equally spaced samples on [0,1], interpolated
/// piecewise linearly.
struct SampledProfile {
    std::vector<double> values;

    double operator()(double x) const
    {
        const auto n = static_cast<int>(values.size());
        if (n == 1) return values.front();
        const double s = std::clamp(x, 0.0, 1.0) * (n - 1);
        const int k = std::min(static_cast<int>(s), n - 2);
        const double t = s - k;
        return (1.0 - t) * values[k] + t * values[k + 1];
    }
};

/// Cell averages (1/dx) * integral over each cell, by 16-point Gauss-Legendre
/// quadrature per cell.
template <std::invocable<double> Profile>
    requires(!std::same_as<std::remove_cvref_t<Profile>, SampledProfile>)
Eigen::VectorXd cell_average(Profile&& profile, int nx)
{
    if (nx < 1) throw std::invalid_argument("cell_average: nx must be positive");
    const double dx = 1.0 / nx;
    Eigen::VectorXd avg(nx);
    for (int j = 0; j < nx; ++j) {
        avg[j] = boost::math::quadrature::gauss<double, 16>::integrate(
                     [&](double x) { return static_cast<double>(profile(x)); }, j * dx,
                     (j + 1) * dx) /
                 dx;
    }
    return avg;
}

/// Exact cell averages of the piecewise linear interpolant of a table.
inline Eigen::VectorXd cell_average(const SampledProfile& table, int nx)
{
    if (nx < 1) throw std::invalid_argument("cell_average: nx must be positive");
    const auto n = static_cast<int>(table.values.size());
    if (n == 0) throw std::invalid_argument("cell_average: empty table");
    if (n == 1) return Eigen::VectorXd::Constant(nx, table.values.front());

    const double h = 1.0 / (n - 1);
    // integral of the interpolant from 0 to x
    auto primitive = [&](double x) {
        const double s = x / h;
        const int k = std::min(static_cast<int>(s), n - 2);
        double acc = 0.0;
        for (int i = 0; i < k; ++i) acc += 0.5 * h * (table.values[i] + table.values[i + 1]);
        const double t = s - k;
        const double a = table.values[k];
        const double b = table.values[k + 1];
        return acc + h * (a * t + 0.5 * (b - a) * t * t);
    };
    const double dx = 1.0 / nx;
    Eigen::VectorXd avg(nx);
    double left = 0.0;
    for (int j = 0; j < nx; ++j) {
        const double right = primitive(std::min(1.0, (j + 1) * dx));
        avg[j] = (right - left) / dx;
        left = right;
    }
    return avg;
}

namespace detail {

inline void check_regularization(double eps, double max)
{
    if (!(eps > 0.0 && eps < 1.0)) {
        throw std::invalid_argument("regularization: epsilon must lie in (0,1)");
    }
    if (std::isfinite(max) && !(eps < 0.5 * max)) {
        throw std::invalid_argument("regularization: epsilon must be below M/2");
    }
}

}  // namespace detail

/// Shift cell averages strictly into (0, M): u + eps, or u + eps (1 - 2u/M)
/// for a finite support bound.
inline Eigen::VectorXd regularize_initial(const Eigen::VectorXd& averages, double eps, double max)
{
    detail::check_regularization(eps, max);
    const bool bounded = std::isfinite(max);
    Eigen::VectorXd out(averages.size());
    for (Eigen::Index j = 0; j < averages.size(); ++j) {
        const double a = averages[j];
        if (!(a >= 0.0) || (bounded && a > max)) {
            throw std::invalid_argument("regularize_initial: entry " + std::to_string(j) +
                                        " = " + std::to_string(a) + " outside [0, M]");
        }
        out[j] = bounded ? a + eps * (1.0 - 2.0 * a / max) : a + eps;
    }
    return out;
}

struct Deregularized {
    Eigen::VectorXd values;
    /// Sum over cells of |clamped - unclamped|.
    double clamped = 0.0;
};

/// Inverse of regularize_initial, clamped to [0, M].
inline Deregularized deregularize(const Eigen::VectorXd& u, double eps, double max)
{
    detail::check_regularization(eps, max);
    const bool bounded = std::isfinite(max);
    Deregularized out{Eigen::VectorXd(u.size()), 0.0};
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        const double raw = bounded ? (u[j] - eps) / (1.0 - 2.0 * eps / max) : u[j] - eps;
        const double kept = std::clamp(raw, 0.0, max);
        out.clamped += std::abs(kept - raw);
        out.values[j] = kept;
    }
    return out;
}

namespace detail {

inline void check_shapes(const Eigen::VectorXd& init_row, const Eigen::MatrixXd& w,
                         const GridSpec& grid)
{
    if (init_row.size() != grid.nx || w.rows() != grid.nt || w.cols() != grid.nx) {
        throw std::invalid_argument("shape mismatch: expected init_row of length " +
                                    std::to_string(grid.nx) + " and w of shape " +
                                    std::to_string(grid.nt) + "x" + std::to_string(grid.nx));
    }
}

}  // namespace detail

/// Solve the discrete continuity equation for u given the fluxes. Cell j
/// loses w(i, j+1) - w(i, j) per inner step; the index wraps so that the last
/// cell sees w(i, 0) on its right.
inline Eigen::MatrixXd march_density(const Eigen::VectorXd& init_row, const Eigen::MatrixXd& w,
                                     const GridSpec& grid)
{
    detail::check_shapes(init_row, w, grid);
    const double ratio = grid.dt() / grid.dx();
    const int nx = grid.nx;
    Eigen::MatrixXd u(grid.nt, nx);
    for (int i = 0; i < grid.nt; ++i) {
        for (int j = 0; j < nx; ++j) {
            const double prev = i == 0 ? init_row[j] : u(i - 1, j);
            const int right = j + 1 == nx ? 0 : j + 1;
            u(i, j) = prev - ratio * (w(i, right) - w(i, j));
        }
    }
    return u;
}

/// Largest absolute residual over all continuity equations, including the
/// pinned first flux column.
inline double ce_residual(const Eigen::VectorXd& init_row, const Eigen::MatrixXd& u,
                          const Eigen::MatrixXd& w, const GridSpec& grid)
{
    detail::check_shapes(init_row, w, grid);
    if (u.rows() != grid.nt || u.cols() != grid.nx) {
        throw std::invalid_argument("shape mismatch: u must be nt x nx");
    }
    const double dt = grid.dt();
    const double dx = grid.dx();
    const int nx = grid.nx;
    double worst = 0.0;
    for (int i = 0; i < grid.nt; ++i) {
        for (int j = 0; j < nx; ++j) {
            const double prev = i == 0 ? init_row[j] : u(i - 1, j);
            const int right = j + 1 == nx ? 0 : j + 1;
            const double r = (u(i, j) - prev) * dx + (w(i, right) - w(i, j)) * dt;
            worst = std::max(worst, std::abs(r));
        }
        worst = std::max(worst, std::abs(w(i, 0)));
    }
    return worst;
}

/// dx * sum_j values_j with compensated summation.
inline double discrete_mass(const Eigen::VectorXd& values, double dx)
{
    double sum = 0.0;
    double carry = 0.0;
    for (Eigen::Index j = 0; j < values.size(); ++j) {
        const double y = values[j] - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    return dx * sum;
}

}  // namespace jkoflow
