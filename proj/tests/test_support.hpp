#pragma once

// Finite-difference oracles and random instance generators shared by the
// test binaries. Nothing here calls into the derivative code under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <type_traits>

#include <Eigen/Dense>

namespace jkoflow::testing {

/// Central difference with step h.
inline double central_diff(const std::function<double(double)>& f, double x, double h)
{
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Five-point central difference along coordinate k of a scalar or vector map.
template <class F, class R = std::invoke_result_t<const F&, const Eigen::VectorXd&>>
R five_point(const F& f, const Eigen::VectorXd& x, Eigen::Index k, double step)
{
    auto at = [&](double s) {
        Eigen::VectorXd y = x;
        y[k] += s * step;
        return R(f(y));
    };
    return ((at(-2) - at(2)) + 8.0 * (at(1) - at(-1))) / (12.0 * step);
}

/// Fourth-order central-difference gradient; step per coordinate h * max(1, |x_k|).
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5)
{
    Eigen::VectorXd g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        g[k] = five_point(f, x, k, h * std::max(1.0, std::abs(x[k])));
    }
    return g;
}

/// Fourth-order central-difference Jacobian of a gradient map, symmetrized.
inline Eigen::MatrixXd fd_hessian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad, const Eigen::VectorXd& x,
    double h = 1e-5)
{
    const auto n = x.size();
    Eigen::MatrixXd hess(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        hess.col(k) = five_point(grad, x, k, h * std::max(1.0, std::abs(x[k])));
    }
    return 0.5 * (hess + hess.transpose());
}

/// ||a - b||_inf / max(||b||_inf, floor)
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                             double floor = 1e-12)
{
    const double scale = std::max(b.cwiseAbs().maxCoeff(), floor);
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline std::mt19937_64& rng()
{
    static std::mt19937_64 gen(20260416);
    return gen;
}

inline double uniform(double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng());
}

inline int uniform_int(int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng());
}

}  // namespace jkoflow::testing
