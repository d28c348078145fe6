#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>

#include <Eigen/Dense>

namespace jkoflow {

/// Extended-real +infinity. Every finite value compares below it.
inline constexpr double infinity = std::numeric_limits<double>::infinity();

inline bool is_infinite(double x) { return x == infinity; }

/// Growth class of a mobility at the upper end of its domain.
enum class MobilityClass {
    Linear,     // m(z) = mbar * z on (0, inf)
    Sublinear,  // m(z)/z -> 0 as z -> inf
    Bounded     // finite support bound M, m(M) = 0
};

struct LinearMobility {
    double mbar = 1.0;
};

struct PowerMobility {
    double c = 1.0;
    double alpha = 0.5;
};

struct BoundedSupportMobility {
    double c = 1.0;
    double alpha1 = 1.0;
    double alpha2 = 1.0;
    double max = 1.0;
};

/// User-supplied mobility. All three derivatives are mandatory; nothing is
/// differentiated numerically.
struct CustomMobility {
    std::function<double(double)> m;
    std::function<double(double)> dm;
    std::function<double(double)> d2m;
    double max = infinity;
    MobilityClass growth = MobilityClass::Sublinear;
};

using MobilityKind =
    std::variant<LinearMobility, PowerMobility, BoundedSupportMobility, CustomMobility>;

struct MobilitySpec {
    MobilityKind kind = LinearMobility{};

    static MobilitySpec linear(double mbar = 1.0) { return {LinearMobility{mbar}}; }
    static MobilitySpec power(double c, double alpha) { return {PowerMobility{c, alpha}}; }
    static MobilitySpec bounded(double c, double alpha1, double alpha2, double max)
    {
        return {BoundedSupportMobility{c, alpha1, alpha2, max}};
    }

    /// Support bound M; +infinity for the unbounded kinds.
    double support_bound() const
    {
        if (auto* b = std::get_if<BoundedSupportMobility>(&kind)) return b->max;
        if (auto* c = std::get_if<CustomMobility>(&kind)) return c->max;
        return infinity;
    }

    MobilityClass classification() const
    {
        if (std::holds_alternative<LinearMobility>(kind)) return MobilityClass::Linear;
        if (std::holds_alternative<PowerMobility>(kind)) return MobilityClass::Sublinear;
        if (std::holds_alternative<BoundedSupportMobility>(kind)) return MobilityClass::Bounded;
        const auto& c = std::get<CustomMobility>(kind);
        return std::isfinite(c.max) ? MobilityClass::Bounded : c.growth;
    }

    bool in_domain(double z) const { return z > 0.0 && z < support_bound(); }
};

struct MobilityValue {
    double m;
    double dm;
    double d2m;
};

/// m, m' and m'' at an interior point z of (0, M).
inline MobilityValue mobility_eval(const MobilitySpec& spec, double z)
{
    if (!spec.in_domain(z)) {
        throw std::domain_error("mobility_eval: z = " + std::to_string(z) +
                                " outside the open support interval");
    }
    return std::visit(
        [z](const auto& k) -> MobilityValue {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, LinearMobility>) {
                return {k.mbar * z, k.mbar, 0.0};
            } else if constexpr (std::is_same_v<K, PowerMobility>) {
                const double p = k.c * std::pow(z, k.alpha);
                return {p, k.alpha * p / z, k.alpha * (k.alpha - 1.0) * p / (z * z)};
            } else if constexpr (std::is_same_v<K, BoundedSupportMobility>) {
                const double y = k.max - z;
                const double a = k.alpha1;
                const double b = k.alpha2;
                const double p = k.c * std::pow(z, a) * std::pow(y, b);
                // derivatives of log m, then m' = m (log m)', m'' = m ((log m)'' + (log m)'^2)
                const double l1 = a / z - b / y;
                const double l2 = -a / (z * z) - b / (y * y);
                return {p, p * l1, p * (l2 + l1 * l1)};
            } else {
                return {k.m(z), k.dm(z), k.d2m(z)};
            }
        },
        spec.kind);
}

/// Sampled check of the structural assumptions on m: positivity on (0, M),
/// vanishing at the endpoints and concavity. Throws std::invalid_argument.
inline void validate_mobility(const MobilitySpec& spec, int samples = 200)
{
    const double big = spec.support_bound();
    const double hi = std::isfinite(big) ? big : 100.0;
    double peak = 0.0;
    for (int s = 1; s < samples; ++s) {
        const double z = hi * s / samples;
        const auto v = mobility_eval(spec, z);
        if (!(v.m > 0.0)) throw std::invalid_argument("mobility is not positive inside its support");
        if (v.d2m > 1e-12 * std::max(1.0, std::abs(v.m) / (z * z))) {
            throw std::invalid_argument("mobility is not concave (m'' > 0 at z = " +
                                        std::to_string(z) + ")");
        }
        peak = std::max(peak, v.m);
    }
    // Endpoint limits: slowly vanishing powers (alpha ~ 0.1) are still small
    // relative to the interior maximum this close to the boundary.
    if (mobility_eval(spec, hi * 1e-200).m > 0.1 * peak) {
        throw std::invalid_argument("mobility does not vanish at 0");
    }
    if (std::isfinite(big) && mobility_eval(spec, big * (1.0 - 0x1p-52)).m > 0.1 * peak) {
        throw std::invalid_argument("mobility does not vanish at M");
    }
}

struct ActionParams {
    double epsilon = 0.0;
};

/// phi_eps(z, v) = (v^2 + eps)/m(z) inside the support. With eps = 0 the
/// boundary points carry 0 when v = 0; everything else is +infinity.
inline double action_density(const MobilitySpec& spec, const ActionParams& params, double z,
                             double v)
{
    if (spec.in_domain(z)) return (v * v + params.epsilon) / mobility_eval(spec, z).m;
    if (params.epsilon == 0.0 && v == 0.0 && (z == 0.0 || z == spec.support_bound())) return 0.0;
    return infinity;
}

struct ActionDerivatives {
    Eigen::Vector2d gradient;  // (d/dz, d/dv)
    Eigen::Matrix2d hessian;
};

inline ActionDerivatives action_grad_hess(const MobilitySpec& spec, const ActionParams& params,
                                          double z, double v)
{
    const auto [m, dm, d2m] = mobility_eval(spec, z);
    const double num = v * v + params.epsilon;
    const double inv = 1.0 / m;
    ActionDerivatives d;
    d.gradient << -num * dm * inv * inv, 2.0 * v * inv;
    const double zz = num * (2.0 * dm * dm - m * d2m) * inv * inv * inv;
    const double zv = -2.0 * v * dm * inv * inv;
    d.hessian << zz, zv, zv, 2.0 * inv;
    return d;
}

/// Recession function of phi. It does not depend on eps.
inline double recession(const MobilitySpec& spec, double z, double v)
{
    if (z < 0.0) throw std::domain_error("recession: z must be nonnegative");
    switch (spec.classification()) {
    case MobilityClass::Linear:
        return action_density(spec, ActionParams{0.0}, z, v);
    case MobilityClass::Sublinear:
        return v == 0.0 ? 0.0 : infinity;
    case MobilityClass::Bounded:
        return (z == 0.0 && v == 0.0) ? 0.0 : infinity;
    }
    return infinity;
}

}  // namespace jkoflow
