#pragma once

// Standard normal density, tail and quantile functions.
//
// The upper tail is evaluated as erfc(x / sqrt(2)) / 2 so that values far in
// the right tail keep full relative precision. Computing 1 - cdf(x) there
// would cancel to zero around x ~ 8.

#include <cmath>
#include <numbers>
#include <string>

#include "dcoe/error.hpp"

namespace dcoe {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_pdf(double x) noexcept {
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

/// Upper tail 1 - Phi(x).
inline double normal_sf(double x) noexcept {
    return 0.5 * std::erfc(x * kInvSqrt2);
}

inline double normal_cdf(double x) noexcept { return normal_sf(-x); }

namespace detail {

// Acklam's rational approximation, relative error ~1e-9 before refinement.
inline double acklam_quantile(double q) noexcept {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    auto tail = [&](double prob) {
        const double r = std::sqrt(-2.0 * std::log(prob));
        return (((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
               ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
    };

    if (q < p_low) return tail(q);
    if (q > 1.0 - p_low) return -tail(1.0 - q);
    const double u = q - 0.5;
    const double r = u * u;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

/// Inverse of the standard normal cdf. Throws Errc::Domain outside (0, 1).
inline double normal_quantile(double q) {
    if (!(q > 0.0 && q < 1.0)) {
        fail(Errc::Domain, "normal_quantile: q must lie in (0,1), got " + std::to_string(q));
    }
    double x = detail::acklam_quantile(q);
    // Halley steps on whichever tail keeps the residual well conditioned.
    for (int iter = 0; iter < 2; ++iter) {
        double err;
        if (q < 0.5) {
            err = normal_cdf(x) - q;
        } else {
            err = (1.0 - q) - normal_sf(x);
        }
        const double u = err * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

}  // namespace dcoe
