#pragma once

#include <algorithm>
#include <cmath>

#include "icpvi/errors.hpp"

namespace icpvi::special {

inline constexpr double kIncompleteBetaTol = 1e-12;
inline constexpr int kIncompleteBetaMaxIter = 300;

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace detail {

/// Continued fraction for the regularized incomplete beta, evaluated with the
/// modified Lentz method.
inline double incomplete_beta_cf(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;

    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;

    for (int m = 1; m <= kIncompleteBetaMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;

        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kIncompleteBetaTol) return h;
    }
    throw Error("incomplete beta continued fraction did not converge (a=" + std::to_string(a) +
                ", b=" + std::to_string(b) + ", x=" + std::to_string(x) + ")");
}

} // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete beta requires a > 0 and b > 0");
    if (std::isnan(x)) throw ValidationError("incomplete beta requires x in [0, 1]");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;

    const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * detail::incomplete_beta_cf(a, b, x) / a;
    }
    return 1.0 - front * detail::incomplete_beta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided p-value of a Student-t statistic with df degrees of freedom:
/// P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
inline double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw ValidationError("Student-t p-value requires df > 0");
    if (std::isinf(t)) return 0.0;
    const double x = df / (df + t * t);
    return std::clamp(regularized_incomplete_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

/// Survival function of the F(df1, df2) distribution at f:
/// P(F >= f) = I_{df2/(df2+df1*f)}(df2/2, df1/2).
inline double f_survival(double f, double df1, double df2) {
    if (!(df1 > 0.0) || !(df2 > 0.0)) throw ValidationError("F survival requires positive degrees of freedom");
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    const double x = df2 / (df2 + df1 * f);
    return std::clamp(regularized_incomplete_beta(0.5 * df2, 0.5 * df1, x), 0.0, 1.0);
}

} // namespace icpvi::special
