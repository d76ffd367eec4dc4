#pragma once

#include <cmath>

#include "ulab/common.hpp"

namespace ulab {

// Logistic sigmoid evaluated without overflow on either tail.
inline double stable_sigmoid(double z) {
    if (z >= 0.0) {
        double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^x), overflow-free. For large x this is x + e^{-x} up to rounding.
inline double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double softplus_deriv(double x) { return stable_sigmoid(x); }

// Inverse of softplus: y > 0 -> x with softplus(x) == y.
inline double softplus_inv(double y) {
    if (y <= 0.0) throw InputError("softplus_inv: argument must be positive");
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

inline double norm_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014326779399461;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double norm_cdf(double z) {
    return 0.5 * std::erfc(-z * 0.7071067811865475244008444);
}

// Inverse standard normal CDF. Acklam's rational approximation gives ~1e-9
// absolute error; two Newton corrections against erfc-based norm_cdf push
// the result to full double precision. Exact 0 at q = 0.5 by symmetry of
// the central branch.
inline double probit(double q) {
    if (!(q > 0.0 && q < 1.0)) throw InputError("probit: argument must be in (0, 1)");

    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};

    const double q_low = 0.02425;
    double z;
    if (q < q_low) {
        double r = std::sqrt(-2.0 * std::log(q));
        z = (((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
            ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
    } else if (q <= 1.0 - q_low) {
        double r = q - 0.5;
        double s = r * r;
        z = (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * r /
            (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0);
    } else {
        double r = std::sqrt(-2.0 * std::log(1.0 - q));
        z = -(((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
            ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
    }

    for (int it = 0; it < 2; ++it) {
        double e = norm_cdf(z) - q;
        double p = norm_pdf(z);
        if (p > 0.0) z -= e / p;
    }
    return z;
}

// Derivative of probit at q, i.e. 1 / pdf(probit(q)).
inline double probit_deriv(double q) { return 1.0 / norm_pdf(probit(q)); }

}  // namespace ulab
