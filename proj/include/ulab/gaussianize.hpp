#pragma once

#include <vector>

#include "ulab/common.hpp"

namespace ulab {

// Soft CDF values are clamped into [kCdfClampLo, 1 - kCdfClampLo] before the
// probit so z stays finite. The tape op uses the same bound.
inline constexpr double kCdfClampLo = 1e-4;

inline constexpr double kDefaultTemperature = 100.0;

// q_i = (1/N) sum_j sigmoid(k (x_i - x_j)); a differentiable rank estimate.
// At large k this approaches (rank_i - 0.5) / N for distinct inputs.
std::vector<double> soft_cdf(const std::vector<double>& x, double k);

// probit(clamp(soft_cdf(x, k))); maps a continuous i.i.d. sample toward
// standard normal as N grows. Input here is typically log1p of CE losses.
std::vector<double> gaussianize(const std::vector<double>& x, double k);

// Squared maximum mean discrepancy between two scalar samples under the
// unit-bandwidth Gaussian kernel. Biased V-statistic (diagonals included),
// clamped at zero; identical inputs give exactly 0.
double mmd(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace ulab
