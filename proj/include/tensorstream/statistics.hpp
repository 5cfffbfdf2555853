#pragma once

#include <span>

namespace tensorstream {

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse standard normal CDF for p in (0, 1). Rational approximation
/// refined by one Halley step; absolute error well below 1e-9.
double normal_quantile(double p);

/// Upper quantile z_alpha = Phi^{-1}(1 - alpha).
inline double upper_normal_quantile(double alpha) { return normal_quantile(1.0 - alpha); }

double sample_mean(std::span<const double> xs);

/// Sample standard deviation with the n - 1 denominator.
double sample_sd(std::span<const double> xs);

/// Kolmogorov-Smirnov distance sup |F_n - Phi| against N(0, 1).
double ks_distance_normal(std::span<const double> xs);

/// Least-squares slope of y on x.
double fitted_slope(std::span<const double> x, std::span<const double> y);

}  // namespace tensorstream
