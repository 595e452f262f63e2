#pragma once

namespace ktraj::stats {

/// Upper tail P(X > x) of a chi-square with df degrees of freedom.
double chi_square_sf(double x, double df);

/// Upper tail P(X > f) of an F(d1, d2) distribution.
double f_sf(double f, double d1, double d2);

/// Two-sided normal p-value for a z statistic.
double normal_two_sided_p(double z);

inline constexpr double kZ975 = 1.959963984540054;

}  // namespace ktraj::stats
