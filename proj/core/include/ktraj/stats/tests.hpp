#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace ktraj::stats {

struct TestResult {
  std::string test;
  double statistic = 0.0;
  double df = 0.0;
  /// Denominator degrees of freedom (ANOVA only).
  double df2 = 0.0;
  double p = 1.0;
};

/// Kruskal-Wallis H with tie correction, chi-square approximation.
TestResult kruskal_wallis(std::span<const std::vector<double>> groups);

/// One-way analysis of variance.
TestResult anova_oneway(std::span<const std::vector<double>> groups);

/// Pearson chi-square (no continuity correction). All-zero rows and
/// columns are dropped before counting degrees of freedom.
TestResult chi_square(const std::vector<std::vector<double>>& table);

/// Two-sided Fisher exact test; only 2x2 tables are supported.
TestResult fisher_exact(const std::vector<std::vector<double>>& table);

/// Smallest expected cell count under independence.
double min_expected_count(const std::vector<std::vector<double>>& table);

/// p_adj = min(1, m * p). Throws std::invalid_argument for p outside [0,1]
/// or m smaller than the number of p-values.
std::vector<double> bonferroni(std::span<const double> pvalues, std::size_t m);

/// Linear-interpolation sample quantile (type 7).
double quantile(std::vector<double> values, double q);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1).
double stddev(std::span<const double> values);

}  // namespace ktraj::stats
