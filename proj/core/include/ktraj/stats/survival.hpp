#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ktraj {

struct SurvivalRecord {
  /// Position of the source row.
  std::size_t row = 0;
  double time = 0.0;
  bool event = false;
  double weight = 1.0;
  std::vector<double> covariates;
};

}  // namespace ktraj

namespace ktraj::stats {

/// Product-limit curve evaluated at every distinct record time.
struct KmCurve {
  std::string label;
  std::vector<double> times;
  std::vector<double> survival;
  /// Weighted number at risk just before each time.
  std::vector<double> at_risk;
  std::vector<double> events;
  std::vector<double> censored;
};

/// Weighted Kaplan-Meier. Throws std::invalid_argument for no records, a
/// negative or non-finite weight, or all-zero weights.
KmCurve km_estimate(std::span<const SurvivalRecord> records, std::string label = {});

/// S(t) as a right-continuous step function of the curve.
double km_survival_at(const KmCurve& curve, double t);

struct LogRankResult {
  double statistic = 0.0;
  int df = 0;
  double p = 1.0;
  std::vector<double> observed;
  std::vector<double> expected;
};

/// K-sample log-rank test with hypergeometric variance; weights ignored.
LogRankResult log_rank(std::span<const std::vector<SurvivalRecord>> groups);

}  // namespace ktraj::stats
