#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ktraj/stats/glm.hpp"
#include "ktraj/stats/survival.hpp"

namespace ktraj::stats {

enum class TieMethod { efron, breslow };
std::string_view to_string(TieMethod method);
TieMethod parse_tie_method(std::string_view text);

struct CoxFit {
  ModelFit fit;
  Eigen::VectorXd hazard_ratio;
  Eigen::VectorXd ci_low;
  Eigen::VectorXd ci_high;
  Eigen::VectorXd p_value;
  double concordance = 0.0;
  std::size_t events = 0;
  std::size_t records = 0;
};

/// Log partial likelihood (with gradient/Hessian when requested) of the
/// records' covariates at beta. Record weights scale each contribution.
double cox_log_partial_likelihood(std::span<const SurvivalRecord> records, const Eigen::VectorXd& beta, TieMethod ties,
                                  Eigen::VectorXd* grad = nullptr, Eigen::MatrixXd* hess = nullptr);

/// Throws ModelError without events or when a covariate is constant or
/// collinear. Non-convergence (e.g. monotone likelihood) sets the flag.
CoxFit fit_cox(std::span<const SurvivalRecord> records, const std::vector<std::string>& names,
               TieMethod ties = TieMethod::efron, const FitOptions& options = {});

/// Harrell's C: pairs (i, j) are comparable when i has the event and
/// t_i < t_j, or t_i == t_j and j is censored. Higher risk should fail
/// first; ties in risk count one half. NaN when nothing is comparable.
double harrell_c(std::span<const double> time, const std::vector<bool>& event, std::span<const double> risk);

}  // namespace ktraj::stats
