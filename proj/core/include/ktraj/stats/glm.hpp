#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ktraj::stats {

/// Newton-Raphson stopping rule shared by all fits. Converged when
/// max|gradient| < gradient_tol and the last step is below step_tol, or
/// when the step itself is below min_step.
struct FitOptions {
  int max_iterations = 50;
  double gradient_tol = 1e-8;
  double step_tol = 1e-4;
  double min_step = 1e-10;
};

struct ModelFit {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  /// Inverse observed information at coef.
  Eigen::MatrixXd cov;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  double max_abs_gradient = 0.0;

  Eigen::VectorXd se() const;
};

/// Throws ModelError naming columns that are (numerically) linear
/// combinations of earlier columns. Weighted rows with zero weight are
/// ignored.
void check_full_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& names,
                     const Eigen::VectorXd* weights = nullptr);

/// Objective for generic Newton maximization: returns log-likelihood and
/// fills gradient and Hessian (of the log-likelihood) at beta.
using Objective = std::function<double(const Eigen::VectorXd& beta, Eigen::VectorXd& grad, Eigen::MatrixXd& hess)>;

/// Damped Newton ascent with step halving. Never throws on non-convergence;
/// the flag is set instead.
ModelFit newton_maximize(const Objective& objective, Eigen::VectorXd start, std::vector<std::string> names,
                         const FitOptions& options = {});

/// Binary logistic regression; x must carry its own intercept column.
ModelFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names,
                      const Eigen::VectorXd* weights = nullptr, const FitOptions& options = {});

double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                       Eigen::VectorXd* grad = nullptr, Eigen::MatrixXd* hess = nullptr,
                       const Eigen::VectorXd* weights = nullptr);

/// Multinomial logistic regression with category 0 as reference. Labels
/// are 0..k-1. Coefficients are stacked per non-reference category:
/// coef[(g - 1) * p + j]. Throws ModelError for an empty category.
ModelFit fit_multinomial(const Eigen::MatrixXd& x, std::span<const int> groups, int k,
                         const std::vector<std::string>& names, const FitOptions& options = {});

double multinomial_loglik(const Eigen::MatrixXd& x, std::span<const int> groups, int k, const Eigen::VectorXd& beta,
                          Eigen::VectorXd* grad = nullptr, Eigen::MatrixXd* hess = nullptr);

/// n x k matrix of fitted category probabilities.
Eigen::MatrixXd multinomial_probabilities(const Eigen::MatrixXd& x, int k, const Eigen::VectorXd& beta);

struct PropensityWeights {
  std::vector<double> weights;
  /// Subjects whose fitted probability was raised to the floor.
  std::size_t capped = 0;
};

inline constexpr double kPropensityFloor = 1e-6;

/// w_i = 1 / P(G_i | x_i). Throws ModelError if the fit did not converge.
PropensityWeights ipw_weights(const ModelFit& fit, const Eigen::MatrixXd& x, std::span<const int> groups, int k,
                              double floor = kPropensityFloor);

}  // namespace ktraj::stats
