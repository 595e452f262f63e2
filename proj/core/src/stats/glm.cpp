#include "ktraj/stats/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ktraj/error.hpp"

namespace ktraj::stats {

namespace {

// log(1 + exp(z)) without overflow.
double log1pexp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::MatrixXd safe_inverse(const Eigen::MatrixXd& info) {
  const Eigen::Index p = info.rows();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    if (inv.allFinite()) return 0.5 * (inv + inv.transpose());
  }
  return info.completeOrthogonalDecomposition().pseudoInverse();
}

}  // namespace

Eigen::VectorXd ModelFit::se() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

void check_full_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd* weights) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd xw = x;
  if (weights) {
    for (Eigen::Index i = 0; i < n; ++i) xw.row(i) *= std::sqrt(std::max(0.0, (*weights)(i)));
  }
  std::vector<std::string> bad;
  std::vector<Eigen::Index> kept;
  Eigen::MatrixXd basis(n, 0);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::VectorXd col = xw.col(j);
    const double norm = col.norm();
    bool dependent = norm == 0.0;
    if (!dependent && basis.cols() > 0) {
      const Eigen::VectorXd coef = basis.colPivHouseholderQr().solve(col);
      dependent = (col - basis * coef).norm() <= 1e-8 * norm;
    }
    const std::string name = j < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(j)]
                                                                          : "x" + std::to_string(j);
    if (dependent) {
      bad.push_back(name);
    } else {
      basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
      basis.col(basis.cols() - 1) = col;
      kept.push_back(j);
    }
  }
  if (!bad.empty()) {
    std::string msg = "design matrix is rank deficient; collinear or constant columns:";
    for (const auto& b : bad) msg += " " + b;
    throw ModelError(msg, bad);
  }
}

namespace {
constexpr double kMinReciprocalCondition = 1e-12;
}  // namespace

ModelFit newton_maximize(const Objective& objective, Eigen::VectorXd start, std::vector<std::string> names,
                         const FitOptions& options) {
  ModelFit fit;
  fit.names = std::move(names);
  const Eigen::Index p = start.size();
  Eigen::VectorXd beta = std::move(start), grad(p);
  Eigen::MatrixXd hess(p, p);
  double ll = objective(beta, grad, hess);
  if (!std::isfinite(ll)) throw ModelError("log-likelihood is not finite at the starting point");

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    const Eigen::MatrixXd info = -hess;
    Eigen::VectorXd step;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      step = ldlt.solve(grad);
    }
    if (step.size() != p || !step.allFinite()) step = info.completeOrthogonalDecomposition().solve(grad);
    if (!step.allFinite()) break;

    double scale = 1.0;
    Eigen::VectorXd trial, tgrad(p);
    Eigen::MatrixXd thess(p, p);
    double tll = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 30; ++h) {
      trial = beta + scale * step;
      tll = objective(trial, tgrad, thess);
      if (std::isfinite(tll) && tll >= ll - 1e-12 * (1.0 + std::abs(ll))) break;
      scale *= 0.5;
    }
    if (!std::isfinite(tll)) break;
    const double step_size = (scale * step).cwiseAbs().maxCoeff();
    beta = trial;
    ll = tll;
    grad = tgrad;
    hess = thess;
    const double gmax = p > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
    if ((gmax < options.gradient_tol && step_size < options.step_tol) || step_size < options.min_step) {
      fit.converged = true;
      break;
    }
  }
  fit.coef = beta;
  fit.loglik = ll;
  fit.max_abs_gradient = p > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  fit.cov = safe_inverse(-hess);
  if (!fit.cov.allFinite()) fit.converged = false;
  // A flat direction at the optimum means a coefficient ran off to
  // infinity (separation or monotone likelihood), whatever the step size.
  if (fit.converged && p > 0) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-hess, Eigen::EigenvaluesOnly);
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > kMinReciprocalCondition * hi)) fit.converged = false;
  }
  return fit;
}

double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                       Eigen::VectorXd* grad, Eigen::MatrixXd* hess, const Eigen::VectorXd* weights) {
  const Eigen::Index n = x.rows(), p = x.cols();
  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  if (grad) grad->setZero(p);
  if (hess) hess->setZero(p, p);
  Eigen::VectorXd hw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights ? (*weights)(i) : 1.0;
    const double mu = sigmoid(eta(i));
    ll += w * (y(i) * eta(i) - log1pexp(eta(i)));
    if (grad) *grad += w * (y(i) - mu) * x.row(i).transpose();
    hw(i) = w * mu * (1.0 - mu);
  }
  if (hess) *hess = -(x.transpose() * hw.asDiagonal() * x);
  return ll;
}

ModelFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names,
                      const Eigen::VectorXd* weights, const FitOptions& options) {
  if (x.rows() != y.size()) throw std::invalid_argument("design rows do not match outcome length");
  if (weights && weights->size() != y.size()) throw std::invalid_argument("weights do not match outcome length");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw std::invalid_argument("logistic outcome must be 0/1");
  }
  check_full_rank(x, names, weights);
  auto objective = [&](const Eigen::VectorXd& b, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
    return logistic_loglik(x, y, b, &g, &h, weights);
  };
  return newton_maximize(objective, Eigen::VectorXd::Zero(x.cols()), names, options);
}

Eigen::MatrixXd multinomial_probabilities(const Eigen::MatrixXd& x, int k, const Eigen::VectorXd& beta) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(n, k);
  for (int g = 1; g < k; ++g) eta.col(g) = x * beta.segment((g - 1) * p, p);
  Eigen::MatrixXd prob(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = eta.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (eta.row(i).array() - m).exp().matrix();
    prob.row(i) = e / e.sum();
  }
  return prob;
}

double multinomial_loglik(const Eigen::MatrixXd& x, std::span<const int> groups, int k, const Eigen::VectorXd& beta,
                          Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
  const Eigen::Index n = x.rows(), p = x.cols();
  const Eigen::Index q = (k - 1) * p;
  Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(n, k);
  for (int g = 1; g < k; ++g) eta.col(g) = x * beta.segment((g - 1) * p, p);
  if (grad) grad->setZero(q);
  if (hess) hess->setZero(q, q);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = eta.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (eta.row(i).array() - m).exp().matrix();
    const double s = e.sum();
    const int gi = groups[static_cast<std::size_t>(i)];
    ll += eta(i, gi) - m - std::log(s);
    if (!grad && !hess) continue;
    const Eigen::RowVectorXd prob = e / s;
    const Eigen::VectorXd xi = x.row(i).transpose();
    for (int a = 1; a < k; ++a) {
      if (grad) grad->segment((a - 1) * p, p) += ((gi == a ? 1.0 : 0.0) - prob(a)) * xi;
      if (!hess) continue;
      const Eigen::MatrixXd xx = xi * xi.transpose();
      for (int b = 1; b < k; ++b) {
        const double c = prob(a) * ((a == b ? 1.0 : 0.0) - prob(b));
        hess->block((a - 1) * p, (b - 1) * p, p, p) -= c * xx;
      }
    }
  }
  return ll;
}

ModelFit fit_multinomial(const Eigen::MatrixXd& x, std::span<const int> groups, int k,
                         const std::vector<std::string>& names, const FitOptions& options) {
  if (k < 2) throw std::invalid_argument("multinomial model needs at least two categories");
  if (static_cast<std::size_t>(x.rows()) != groups.size()) {
    throw std::invalid_argument("design rows do not match group labels");
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (int g : groups) {
    if (g < 0 || g >= k) throw std::invalid_argument("group label out of range");
    ++counts[static_cast<std::size_t>(g)];
  }
  for (int g = 0; g < k; ++g) {
    if (counts[static_cast<std::size_t>(g)] == 0) {
      throw ModelError("multinomial category " + std::to_string(g) + " is empty");
    }
  }
  check_full_rank(x, names);
  std::vector<std::string> stacked;
  for (int g = 1; g < k; ++g) {
    for (const auto& name : names) stacked.push_back(std::to_string(g) + ":" + name);
  }
  auto objective = [&](const Eigen::VectorXd& b, Eigen::VectorXd& gr, Eigen::MatrixXd& h) {
    return multinomial_loglik(x, groups, k, b, &gr, &h);
  };
  return newton_maximize(objective, Eigen::VectorXd::Zero((k - 1) * x.cols()), std::move(stacked), options);
}

PropensityWeights ipw_weights(const ModelFit& fit, const Eigen::MatrixXd& x, std::span<const int> groups, int k,
                              double floor) {
  PropensityWeights out;
  out.weights.resize(groups.size());
  if (k == 1) {
    std::fill(out.weights.begin(), out.weights.end(), 1.0);
    return out;
  }
  if (!fit.converged) throw ModelError("propensity model did not converge");
  const Eigen::MatrixXd prob = multinomial_probabilities(x, k, fit.coef);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    double pr = prob(static_cast<Eigen::Index>(i), groups[i]);
    if (pr < floor) {
      pr = floor;
      ++out.capped;
    }
    out.weights[i] = 1.0 / pr;
  }
  return out;
}

}  // namespace ktraj::stats
