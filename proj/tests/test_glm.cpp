#include <doctest.h>

#include <random>

#include "ktraj/error.hpp"
#include "ktraj/stats/glm.hpp"
#include "oracles.hpp"

using namespace ktraj;
using namespace ktraj::stats;

namespace {

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

// 12 rows: intercept and one overlapping covariate.
const std::vector<std::vector<double>> kX12 = {{1, 0.5}, {1, 1.1}, {1, 1.9}, {1, 2.2}, {1, 2.8}, {1, 3.1},
                                               {1, 3.3}, {1, 4.0}, {1, 4.4}, {1, 5.2}, {1, 5.9}, {1, 6.5}};
const std::vector<int> kY12 = {0, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 1};

}  // namespace

TEST_CASE("logistic MLE matches a likelihood grid search") {
  const Eigen::MatrixXd x = to_matrix(kX12);
  Eigen::VectorXd y(12);
  for (int i = 0; i < 12; ++i) y(i) = kY12[i];
  const auto fit = fit_logistic(x, y, {"intercept", "x"});
  REQUIRE(fit.converged);
  const auto best = oracle::grid_maximize(
      [&](const std::vector<double>& b) { return oracle::logistic_loglik(kX12, kY12, b); }, {0, 0}, 8.0);
  CHECK(std::abs(fit.coef(0) - best[0]) < 1e-4);
  CHECK(std::abs(fit.coef(1) - best[1]) < 1e-4);
  CHECK(fit.loglik == doctest::Approx(oracle::logistic_loglik(kX12, kY12, best)).epsilon(1e-10));
  CHECK(fit.max_abs_gradient < 1e-8);
  // Covariance is symmetric positive definite.
  CHECK((fit.cov - fit.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(fit.cov).eigenvalues().minCoeff() > 0);
}

TEST_CASE("logistic special cases") {
  SUBCASE("balanced outcome, intercept only") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(10, 1);
    Eigen::VectorXd y(10);
    y << 1, 0, 1, 0, 1, 0, 1, 0, 1, 0;
    const auto fit = fit_logistic(x, y, {"intercept"});
    CHECK(fit.converged);
    CHECK(std::abs(fit.coef(0)) < 1e-10);
  }
  SUBCASE("all zero outcome does not converge") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(10, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(10);
    CHECK_FALSE(fit_logistic(x, y, {"intercept"}).converged);
  }
  SUBCASE("complete separation does not converge") {
    Eigen::MatrixXd x(6, 2);
    x << 1, 1, 1, 2, 1, 3, 1, 4, 1, 5, 1, 6;
    Eigen::VectorXd y(6);
    y << 0, 0, 0, 1, 1, 1;
    CHECK_FALSE(fit_logistic(x, y, {"intercept", "x"}).converged);
  }
  SUBCASE("rank deficiency names the columns") {
    Eigen::MatrixXd x(6, 3);
    x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10, 1, 6, 12;
    Eigen::VectorXd y(6);
    y << 0, 1, 0, 1, 1, 0;
    try {
      fit_logistic(x, y, {"intercept", "dose", "double_dose"});
      FAIL("expected ModelError");
    } catch (const ModelError& e) {
      CHECK(std::string(e.what()).find("double_dose") != std::string::npos);
    }
  }
  SUBCASE("integer weights equal replicated rows") {
    Eigen::MatrixXd x = to_matrix(kX12);
    Eigen::VectorXd y(12), w(12);
    for (int i = 0; i < 12; ++i) {
      y(i) = kY12[i];
      w(i) = 1 + i % 3;
    }
    std::vector<std::vector<double>> rows;
    std::vector<int> ys;
    for (int i = 0; i < 12; ++i) {
      for (int k = 0; k < w(i); ++k) {
        rows.push_back(kX12[i]);
        ys.push_back(kY12[i]);
      }
    }
    Eigen::VectorXd yr(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) yr(i) = ys[i];
    const auto a = fit_logistic(x, y, {"intercept", "x"}, &w);
    const auto b = fit_logistic(to_matrix(rows), yr, {"intercept", "x"});
    CHECK((a.coef - b.coef).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> rows;
  std::vector<int> y, g;
  for (int i = 0; i < 40; ++i) {
    rows.push_back({1.0, nd(rng), static_cast<double>(rng() % 2)});
    y.push_back(static_cast<int>(rng() % 2));
    g.push_back(static_cast<int>(rng() % 3));
  }
  const Eigen::MatrixXd x = to_matrix(rows);
  Eigen::VectorXd yv(40);
  for (int i = 0; i < 40; ++i) yv(i) = y[i];

  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd b(3);
    b << nd(rng), nd(rng), nd(rng);
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    logistic_loglik(x, yv, b, &grad, &hess);
    const auto fd = oracle::central_gradient(
        [&](const std::vector<double>& v) { return logistic_loglik(x, yv, from_vec(v)); }, to_vec(b));
    for (int k = 0; k < 3; ++k) CHECK(grad(k) == doctest::Approx(fd[k]).epsilon(1e-6));

    Eigen::VectorXd bm(6);
    for (int k = 0; k < 6; ++k) bm(k) = nd(rng);
    logistic_loglik(x, yv, b);  // no outputs requested
    multinomial_loglik(x, g, 3, bm, &grad, &hess);
    const auto fdm = oracle::central_gradient(
        [&](const std::vector<double>& v) { return multinomial_loglik(x, g, 3, from_vec(v)); }, to_vec(bm));
    for (int k = 0; k < 6; ++k) CHECK(grad(k) == doctest::Approx(fdm[k]).epsilon(1e-6));
    CHECK(multinomial_loglik(x, g, 3, bm) == doctest::Approx(oracle::multinomial_loglik(rows, g, 3, to_vec(bm))));
  }
}

TEST_CASE("multinomial MLE") {
  SUBCASE("two categories reduce to logistic") {
    const Eigen::MatrixXd x = to_matrix(kX12);
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) y(i) = kY12[i];
    const auto lf = fit_logistic(x, y, {"intercept", "x"});
    const auto mf = fit_multinomial(x, kY12, 2, {"intercept", "x"});
    REQUIRE(mf.converged);
    CHECK((lf.coef - mf.coef).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("intercept only recovers group frequencies") {
    std::vector<int> g = {0, 0, 1, 2, 2, 2, 1, 0, 2, 2};
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(10, 1);
    const auto fit = fit_multinomial(x, g, 3, {"intercept"});
    const auto p = multinomial_probabilities(x, 3, fit.coef);
    CHECK(p(0, 0) == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(p(0, 1) == doctest::Approx(0.2).epsilon(1e-9));
    CHECK(p(0, 2) == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("three groups match a likelihood grid search") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<std::vector<double>> rows;
    std::vector<int> g;
    for (int i = 0; i < 45; ++i) {
      const double z = nd(rng);
      rows.push_back({1.0, z});
      const double e1 = std::exp(0.3 + 0.8 * z), e2 = std::exp(-0.2 - 0.6 * z);
      const double u = std::uniform_real_distribution<double>(0, 1)(rng) * (1 + e1 + e2);
      g.push_back(u < 1 ? 0 : (u < 1 + e1 ? 1 : 2));
    }
    const auto fit = fit_multinomial(to_matrix(rows), g, 3, {"intercept", "z"});
    REQUIRE(fit.converged);
    const auto best = oracle::grid_maximize(
        [&](const std::vector<double>& b) { return oracle::multinomial_loglik(rows, g, 3, b); }, {0, 0, 0, 0}, 4.0,
        1e-6);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(fit.coef(k) - best[k]) < 1e-3);

    const auto w = ipw_weights(fit, to_matrix(rows), g, 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::vector<double> eta = {0.0, best[0] + best[1] * rows[i][1], best[2] + best[3] * rows[i][1]};
      const double denom = std::exp(eta[0]) + std::exp(eta[1]) + std::exp(eta[2]);
      const double p = std::exp(eta[static_cast<std::size_t>(g[i])]) / denom;
      CHECK(std::abs(w.weights[i] - 1.0 / p) < 1e-3);
      CHECK(w.weights[i] >= 1.0);
    }
  }
  SUBCASE("empty category is an error") {
    std::vector<int> g = {0, 0, 2, 2};
    CHECK_THROWS_AS(fit_multinomial(Eigen::MatrixXd::Ones(4, 1), g, 3, {"intercept"}), ModelError);
  }
}

TEST_CASE("inverse probability weights") {
  SUBCASE("two equal groups give weight two") {
    std::vector<int> g = {0, 1, 0, 1, 0, 1};
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(6, 1);
    const auto fit = fit_multinomial(x, g, 2, {"intercept"});
    const auto w = ipw_weights(fit, x, g, 2);
    for (double v : w.weights) CHECK(v == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(w.capped == 0);
  }
  SUBCASE("a single group gives weight one") {
    std::vector<int> g(5, 0);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 1);
    CHECK_THROWS_AS(fit_multinomial(x, g, 1, {"intercept"}), std::invalid_argument);
    const auto w = ipw_weights(ModelFit{}, x, g, 1);
    CHECK(multinomial_probabilities(x, 1, Eigen::VectorXd()).isOnes());
    for (double v : w.weights) CHECK(v == 1.0);
  }
  SUBCASE("non-converged fit is refused") {
    ModelFit bad;
    bad.coef = Eigen::VectorXd::Zero(1);
    std::vector<int> g = {0, 1};
    CHECK_THROWS_AS(ipw_weights(bad, Eigen::MatrixXd::Ones(2, 1), g, 2), ModelError);
  }
  SUBCASE("tiny probabilities are capped at the floor") {
    ModelFit fit;
    fit.converged = true;
    fit.coef = Eigen::VectorXd::Constant(1, 30.0);
    std::vector<int> g = {0, 1};
    const auto w = ipw_weights(fit, Eigen::MatrixXd::Ones(2, 1), g, 2);
    CHECK(w.capped == 1);
    CHECK(w.weights[0] == doctest::Approx(1.0 / kPropensityFloor));
  }
}
