#pragma once

// Brute-force reference implementations used to check the library. They are
// deliberately naive and share no code with the estimators they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <vector>

namespace oracle {

/// Product-limit estimate at every distinct time, recomputing the risk set
/// and the event mass from scratch at each time.
inline std::map<double, double> km(const std::vector<double>& time, const std::vector<int>& event,
                                   const std::vector<double>& weight = {}) {
  auto w = [&](std::size_t i) { return weight.empty() ? 1.0 : weight[i]; };
  std::vector<double> distinct(time);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::map<double, double> out;
  for (double t : distinct) {
    long double s = 1.0L;
    for (double u : distinct) {
      if (u > t) break;
      long double at_risk = 0.0L, deaths = 0.0L;
      for (std::size_t i = 0; i < time.size(); ++i) {
        if (time[i] >= u) at_risk += w(i);
        if (time[i] == u && event[i]) deaths += w(i);
      }
      if (at_risk > 0.0L) s *= 1.0L - deaths / at_risk;
    }
    out[t] = static_cast<double>(s);
  }
  return out;
}

/// Hypergeometric probability of a 2x2 table with the given first cell and
/// margins, computed as a product of ratios.
inline long double table_probability(int a, int r1, int r2, int c1) {
  const int n = r1 + r2;
  auto choose = [](int nn, int kk) {
    long double v = 1.0L;
    for (int i = 1; i <= kk; ++i) v = v * (nn - kk + i) / i;
    return v;
  };
  // C(r1, a) C(r2, c1 - a) / C(n, c1)
  return choose(r1, a) * choose(r2, c1 - a) / choose(n, c1);
}

/// Two-sided Fisher p: total probability of every table with the observed
/// margins that is no more likely than the observed one.
inline double fisher_two_sided(int a, int b, int c, int d) {
  const int r1 = a + b, r2 = c + d, c1 = a + c;
  const long double observed = table_probability(a, r1, r2, c1);
  long double p = 0.0L;
  for (int x = std::max(0, c1 - r2); x <= std::min(r1, c1); ++x) {
    const long double px = table_probability(x, r1, r2, c1);
    if (px <= observed * (1.0L + 1e-7L)) p += px;
  }
  return static_cast<double>(std::min<long double>(1.0L, p));
}

/// Nested full-grid search: 11 points per dimension around the current best,
/// shrinking the box until it is narrower than `tol`.
inline std::vector<double> grid_maximize(const std::function<double(const std::vector<double>&)>& f,
                                         std::vector<double> center, double width, double tol = 1e-7) {
  const std::size_t d = center.size();
  constexpr int kPoints = 11;
  double best = f(center);
  while (width > tol) {
    std::vector<double> best_point = center;
    std::vector<int> idx(d, 0);
    std::vector<double> x(d);
    for (;;) {
      for (std::size_t k = 0; k < d; ++k) x[k] = center[k] - width + 2.0 * width * idx[k] / (kPoints - 1);
      const double v = f(x);
      if (v > best) {
        best = v;
        best_point = x;
      }
      std::size_t k = 0;
      while (k < d && ++idx[k] == kPoints) idx[k++] = 0;
      if (k == d) break;
    }
    center = best_point;
    width *= 0.4;
  }
  return center;
}

inline std::vector<double> central_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double up = f(x);
    x[k] = x0 - h;
    const double down = f(x);
    x[k] = x0;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Bernoulli log-likelihood, rows of x include the intercept.
inline double logistic_loglik(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                              const std::vector<double>& beta) {
  long double ll = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    long double eta = 0.0L;
    for (std::size_t j = 0; j < beta.size(); ++j) eta += x[i][j] * beta[j];
    const long double p = 1.0L / (1.0L + std::exp(-eta));
    ll += y[i] ? std::log(p) : std::log(1.0L - p);
  }
  return static_cast<double>(ll);
}

/// Softmax log-likelihood with category 0 as reference; beta stacks the
/// coefficient blocks of categories 1..k-1.
inline double multinomial_loglik(const std::vector<std::vector<double>>& x, const std::vector<int>& g, int k,
                                 const std::vector<double>& beta) {
  const std::size_t p = x.front().size();
  long double ll = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<long double> eta(static_cast<std::size_t>(k), 0.0L);
    for (int c = 1; c < k; ++c) {
      for (std::size_t j = 0; j < p; ++j) eta[c] += x[i][j] * beta[(c - 1) * p + j];
    }
    long double denom = 0.0L;
    for (auto e : eta) denom += std::exp(e);
    ll += eta[static_cast<std::size_t>(g[i])] - std::log(denom);
  }
  return static_cast<double>(ll);
}

/// Breslow partial likelihood by explicit risk-set enumeration.
inline double cox_breslow_loglik(const std::vector<double>& time, const std::vector<int>& event,
                                 const std::vector<std::vector<double>>& z, const std::vector<double>& beta) {
  auto lp = [&](std::size_t i) {
    long double v = 0.0L;
    for (std::size_t j = 0; j < beta.size(); ++j) v += z[i][j] * beta[j];
    return v;
  };
  long double ll = 0.0L;
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (!event[i]) continue;
    long double denom = 0.0L;
    for (std::size_t j = 0; j < time.size(); ++j) {
      if (time[j] >= time[i]) denom += std::exp(lp(j));
    }
    ll += lp(i) - std::log(denom);
  }
  return static_cast<double>(ll);
}

/// Efron partial likelihood by explicit enumeration of tied death sets.
inline double cox_efron_loglik(const std::vector<double>& time, const std::vector<int>& event,
                               const std::vector<std::vector<double>>& z, const std::vector<double>& beta) {
  auto lp = [&](std::size_t i) {
    long double v = 0.0L;
    for (std::size_t j = 0; j < beta.size(); ++j) v += z[i][j] * beta[j];
    return v;
  };
  std::vector<double> death_times;
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (event[i]) death_times.push_back(time[i]);
  }
  std::sort(death_times.begin(), death_times.end());
  death_times.erase(std::unique(death_times.begin(), death_times.end()), death_times.end());
  long double ll = 0.0L;
  for (double t : death_times) {
    long double risk = 0.0L, tied = 0.0L;
    int d = 0;
    for (std::size_t j = 0; j < time.size(); ++j) {
      if (time[j] >= t) risk += std::exp(lp(j));
      if (time[j] == t && event[j]) {
        tied += std::exp(lp(j));
        ll += lp(j);
        ++d;
      }
    }
    for (int l = 0; l < d; ++l) ll -= std::log(risk - static_cast<long double>(l) / d * tied);
  }
  return static_cast<double>(ll);
}

/// O(n^2) concordance over all ordered pairs.
inline double harrell_c(const std::vector<double>& time, const std::vector<int>& event,
                        const std::vector<double>& risk) {
  double concordant = 0.0, comparable = 0.0;
  for (std::size_t i = 0; i < time.size(); ++i) {
    if (!event[i]) continue;
    for (std::size_t j = 0; j < time.size(); ++j) {
      if (i == j) continue;
      const bool usable = time[i] < time[j] || (time[i] == time[j] && !event[j]);
      if (!usable) continue;
      comparable += 1.0;
      if (risk[i] > risk[j]) concordant += 1.0;
      else if (risk[i] == risk[j]) concordant += 0.5;
    }
  }
  return comparable > 0.0 ? concordant / comparable : std::numeric_limits<double>::quiet_NaN();
}

/// Race-free CKD-EPI creatinine equation written out branch by branch.
inline double egfr(double scr, double age, bool female) {
  long double k = female ? 0.7L : 0.9L;
  long double ratio = scr / k;
  long double value = 142.0L * std::pow(0.9938L, static_cast<long double>(age));
  if (ratio <= 1.0L) {
    value *= std::pow(ratio, female ? -0.241L : -0.302L);
  } else {
    value *= std::pow(ratio, -1.200L);
  }
  if (female) value *= 1.012L;
  return static_cast<double>(value);
}

/// Creatinine giving the target eGFR, by bisection (eGFR falls with scr).
inline double bisect_scr(double target, double age, bool female) {
  double lo = 0.01, hi = 50.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (egfr(mid, age, female) > target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace oracle
