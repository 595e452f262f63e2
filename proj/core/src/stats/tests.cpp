#include "ktraj/stats/tests.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ktraj/stats/distributions.hpp"

namespace ktraj::stats {

namespace {

void require_groups(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw std::invalid_argument("test needs at least two groups");
}

double log_choose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

double mean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
  if (values.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

TestResult kruskal_wallis(std::span<const std::vector<double>> groups) {
  require_groups(groups);
  TestResult r{"kruskal-wallis"};
  struct Obs {
    double value;
    std::size_t group;
  };
  std::vector<Obs> all;
  std::size_t nonempty = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (!groups[g].empty()) ++nonempty;
    for (double v : groups[g]) all.push_back({v, g});
  }
  r.df = static_cast<double>(nonempty) - 1.0;
  const double n = static_cast<double>(all.size());
  if (nonempty < 2) return r;
  std::sort(all.begin(), all.end(), [](const Obs& a, const Obs& b) { return a.value < b.value; });

  std::vector<double> rank_sum(groups.size(), 0.0);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (std::size_t k = i; k < j; ++k) rank_sum[all[k].group] += avg;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  double h = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) continue;
    h += rank_sum[g] * rank_sum[g] / static_cast<double>(groups[g].size());
  }
  h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
  const double correction = 1.0 - tie_term / (n * n * n - n);
  if (correction <= 0.0) return r;  // every value tied
  r.statistic = std::max(0.0, h / correction);
  if (r.statistic < 1e-12) r.statistic = 0.0;
  r.p = chi_square_sf(r.statistic, r.df);
  return r;
}

TestResult anova_oneway(std::span<const std::vector<double>> groups) {
  require_groups(groups);
  TestResult r{"anova"};
  double n = 0.0, total = 0.0;
  std::size_t k = 0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    ++k;
    n += static_cast<double>(g.size());
    total += std::accumulate(g.begin(), g.end(), 0.0);
  }
  r.df = static_cast<double>(k) - 1.0;
  r.df2 = n - static_cast<double>(k);
  if (k < 2 || r.df2 <= 0.0) return r;
  const double grand = total / n;
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    const double m = mean(g);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) ssw += (v - m) * (v - m);
  }
  if (ssw == 0.0) {
    r.statistic = ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.p = ssb > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.statistic = (ssb / r.df) / (ssw / r.df2);
  r.p = f_sf(r.statistic, r.df, r.df2);
  return r;
}

namespace {

std::vector<std::vector<double>> drop_empty_margins(const std::vector<std::vector<double>>& table) {
  if (table.empty()) return {};
  const std::size_t cols = table.front().size();
  std::vector<double> col_sum(cols, 0.0);
  std::vector<std::vector<double>> rows;
  for (const auto& row : table) {
    if (row.size() != cols) throw std::invalid_argument("ragged contingency table");
    for (double v : row) {
      if (!(v >= 0.0)) throw std::invalid_argument("negative contingency count");
    }
    if (std::accumulate(row.begin(), row.end(), 0.0) > 0.0) rows.push_back(row);
    for (std::size_t j = 0; j < cols; ++j) col_sum[j] += row[j];
  }
  for (auto& row : rows) {
    std::vector<double> kept;
    for (std::size_t j = 0; j < cols; ++j) {
      if (col_sum[j] > 0.0) kept.push_back(row[j]);
    }
    row = std::move(kept);
  }
  return rows;
}

}  // namespace

double min_expected_count(const std::vector<std::vector<double>>& table) {
  const auto t = drop_empty_margins(table);
  if (t.empty() || t.front().empty()) return 0.0;
  double n = 0.0;
  std::vector<double> rs(t.size(), 0.0), cs(t.front().size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < t[i].size(); ++j) {
      rs[i] += t[i][j];
      cs[j] += t[i][j];
      n += t[i][j];
    }
  }
  double m = std::numeric_limits<double>::infinity();
  for (double r : rs) {
    for (double c : cs) m = std::min(m, r * c / n);
  }
  return m;
}

TestResult chi_square(const std::vector<std::vector<double>>& table) {
  TestResult r{"chi-square"};
  const auto t = drop_empty_margins(table);
  if (t.size() < 2 || t.front().size() < 2) return r;
  double n = 0.0;
  std::vector<double> rs(t.size(), 0.0), cs(t.front().size(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < t[i].size(); ++j) {
      rs[i] += t[i][j];
      cs[j] += t[i][j];
      n += t[i][j];
    }
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < cs.size(); ++j) {
      const double e = rs[i] * cs[j] / n;
      r.statistic += (t[i][j] - e) * (t[i][j] - e) / e;
    }
  }
  r.df = static_cast<double>((t.size() - 1) * (cs.size() - 1));
  r.p = chi_square_sf(r.statistic, r.df);
  return r;
}

TestResult fisher_exact(const std::vector<std::vector<double>>& table) {
  if (table.size() != 2 || table[0].size() != 2 || table[1].size() != 2) {
    throw std::invalid_argument("Fisher exact test supports only 2x2 tables");
  }
  TestResult r{"fisher"};
  const double a = table[0][0], b = table[0][1], c = table[1][0], d = table[1][1];
  for (double v : {a, b, c, d}) {
    if (!(v >= 0.0) || v != std::floor(v)) throw std::invalid_argument("Fisher counts must be non-negative integers");
  }
  const double row1 = a + b, col1 = a + c, n = a + b + c + d;
  const double lo = std::max(0.0, row1 + col1 - n), hi = std::min(row1, col1);
  auto logp = [&](double x) { return log_choose(col1, x) + log_choose(n - col1, row1 - x) - log_choose(n, row1); };
  const double observed = logp(a);
  double p = 0.0;
  for (double x = lo; x <= hi; x += 1.0) {
    const double lx = logp(x);
    if (lx <= observed + 1e-7) p += std::exp(lx);
  }
  r.statistic = a;
  r.p = std::min(1.0, p);
  return r;
}

std::vector<double> bonferroni(std::span<const double> pvalues, std::size_t m) {
  if (m < pvalues.size()) throw std::invalid_argument("Bonferroni m is smaller than the number of p-values");
  std::vector<double> out;
  out.reserve(pvalues.size());
  for (double p : pvalues) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p-value outside [0, 1]");
    out.push_back(std::min(1.0, static_cast<double>(m) * p));
  }
  return out;
}

}  // namespace ktraj::stats
