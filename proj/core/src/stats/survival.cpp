#include "ktraj/stats/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "ktraj/stats/distributions.hpp"

namespace ktraj::stats {

namespace {

std::vector<std::size_t> time_order(std::span<const SurvivalRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].time != records[b].time) return records[a].time < records[b].time;
    return records[a].row < records[b].row;
  });
  return order;
}

}  // namespace

KmCurve km_estimate(std::span<const SurvivalRecord> records, std::string label) {
  if (records.empty()) throw std::invalid_argument("Kaplan-Meier needs at least one record");
  double total = 0.0;
  for (const auto& r : records) {
    if (!(r.weight >= 0.0) || !std::isfinite(r.weight)) throw std::invalid_argument("invalid survival weight");
    if (std::isnan(r.time)) throw std::invalid_argument("NaN survival time");
    total += r.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("all survival weights are zero");

  KmCurve curve;
  curve.label = std::move(label);
  const auto order = time_order(records);
  double at_risk = total, s = 1.0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = records[order[i]].time;
    double d = 0.0, c = 0.0;
    std::size_t j = i;
    for (; j < order.size() && records[order[j]].time == t; ++j) {
      const auto& r = records[order[j]];
      (r.event ? d : c) += r.weight;
    }
    if (at_risk > 0.0 && d > 0.0) s *= std::max(0.0, 1.0 - d / at_risk);
    curve.times.push_back(t);
    curve.survival.push_back(s);
    curve.at_risk.push_back(at_risk);
    curve.events.push_back(d);
    curve.censored.push_back(c);
    at_risk -= d + c;
    if (at_risk < 0.0) at_risk = 0.0;
    i = j;
  }
  return curve;
}

double km_survival_at(const KmCurve& curve, double t) {
  auto it = std::upper_bound(curve.times.begin(), curve.times.end(), t);
  if (it == curve.times.begin()) return 1.0;
  return curve.survival[static_cast<std::size_t>(it - curve.times.begin()) - 1];
}

LogRankResult log_rank(std::span<const std::vector<SurvivalRecord>> groups) {
  const std::size_t k = groups.size();
  if (k < 2) throw std::invalid_argument("log-rank needs at least two groups");
  struct Item {
    double time;
    bool event;
    std::size_t group;
  };
  std::vector<Item> items;
  std::vector<double> n(k, 0.0);
  for (std::size_t g = 0; g < k; ++g) {
    if (groups[g].empty()) throw std::invalid_argument("log-rank group is empty");
    for (const auto& r : groups[g]) items.push_back({r.time, r.event, g});
    n[g] = static_cast<double>(groups[g].size());
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.time < b.time; });

  LogRankResult res;
  res.df = static_cast<int>(k) - 1;
  res.observed.assign(k, 0.0);
  res.expected.assign(k, 0.0);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));

  std::vector<double> d(k), leaving(k);
  for (std::size_t i = 0; i < items.size();) {
    const double t = items[i].time;
    std::fill(d.begin(), d.end(), 0.0);
    std::fill(leaving.begin(), leaving.end(), 0.0);
    std::size_t j = i;
    for (; j < items.size() && items[j].time == t; ++j) {
      if (items[j].event) d[items[j].group] += 1.0;
      leaving[items[j].group] += 1.0;
    }
    const double total_n = std::accumulate(n.begin(), n.end(), 0.0);
    const double total_d = std::accumulate(d.begin(), d.end(), 0.0);
    if (total_d > 0.0) {
      for (std::size_t g = 0; g < k; ++g) {
        res.observed[g] += d[g];
        res.expected[g] += n[g] * total_d / total_n;
      }
      if (total_n > 1.0) {
        const double f = total_d * (total_n - total_d) / (total_n - 1.0);
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t b = 0; b < k; ++b) {
            const double delta = a == b ? 1.0 : 0.0;
            v(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +=
                f * n[a] / total_n * (delta - n[b] / total_n);
          }
        }
      }
    }
    for (std::size_t g = 0; g < k; ++g) n[g] -= leaving[g];
    i = j;
  }

  const double events = std::accumulate(res.observed.begin(), res.observed.end(), 0.0);
  if (events == 0.0) return res;

  const auto m = static_cast<Eigen::Index>(k - 1);
  Eigen::VectorXd diff(m);
  for (Eigen::Index g = 0; g < m; ++g) {
    diff(g) = res.observed[static_cast<std::size_t>(g)] - res.expected[static_cast<std::size_t>(g)];
  }
  const Eigen::MatrixXd vr = v.topLeftCorner(m, m);
  const Eigen::VectorXd sol = vr.completeOrthogonalDecomposition().solve(diff);
  res.statistic = std::max(0.0, diff.dot(sol));
  res.p = chi_square_sf(res.statistic, res.df);
  return res;
}

}  // namespace ktraj::stats
