#include "ktraj/stats/cox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ktraj/error.hpp"
#include "ktraj/stats/distributions.hpp"

namespace ktraj::stats {

std::string_view to_string(TieMethod method) { return method == TieMethod::efron ? "efron" : "breslow"; }

TieMethod parse_tie_method(std::string_view text) {
  if (text == "efron") return TieMethod::efron;
  if (text == "breslow") return TieMethod::breslow;
  throw ConfigError("unknown tie method '" + std::string(text) + "' (expected efron or breslow)");
}

namespace {

// Record indices by descending time, then row, for the risk-set sweep.
std::vector<std::size_t> descending_order(std::span<const SurvivalRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].time != records[b].time) return records[a].time > records[b].time;
    return records[a].row < records[b].row;
  });
  return order;
}

Eigen::VectorXd covariates_of(const SurvivalRecord& r) {
  return Eigen::Map<const Eigen::VectorXd>(r.covariates.data(), static_cast<Eigen::Index>(r.covariates.size()));
}

}  // namespace

double cox_log_partial_likelihood(std::span<const SurvivalRecord> records, const Eigen::VectorXd& beta, TieMethod ties,
                                  Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
  const Eigen::Index p = beta.size();
  const bool derivs = grad != nullptr || hess != nullptr;
  if (grad) grad->setZero(p);
  if (hess) hess->setZero(p, p);

  const auto order = descending_order(records);
  double r0 = 0.0;
  Eigen::VectorXd r1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(p, p);
  double ll = 0.0;

  for (std::size_t i = 0; i < order.size();) {
    const double t = records[order[i]].time;
    double t0 = 0.0, dw = 0.0;
    Eigen::VectorXd t1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd t2 = Eigen::MatrixXd::Zero(p, p);
    int d = 0;
    std::size_t j = i;
    for (; j < order.size() && records[order[j]].time == t; ++j) {
      const auto& r = records[order[j]];
      const Eigen::VectorXd x = covariates_of(r);
      const double eta = x.dot(beta);
      const double w = r.weight * std::exp(eta);
      r0 += w;
      if (derivs) {
        r1 += w * x;
        if (hess) r2 += w * x * x.transpose();
      }
      if (r.event) {
        ++d;
        dw += r.weight;
        ll += r.weight * eta;
        t0 += w;
        if (grad) *grad += r.weight * x;
        if (derivs) {
          t1 += w * x;
          if (hess) t2 += w * x * x.transpose();
        }
      }
    }
    if (d > 0) {
      const double mean_w = dw / d;
      const int terms = ties == TieMethod::efron ? d : 1;
      for (int k = 0; k < terms; ++k) {
        const double f = ties == TieMethod::efron ? static_cast<double>(k) / d : 0.0;
        const double mult = ties == TieMethod::efron ? mean_w : dw;
        const double den = r0 - f * t0;
        ll -= mult * std::log(den);
        if (!derivs) continue;
        const Eigen::VectorXd a = (r1 - f * t1) / den;
        if (grad) *grad -= mult * a;
        if (hess) *hess -= mult * ((r2 - f * t2) / den - a * a.transpose());
      }
    }
    i = j;
  }
  return ll;
}

CoxFit fit_cox(std::span<const SurvivalRecord> records, const std::vector<std::string>& names, TieMethod ties,
               const FitOptions& options) {
  if (records.empty()) throw ModelError("Cox model has no records");
  const std::size_t p = records.front().covariates.size();
  if (p == 0) throw ModelError("Cox model has no covariates");
  std::size_t events = 0;
  for (const auto& r : records) {
    if (r.covariates.size() != p) throw std::invalid_argument("ragged Cox covariate rows");
    if (r.event) ++events;
  }
  if (events == 0) throw ModelError("Cox model has no events");

  // Centering leaves beta unchanged and keeps exp() in range.
  const auto n = static_cast<Eigen::Index>(records.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = covariates_of(records[static_cast<std::size_t>(i)]).transpose();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  std::vector<std::string> constant;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if ((x.col(j).array() == x(0, j)).all()) {
      constant.push_back(j < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(j)]
                                                                      : "x" + std::to_string(j));
    }
  }
  if (!constant.empty()) {
    std::string msg = "Cox covariate is constant and not identifiable:";
    for (const auto& c : constant) msg += " " + c;
    throw ModelError(msg, constant);
  }
  Eigen::MatrixXd centered = x.rowwise() - mean;
  check_full_rank(centered, names);

  std::vector<SurvivalRecord> work(records.begin(), records.end());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& c = work[static_cast<std::size_t>(i)].covariates;
    for (std::size_t j = 0; j < p; ++j) c[j] = centered(i, static_cast<Eigen::Index>(j));
  }

  auto objective = [&](const Eigen::VectorXd& b, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
    return cox_log_partial_likelihood(work, b, ties, &g, &h);
  };
  CoxFit out;
  out.fit = newton_maximize(objective, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p)), names, options);
  out.events = events;
  out.records = records.size();
  const Eigen::VectorXd se = out.fit.se();
  out.hazard_ratio = out.fit.coef.array().exp();
  out.ci_low = (out.fit.coef - kZ975 * se).array().exp();
  out.ci_high = (out.fit.coef + kZ975 * se).array().exp();
  out.p_value.resize(static_cast<Eigen::Index>(p));
  for (Eigen::Index j = 0; j < out.p_value.size(); ++j) {
    out.p_value(j) = se(j) > 0.0 ? normal_two_sided_p(out.fit.coef(j) / se(j))
                                 : std::numeric_limits<double>::quiet_NaN();
  }

  std::vector<double> time(records.size()), risk(records.size());
  std::vector<bool> ev(records.size());
  const Eigen::VectorXd lp = centered * out.fit.coef;
  for (std::size_t i = 0; i < records.size(); ++i) {
    time[i] = records[i].time;
    ev[i] = records[i].event;
    risk[i] = lp(static_cast<Eigen::Index>(i));
  }
  out.concordance = harrell_c(time, ev, risk);
  return out;
}

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of inserted ranks < i.
  long long prefix(std::size_t i) const {
    long long s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<long long> tree_;
};

}  // namespace

double harrell_c(std::span<const double> time, const std::vector<bool>& event, std::span<const double> risk) {
  const std::size_t n = time.size();
  if (event.size() != n || risk.size() != n) throw std::invalid_argument("harrell_c inputs differ in length");

  std::vector<double> levels(risk.begin(), risk.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), risk[i]) - levels.begin());
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time[a] > time[b]; });

  Fenwick later(levels.size());
  long long inserted = 0;
  double concordant = 0.0, comparable = 0.0;
  std::vector<std::size_t> censored_ranks;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    censored_ranks.clear();
    for (; j < n && time[order[j]] == time[order[i]]; ++j) {
      if (!event[order[j]]) censored_ranks.push_back(rank[order[j]]);
    }
    std::sort(censored_ranks.begin(), censored_ranks.end());
    for (std::size_t k = i; k < j; ++k) {
      const std::size_t a = order[k];
      if (!event[a]) continue;
      const std::size_t r = rank[a];
      const long long below = later.prefix(r);
      const long long equal = later.prefix(r + 1) - below;
      const auto lo = std::lower_bound(censored_ranks.begin(), censored_ranks.end(), r);
      const auto hi = std::upper_bound(censored_ranks.begin(), censored_ranks.end(), r);
      const double c_below = static_cast<double>(lo - censored_ranks.begin());
      const double c_equal = static_cast<double>(hi - lo);
      comparable += static_cast<double>(inserted) + static_cast<double>(censored_ranks.size());
      concordant += static_cast<double>(below) + 0.5 * static_cast<double>(equal) + c_below + 0.5 * c_equal;
    }
    for (std::size_t k = i; k < j; ++k) {
      later.add(rank[order[k]]);
      ++inserted;
    }
    i = j;
  }
  return comparable > 0.0 ? concordant / comparable : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace ktraj::stats
