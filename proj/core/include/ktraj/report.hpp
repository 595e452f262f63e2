#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ktraj/stats/cox.hpp"
#include "ktraj/stats/glm.hpp"
#include "ktraj/stats/survival.hpp"

namespace ktraj {

/// Column-oriented view of a results CSV (encounters.csv).
class ResultsTable {
 public:
  static ResultsTable load(const std::filesystem::path& path);
  static ResultsTable parse(std::string_view csv_text);

  std::size_t rows() const noexcept { return rows_; }
  bool has(std::string_view column) const;
  /// Throws ConfigError for an unknown column.
  const std::vector<std::string>& text(std::string_view column) const;
  /// Empty cells and "NA" become nullopt; other non-numeric cells throw DataError.
  std::vector<std::optional<double>> numeric(std::string_view column) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> columns_;
  std::size_t rows_ = 0;
};

enum class Grouping { trajectory, severity, subphenotype, icu, non_icu };
std::string_view to_string(Grouping g);
Grouping parse_grouping(std::string_view text);

enum class SummaryKind { mean_sd, median_iqr, n_pct };
std::string_view to_string(SummaryKind k);

struct ReportVariable {
  std::string column;
  SummaryKind kind = SummaryKind::n_pct;
};

struct ReportSpec {
  std::vector<Grouping> groupings;
  std::vector<ReportVariable> variables;
  bool pairwise = true;
};

ReportSpec default_report_spec();
/// INI with [report] groupings/pairwise and [variables] column = kind.
/// Throws ConfigError on unknown keys, kinds or groupings.
ReportSpec parse_report_spec(std::string_view ini_text);
/// Throws ConfigError when a variable does not name a results column.
void validate_report_spec(const ReportSpec& spec, const ResultsTable& table);

/// Group labels (column order) for a grouping.
std::vector<std::string> grouping_levels(Grouping g);

struct SummaryTable {
  Grouping grouping{};
  std::vector<std::string> groups;
  std::vector<std::size_t> group_n;
  std::size_t total_n = 0;
  std::string csv;
};

SummaryTable summary_table(const ResultsTable& table, const ReportSpec& spec, Grouping grouping);

enum class ModelKind { cox, logistic };
enum class ModelCohort { all, icu, non_icu };
enum class ModelVariant { a, b, c };

struct ModelSpec {
  ModelKind kind{};
  ModelCohort cohort{};
  ModelVariant variant{};
  std::string name() const;
};

/// Every Cox and logistic model for the three cohorts and variants A-C.
std::vector<ModelSpec> all_model_specs();
/// Comma list of model names, "cox", "logistic" or "all".
std::vector<ModelSpec> parse_model_selection(std::string_view text);
/// Design column names before constant-column removal.
std::vector<std::string> model_covariates(const ModelSpec& spec);

struct ModelResult {
  ModelSpec spec;
  std::vector<std::string> covariates;
  std::vector<std::string> dropped;
  std::size_t n = 0;
  std::size_t events = 0;
  std::optional<stats::CoxFit> cox;
  std::optional<stats::ModelFit> logistic;
  std::string error;

  bool failed() const;
};

ModelResult fit_model(const ResultsTable& table, const ModelSpec& spec, stats::TieMethod ties);

struct KmGroupCurve {
  std::string group;
  stats::KmCurve curve;
  double total_weight = 0.0;
};

struct PropensitySummary {
  std::vector<std::string> groups;
  bool converged = false;
  std::size_t capped = 0;
  std::string error;
};

struct KmSet {
  std::vector<KmGroupCurve> curves;
  std::optional<PropensitySummary> propensity;
};

/// KM curves by trajectory group or subphenotype; when `ipw` is set the
/// records carry inverse propensity weights from a multinomial model on
/// age over 65, sex, race and CCI.
KmSet km_by_group(const ResultsTable& table, Grouping grouping, bool ipw);
std::string km_csv(const KmSet& set);

struct StatsOptions {
  stats::TieMethod ties = stats::TieMethod::efron;
  std::vector<ModelSpec> models = all_model_specs();
  unsigned threads = 1;
};

struct StatsResult {
  std::vector<SummaryTable> tables;
  std::vector<ModelResult> models;
  KmSet km_unadjusted;
  KmSet km_ipw;
  KmSet km_subphenotype;
  KmSet km_subphenotype_ipw;
  stats::LogRankResult log_rank_trajectory;
  stats::LogRankResult log_rank_subphenotype;
  std::string models_json;

  bool any_model_failed() const;
};

StatsResult run_stats(const ResultsTable& table, const ReportSpec& spec, const StatsOptions& options);
/// Writes tables, models.json and KM files into a fresh directory.
void write_stats(const StatsResult& result, const std::filesystem::path& output_dir);

}  // namespace ktraj
