#include "ktraj/report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "ktraj/aki_engine.hpp"
#include "ktraj/csv.hpp"
#include "ktraj/error.hpp"
#include "ktraj/pipeline.hpp"
#include "ktraj/stats/distributions.hpp"
#include "ktraj/stats/tests.hpp"

namespace ktraj {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kSignificance = 0.05;
constexpr double kOneYearDays = 365.0;

}  // namespace

// ---- results table ----------------------------------------------------------

namespace {

void read_results(DelimitedReader& reader, const std::string& source, std::vector<std::string>& names,
                  std::vector<std::vector<std::string>>& columns, std::size_t& rows) {
  names = reader.header();
  columns.resize(names.size());
  while (reader.next()) {
    const auto& f = reader.fields();
    if (f.size() != names.size()) {
      throw DataError(fmt::format("{}: line {} has {} fields, expected {}", source, reader.line_number(), f.size(),
                                  names.size()));
    }
    for (std::size_t i = 0; i < f.size(); ++i) columns[i].emplace_back(f[i]);
    ++rows;
  }
}

}  // namespace

ResultsTable ResultsTable::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("results file not found: " + path.string());
  DelimitedReader reader(path, ',');
  ResultsTable t;
  read_results(reader, path.string(), t.names_, t.columns_, t.rows_);
  return t;
}

ResultsTable ResultsTable::parse(std::string_view csv_text) {
  auto reader = DelimitedReader::from_text(csv_text, ',');
  ResultsTable t;
  read_results(reader, "results", t.names_, t.columns_, t.rows_);
  return t;
}

bool ResultsTable::has(std::string_view column) const {
  return std::find(names_.begin(), names_.end(), column) != names_.end();
}

const std::vector<std::string>& ResultsTable::text(std::string_view column) const {
  const auto it = std::find(names_.begin(), names_.end(), column);
  if (it == names_.end()) throw ConfigError("results have no column '" + std::string(column) + "'");
  return columns_[static_cast<std::size_t>(it - names_.begin())];
}

std::vector<std::optional<double>> ResultsTable::numeric(std::string_view column) const {
  const auto& col = text(column);
  std::vector<std::optional<double>> out(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (col[i].empty() || col[i] == "NA") continue;
    const auto v = parse_double(col[i]);
    if (!v) throw DataError(fmt::format("column '{}' row {}: not a number: '{}'", column, i + 1, col[i]));
    out[i] = *v;
  }
  return out;
}

// ---- report spec --------------------------------------------------------------

std::string_view to_string(Grouping g) {
  switch (g) {
    case Grouping::trajectory: return "trajectory";
    case Grouping::severity: return "severity";
    case Grouping::subphenotype: return "subphenotype";
    case Grouping::icu: return "icu";
    case Grouping::non_icu: break;
  }
  return "non_icu";
}

Grouping parse_grouping(std::string_view text) {
  for (Grouping g : {Grouping::trajectory, Grouping::severity, Grouping::subphenotype, Grouping::icu,
                     Grouping::non_icu}) {
    if (to_string(g) == text) return g;
  }
  throw ConfigError("unknown grouping '" + std::string(text) + "'");
}

std::string_view to_string(SummaryKind k) {
  switch (k) {
    case SummaryKind::mean_sd: return "mean_sd";
    case SummaryKind::median_iqr: return "median_iqr";
    case SummaryKind::n_pct: break;
  }
  return "n_pct";
}

namespace {

SummaryKind parse_kind(std::string_view text) {
  for (SummaryKind k : {SummaryKind::mean_sd, SummaryKind::median_iqr, SummaryKind::n_pct}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown summary kind '" + std::string(text) + "'");
}

}  // namespace

ReportSpec default_report_spec() {
  ReportSpec s;
  s.groupings = {Grouping::trajectory, Grouping::severity, Grouping::subphenotype, Grouping::icu, Grouping::non_icu};
  const std::vector<std::pair<const char*, SummaryKind>> vars = {
      {"age", SummaryKind::mean_sd},
      {"age_over_65", SummaryKind::n_pct},
      {"female", SummaryKind::n_pct},
      {"african_american", SummaryKind::n_pct},
      {"cci", SummaryKind::median_iqr},
      {"hypertension", SummaryKind::n_pct},
      {"chronic_pulmonary", SummaryKind::n_pct},
      {"cardiovascular", SummaryKind::n_pct},
      {"diabetes", SummaryKind::n_pct},
      {"ckd", SummaryKind::n_pct},
      {"reference_creatinine", SummaryKind::median_iqr},
      {"icu", SummaryKind::n_pct},
      {"ventilation", SummaryKind::n_pct},
      {"vasopressor", SummaryKind::n_pct},
      {"krt", SummaryKind::n_pct},
      {"nephrotoxins_2d", SummaryKind::median_iqr},
      {"worst_stage", SummaryKind::n_pct},
      {"aki_duration_days", SummaryKind::median_iqr},
      {"disposition", SummaryKind::n_pct},
      {"hospital_mortality", SummaryKind::n_pct},
      {"mortality_30d", SummaryKind::n_pct},
      {"mortality_1y", SummaryKind::n_pct},
      {"mortality_3y", SummaryKind::n_pct},
      {"readmit_30d", SummaryKind::n_pct},
      {"readmit_90d", SummaryKind::n_pct},
      {"readmit_1y", SummaryKind::n_pct},
      {"new_krt_90d", SummaryKind::n_pct},
      {"new_krt_1y", SummaryKind::n_pct},
      {"new_ckd_90d", SummaryKind::n_pct},
      {"new_ckd_1y", SummaryKind::n_pct},
      {"ckd_progression_1y", SummaryKind::n_pct},
  };
  for (const auto& [c, k] : vars) s.variables.push_back({c, k});
  return s;
}

ReportSpec parse_report_spec(std::string_view ini_text) {
  using boost::property_tree::ptree;
  std::istringstream in{std::string(ini_text)};
  ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("report spec: line " + std::to_string(e.line()) + ": " + e.message());
  }
  ReportSpec spec = default_report_spec();
  for (const auto& [section, body] : tree) {
    if (section != "report" && section != "variables") throw ConfigError("report spec: unknown section [" + section + "]");
  }
  if (const auto report = tree.get_child_optional("report")) {
    for (const auto& [key, value] : *report) {
      const std::string v = std::string(trim(value.data()));
      if (key == "groupings") {
        spec.groupings.clear();
        for (const auto& g : split_list(v)) spec.groupings.push_back(parse_grouping(g));
      } else if (key == "pairwise") {
        const auto b = to_lower(v);
        if (b == "true" || b == "1" || b == "yes") spec.pairwise = true;
        else if (b == "false" || b == "0" || b == "no") spec.pairwise = false;
        else throw ConfigError("report spec: pairwise must be true or false");
      } else {
        throw ConfigError("report spec: [report] unknown key '" + key + "'");
      }
    }
  }
  if (const auto vars = tree.get_child_optional("variables")) {
    spec.variables.clear();
    for (const auto& [key, value] : *vars) {
      spec.variables.push_back({key, parse_kind(trim(value.data()))});
    }
  }
  if (spec.groupings.empty()) throw ConfigError("report spec: no groupings");
  return spec;
}

void validate_report_spec(const ReportSpec& spec, const ResultsTable& table) {
  std::vector<std::string> unknown;
  for (const auto& v : spec.variables) {
    if (!table.has(v.column)) unknown.push_back(v.column);
  }
  if (!unknown.empty()) {
    std::string names;
    for (const auto& u : unknown) names += (names.empty() ? "" : ", ") + u;
    throw ConfigError("report spec names unknown variables: " + names);
  }
}

std::vector<std::string> grouping_levels(Grouping g) {
  std::vector<std::string> out;
  switch (g) {
    case Grouping::severity:
      for (Severity s : {Severity::none, Severity::mild, Severity::severe}) out.emplace_back(to_string(s));
      break;
    case Grouping::subphenotype:
      for (std::size_t i = 0; i < kSubphenotypeCount; ++i) out.emplace_back(to_string(static_cast<Subphenotype>(i)));
      break;
    default:
      for (std::size_t i = 0; i < kTrajectoryGroupCount; ++i) {
        out.emplace_back(short_label(static_cast<TrajectoryGroup>(i)));
      }
  }
  return out;
}

namespace {

const char* grouping_column(Grouping g) {
  switch (g) {
    case Grouping::severity: return "severity";
    case Grouping::subphenotype: return "subphenotype";
    default: return "trajectory_group";
  }
}

/// Group index per row (-1 when the row is outside the grouping's cohort).
std::vector<int> assign_groups(const ResultsTable& table, Grouping g) {
  const auto levels = grouping_levels(g);
  const auto& col = table.text(grouping_column(g));
  const std::vector<std::string>* icu = nullptr;
  if (g == Grouping::icu || g == Grouping::non_icu) icu = &table.text("icu");
  std::vector<int> out(table.rows(), -1);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (icu && ((*icu)[i] == "1") != (g == Grouping::icu)) continue;
    const auto it = std::find(levels.begin(), levels.end(), col[i]);
    if (it == levels.end()) throw DataError(fmt::format("row {}: unknown group label '{}'", i + 1, col[i]));
    out[i] = static_cast<int>(it - levels.begin());
  }
  return out;
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "NA";
  return fmt::format("{:.{}f}", v, digits);
}

std::string format_p(double p) {
  if (std::isnan(p)) return "NA";
  return fmt::format("{:.4g}", p);
}

struct VariableRows {
  // One row per reported level; cells indexed [row][column] with column 0 = All.
  std::vector<std::string> levels;
  std::vector<std::vector<std::string>> cells;
  double p = std::nan("");
};

using Samples = std::vector<std::vector<double>>;

stats::TestResult continuous_test(const Samples& groups, SummaryKind kind) {
  return kind == SummaryKind::mean_sd ? stats::anova_oneway(groups) : stats::kruskal_wallis(groups);
}

stats::TestResult categorical_test(const std::vector<std::vector<double>>& counts) {
  if (counts.size() == 2 && counts[0].size() == 2 && stats::min_expected_count(counts) < 5.0) {
    return stats::fisher_exact(counts);
  }
  return stats::chi_square(counts);
}

std::size_t nonempty(const Samples& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](const auto& g) { return !g.empty(); }));
}

std::string continuous_cell(const std::vector<double>& v, SummaryKind kind) {
  if (v.empty()) return {};
  if (kind == SummaryKind::mean_sd) {
    return fixed(stats::mean(v), 2) + " ± " + (v.size() > 1 ? fixed(stats::stddev(v), 2) : std::string("NA"));
  }
  return fixed(stats::quantile(v, 0.5), 2) + " (" + fixed(stats::quantile(v, 0.25), 2) + "-" +
         fixed(stats::quantile(v, 0.75), 2) + ")";
}

}  // namespace

SummaryTable summary_table(const ResultsTable& table, const ReportSpec& spec, Grouping grouping) {
  validate_report_spec(spec, table);
  SummaryTable out;
  out.grouping = grouping;
  out.groups = grouping_levels(grouping);
  const auto assignment = assign_groups(table, grouping);
  const std::size_t k = out.groups.size();
  out.group_n.assign(k, 0);
  for (int g : assignment) {
    if (g >= 0) {
      ++out.group_n[static_cast<std::size_t>(g)];
      ++out.total_n;
    }
  }

  std::string csv = "variable,level,All";
  for (const auto& g : out.groups) csv += "," + csv_escape(g);
  csv += ",p_value\n";
  csv += "N,," + std::to_string(out.total_n);
  for (std::size_t n : out.group_n) csv += "," + std::to_string(n);
  csv += ",\n";

  // Pairwise references: the first three columns, as in the footnotes
  // comparing against no-AKI, RR and PwR.
  const std::size_t refs = std::min<std::size_t>(3, k);
  const char* letters = "abc";

  for (const auto& var : spec.variables) {
    VariableRows rows;
    // Per-group marker letters, filled when pairwise tests are on.
    std::vector<std::string> markers(k);

    if (var.kind == SummaryKind::n_pct) {
      const auto& col = table.text(var.column);
      std::set<std::string> seen;
      for (std::size_t i = 0; i < table.rows(); ++i) {
        if (assignment[i] >= 0 && !col[i].empty() && col[i] != "NA") seen.insert(col[i]);
      }
      std::vector<std::string> all_levels(seen.begin(), seen.end());
      // Numeric levels sort numerically.
      if (std::all_of(all_levels.begin(), all_levels.end(), [](const auto& s) { return parse_double(s).has_value(); })) {
        std::sort(all_levels.begin(), all_levels.end(),
                  [](const auto& a, const auto& b) { return *parse_double(a) < *parse_double(b); });
      }
      const bool binary = !all_levels.empty() && std::all_of(all_levels.begin(), all_levels.end(),
                                                            [](const auto& s) { return s == "0" || s == "1"; });
      if (binary) all_levels = {"0", "1"};
      std::vector<std::vector<double>> counts(k, std::vector<double>(all_levels.size(), 0.0));
      for (std::size_t i = 0; i < table.rows(); ++i) {
        if (assignment[i] < 0 || col[i].empty() || col[i] == "NA") continue;
        const auto it = std::find(all_levels.begin(), all_levels.end(), col[i]);
        counts[static_cast<std::size_t>(assignment[i])][static_cast<std::size_t>(it - all_levels.begin())] += 1.0;
      }
      std::vector<double> totals(k, 0.0);
      for (std::size_t g = 0; g < k; ++g) {
        for (double c : counts[g]) totals[g] += c;
      }
      const double grand = std::accumulate(totals.begin(), totals.end(), 0.0);
      std::vector<std::size_t> shown;
      for (std::size_t l = 0; l < all_levels.size(); ++l) {
        if (!binary || all_levels[l] == "1") shown.push_back(l);
      }
      for (std::size_t l : shown) {
        rows.levels.push_back(binary ? std::string() : all_levels[l]);
        std::vector<std::string> cells(k + 1);
        double level_total = 0.0;
        for (std::size_t g = 0; g < k; ++g) level_total += counts[g][l];
        if (grand > 0) cells[0] = fmt::format("{} ({}%)", level_total, fixed(100.0 * level_total / grand, 1));
        for (std::size_t g = 0; g < k; ++g) {
          if (totals[g] > 0) cells[g + 1] = fmt::format("{} ({}%)", counts[g][l], fixed(100.0 * counts[g][l] / totals[g], 1));
        }
        rows.cells.push_back(std::move(cells));
      }
      std::vector<std::vector<double>> present;
      for (std::size_t g = 0; g < k; ++g) {
        if (totals[g] > 0) present.push_back(counts[g]);
      }
      if (present.size() >= 2 && all_levels.size() >= 2) rows.p = categorical_test(present).p;

      if (spec.pairwise) {
        std::vector<std::tuple<std::size_t, std::size_t, double>> tests;
        for (std::size_t g = 1; g < k; ++g) {
          for (std::size_t r = 0; r < std::min(refs, g); ++r) {
            if (totals[g] == 0 || totals[r] == 0 || all_levels.size() < 2) continue;
            tests.emplace_back(g, r, categorical_test({counts[r], counts[g]}).p);
          }
        }
        std::vector<double> ps;
        for (const auto& t : tests) ps.push_back(std::isnan(std::get<2>(t)) ? 1.0 : std::get<2>(t));
        const auto adj = stats::bonferroni(ps, ps.size());
        for (std::size_t i = 0; i < tests.size(); ++i) {
          if (adj[i] < kSignificance) markers[std::get<0>(tests[i])] += letters[std::get<1>(tests[i])];
        }
      }
    } else {
      const auto values = table.numeric(var.column);
      Samples samples(k);
      std::vector<double> all;
      for (std::size_t i = 0; i < table.rows(); ++i) {
        if (assignment[i] < 0 || !values[i]) continue;
        samples[static_cast<std::size_t>(assignment[i])].push_back(*values[i]);
        all.push_back(*values[i]);
      }
      rows.levels.emplace_back();
      std::vector<std::string> cells(k + 1);
      cells[0] = continuous_cell(all, var.kind);
      for (std::size_t g = 0; g < k; ++g) cells[g + 1] = continuous_cell(samples[g], var.kind);
      rows.cells.push_back(std::move(cells));
      if (nonempty(samples) >= 2) rows.p = continuous_test(samples, var.kind).p;

      if (spec.pairwise) {
        std::vector<std::tuple<std::size_t, std::size_t, double>> tests;
        for (std::size_t g = 1; g < k; ++g) {
          for (std::size_t r = 0; r < std::min(refs, g); ++r) {
            if (samples[g].empty() || samples[r].empty()) continue;
            const Samples pair = {samples[r], samples[g]};
            tests.emplace_back(g, r, continuous_test(pair, var.kind).p);
          }
        }
        std::vector<double> ps;
        for (const auto& t : tests) ps.push_back(std::isnan(std::get<2>(t)) ? 1.0 : std::get<2>(t));
        const auto adj = stats::bonferroni(ps, ps.size());
        for (std::size_t i = 0; i < tests.size(); ++i) {
          if (adj[i] < kSignificance) markers[std::get<0>(tests[i])] += letters[std::get<1>(tests[i])];
        }
      }
    }

    for (std::size_t r = 0; r < rows.cells.size(); ++r) {
      csv += csv_escape(var.column) + "," + csv_escape(rows.levels[r]);
      for (std::size_t c = 0; c <= k; ++c) {
        std::string cell = rows.cells[r][c];
        if (c > 0 && !cell.empty() && !markers[c - 1].empty()) cell += " " + markers[c - 1];
        csv += "," + csv_escape(cell);
      }
      csv += "," + (r == 0 ? format_p(rows.p) : std::string()) + "\n";
    }
  }
  out.csv = std::move(csv);
  return out;
}

// ---- models ---------------------------------------------------------------------

namespace {

std::string_view to_string(ModelKind k) { return k == ModelKind::cox ? "cox" : "logistic"; }

std::string_view to_string(ModelCohort c) {
  switch (c) {
    case ModelCohort::all: return "all";
    case ModelCohort::icu: return "icu";
    case ModelCohort::non_icu: break;
  }
  return "non_icu";
}

char to_char(ModelVariant v) {
  switch (v) {
    case ModelVariant::a: return 'A';
    case ModelVariant::b: return 'B';
    case ModelVariant::c: break;
  }
  return 'C';
}

const std::vector<std::string> kGroupDummies = {"RR", "PwR", "PwoR"};

}  // namespace

std::string ModelSpec::name() const {
  return fmt::format("{}_{}_{}", to_string(kind), to_string(cohort), to_char(variant));
}

std::vector<ModelSpec> all_model_specs() {
  std::vector<ModelSpec> out;
  for (ModelKind k : {ModelKind::cox, ModelKind::logistic}) {
    for (ModelCohort c : {ModelCohort::all, ModelCohort::icu, ModelCohort::non_icu}) {
      for (ModelVariant v : {ModelVariant::a, ModelVariant::b, ModelVariant::c}) out.push_back({k, c, v});
    }
  }
  return out;
}

std::vector<ModelSpec> parse_model_selection(std::string_view text) {
  const auto all = all_model_specs();
  std::vector<ModelSpec> out;
  auto add = [&](const ModelSpec& s) {
    if (std::none_of(out.begin(), out.end(), [&](const ModelSpec& o) { return o.name() == s.name(); })) out.push_back(s);
  };
  for (const auto& item : split_list(text)) {
    if (item == "none") continue;
    bool matched = false;
    for (const auto& s : all) {
      if (item == "all" || item == to_string(s.kind) || item == s.name()) {
        add(s);
        matched = true;
      }
    }
    if (!matched) throw ConfigError("unknown model '" + item + "'");
  }
  return out;
}

std::vector<std::string> model_covariates(const ModelSpec& spec) {
  std::vector<std::string> cols = kGroupDummies;
  for (const char* c : {"age_over_65", "female", "african_american", "cci"}) cols.emplace_back(c);
  if (spec.kind == ModelKind::cox) {
    if (spec.cohort != ModelCohort::non_icu) cols.emplace_back("ventilation");
    if (spec.cohort == ModelCohort::all) cols.emplace_back("icu");
  }
  if (spec.variant != ModelVariant::a) cols.emplace_back("severe_aki");
  if (spec.variant == ModelVariant::c) cols.emplace_back("stage3_aki");
  return cols;
}

bool ModelResult::failed() const {
  if (!error.empty()) return true;
  if (cox) return !cox->fit.converged;
  if (logistic) return !logistic->converged;
  return true;
}

namespace {

// Design column values for a model covariate name.
std::vector<double> covariate_values(const ResultsTable& table, const std::string& name) {
  std::vector<double> out(table.rows(), 0.0);
  if (std::find(kGroupDummies.begin(), kGroupDummies.end(), name) != kGroupDummies.end()) {
    const auto& col = table.text("trajectory_group");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = col[i] == name ? 1.0 : 0.0;
    return out;
  }
  const auto values = table.numeric(name);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!values[i]) throw DataError(fmt::format("column '{}' row {} is empty", name, i + 1));
    out[i] = *values[i];
  }
  return out;
}

std::vector<std::size_t> cohort_rows(const ResultsTable& table, ModelCohort cohort) {
  const auto& icu = table.text("icu");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (cohort == ModelCohort::icu && icu[i] != "1") continue;
    if (cohort == ModelCohort::non_icu && icu[i] == "1") continue;
    rows.push_back(i);
  }
  return rows;
}

}  // namespace

ModelResult fit_model(const ResultsTable& table, const ModelSpec& spec, stats::TieMethod ties) {
  ModelResult res;
  res.spec = spec;
  try {
    auto rows = cohort_rows(table, spec.cohort);
    std::vector<std::optional<double>> time, event;
    if (spec.kind == ModelKind::cox) {
      time = table.numeric("survival_time");
      event = table.numeric("survival_event");
      std::erase_if(rows, [&](std::size_t i) { return !time[i] || !event[i]; });
    }
    res.n = rows.size();
    if (rows.empty()) throw ModelError("no rows in cohort");

    std::vector<std::vector<double>> columns;
    for (const auto& name : model_covariates(spec)) {
      auto all = covariate_values(table, name);
      std::vector<double> v;
      v.reserve(rows.size());
      for (std::size_t i : rows) v.push_back(all[i]);
      const bool constant = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
      if (constant) {
        res.dropped.push_back(name);
        continue;
      }
      res.covariates.push_back(name);
      columns.push_back(std::move(v));
    }
    if (columns.empty()) throw ModelError("no non-constant covariates");

    if (spec.kind == ModelKind::cox) {
      std::vector<SurvivalRecord> records(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto& rec = records[r];
        rec.row = rows[r];
        rec.time = *time[rows[r]];
        rec.event = *event[rows[r]] != 0.0;
        rec.covariates.reserve(columns.size());
        for (const auto& c : columns) rec.covariates.push_back(c[r]);
        res.events += rec.event ? 1 : 0;
      }
      res.cox = stats::fit_cox(records, res.covariates, ties);
    } else {
      const auto y_all = covariate_values(table, "hospital_mortality");
      Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size() + 1));
      Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        x(ri, 0) = 1.0;
        for (std::size_t c = 0; c < columns.size(); ++c) x(ri, static_cast<Eigen::Index>(c + 1)) = columns[c][r];
        y(ri) = y_all[rows[r]];
        res.events += y_all[rows[r]] != 0.0 ? 1 : 0;
      }
      std::vector<std::string> names = {"intercept"};
      names.insert(names.end(), res.covariates.begin(), res.covariates.end());
      res.logistic = stats::fit_logistic(x, y, names);
    }
    if ((res.cox && !res.cox->fit.converged) || (res.logistic && !res.logistic->converged)) {
      res.error = "did not converge";
    }
  } catch (const ModelError& e) {
    res.error = e.what();
    for (const auto& c : e.columns()) res.error += (&c == &e.columns().front() ? ": " : ", ") + c;
  }
  return res;
}

// ---- Kaplan-Meier -----------------------------------------------------------------

KmSet km_by_group(const ResultsTable& table, Grouping grouping, bool ipw) {
  KmSet set;
  const auto levels = grouping_levels(grouping);
  const auto assignment = assign_groups(table, grouping);
  const auto time = table.numeric("survival_time");
  const auto event = table.numeric("survival_event");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (assignment[i] >= 0 && time[i] && event[i]) rows.push_back(i);
  }
  std::vector<double> weights(rows.size(), 1.0);

  if (ipw) {
    PropensitySummary ps;
    // Present groups in level order; the first (normally no-AKI) is the reference.
    std::vector<int> remap(levels.size(), -1);
    for (std::size_t i : rows) remap[static_cast<std::size_t>(assignment[i])] = 0;
    int k = 0;
    for (std::size_t g = 0; g < levels.size(); ++g) {
      if (remap[g] == 0) {
        remap[g] = k++;
        ps.groups.push_back(levels[g]);
      }
    }
    std::vector<std::string> names = {"intercept"};
    std::vector<std::vector<double>> cols;
    for (const char* c : {"age_over_65", "female", "african_american", "cci"}) {
      const auto all = covariate_values(table, c);
      std::vector<double> v;
      for (std::size_t i : rows) v.push_back(all[i]);
      if (v.empty() || std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) continue;
      names.emplace_back(c);
      cols.push_back(std::move(v));
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
    std::vector<int> groups(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      x(ri, 0) = 1.0;
      for (std::size_t c = 0; c < cols.size(); ++c) x(ri, static_cast<Eigen::Index>(c + 1)) = cols[c][r];
      groups[r] = remap[static_cast<std::size_t>(assignment[rows[r]])];
    }
    try {
      if (k >= 2) {
        const auto fit = stats::fit_multinomial(x, groups, k, names);
        ps.converged = fit.converged;
        if (!fit.converged) throw ModelError("propensity model did not converge");
        auto w = stats::ipw_weights(fit, x, groups, k);
        weights = std::move(w.weights);
        ps.capped = w.capped;
      } else {
        ps.converged = true;
      }
    } catch (const ModelError& e) {
      ps.error = e.what();
    }
    const bool ok = ps.error.empty();
    set.propensity = std::move(ps);
    if (!ok) return set;
  }

  std::vector<std::vector<SurvivalRecord>> by_group(levels.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    SurvivalRecord rec;
    rec.row = rows[r];
    rec.time = *time[rows[r]];
    rec.event = *event[rows[r]] != 0.0;
    rec.weight = weights[r];
    by_group[static_cast<std::size_t>(assignment[rows[r]])].push_back(std::move(rec));
  }
  for (std::size_t g = 0; g < levels.size(); ++g) {
    if (by_group[g].empty()) continue;
    KmGroupCurve c;
    c.group = levels[g];
    for (const auto& r : by_group[g]) c.total_weight += r.weight;
    c.curve = stats::km_estimate(by_group[g], levels[g]);
    set.curves.push_back(std::move(c));
  }
  return set;
}

std::string km_csv(const KmSet& set) {
  std::string out = "group,time,survival,at_risk,events,censored\n";
  for (const auto& g : set.curves) {
    const auto& c = g.curve;
    if (c.times.empty() || c.times.front() > 0.0) {
      fmt::format_to(std::back_inserter(out), "{},0,1,{},0,0\n", csv_escape(g.group), format_double(g.total_weight));
    }
    for (std::size_t i = 0; i < c.times.size(); ++i) {
      fmt::format_to(std::back_inserter(out), "{},{},{},{},{},{}\n", csv_escape(g.group), format_double(c.times[i]),
                     format_double(c.survival[i]), format_double(c.at_risk[i]), format_double(c.events[i]),
                     format_double(c.censored[i]));
    }
  }
  return out;
}

// ---- orchestration ------------------------------------------------------------------

bool StatsResult::any_model_failed() const {
  return std::any_of(models.begin(), models.end(), [](const ModelResult& m) { return m.failed(); });
}

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json model_json(const ModelResult& m) {
  Json j;
  j["name"] = m.spec.name();
  j["kind"] = to_string(m.spec.kind);
  j["cohort"] = to_string(m.spec.cohort);
  j["variant"] = std::string(1, to_char(m.spec.variant));
  j["n"] = m.n;
  j["events"] = m.events;
  j["covariates"] = m.covariates;
  j["dropped"] = m.dropped;
  const stats::ModelFit* fit = m.cox ? &m.cox->fit : (m.logistic ? &*m.logistic : nullptr);
  if (fit) {
    j["converged"] = fit->converged;
    j["iterations"] = fit->iterations;
    j["loglik"] = number(fit->loglik);
    j["max_abs_gradient"] = number(fit->max_abs_gradient);
    const Eigen::VectorXd se = fit->se();
    Json coefs = Json::array();
    for (Eigen::Index i = 0; i < fit->coef.size(); ++i) {
      Json c;
      c["name"] = fit->names[static_cast<std::size_t>(i)];
      c["estimate"] = number(fit->coef(i));
      c["se"] = number(se(i));
      double ratio, lo, hi, p;
      if (m.cox) {
        ratio = m.cox->hazard_ratio(i);
        lo = m.cox->ci_low(i);
        hi = m.cox->ci_high(i);
        p = m.cox->p_value(i);
      } else {
        ratio = std::exp(fit->coef(i));
        lo = std::exp(fit->coef(i) - stats::kZ975 * se(i));
        hi = std::exp(fit->coef(i) + stats::kZ975 * se(i));
        p = stats::normal_two_sided_p(fit->coef(i) / se(i));
      }
      c[m.cox ? "hazard_ratio" : "odds_ratio"] = number(ratio);
      c["ci_low"] = number(lo);
      c["ci_high"] = number(hi);
      c["p"] = number(p);
      coefs.push_back(std::move(c));
    }
    j["coefficients"] = std::move(coefs);
    if (m.cox) j["concordance"] = number(m.cox->concordance);
  }
  j["error"] = m.error.empty() ? Json(nullptr) : Json(m.error);
  return j;
}

stats::LogRankResult group_log_rank(const ResultsTable& table, Grouping grouping, Json& out) {
  const auto levels = grouping_levels(grouping);
  const auto assignment = assign_groups(table, grouping);
  const auto time = table.numeric("survival_time");
  const auto event = table.numeric("survival_event");
  std::vector<std::vector<SurvivalRecord>> groups(levels.size());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (assignment[i] < 0 || !time[i] || !event[i]) continue;
    SurvivalRecord r;
    r.row = i;
    r.time = *time[i];
    r.event = *event[i] != 0.0;
    groups[static_cast<std::size_t>(assignment[i])].push_back(std::move(r));
  }
  std::vector<std::string> names;
  std::vector<std::vector<SurvivalRecord>> present;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) continue;
    names.push_back(levels[g]);
    present.push_back(std::move(groups[g]));
  }
  stats::LogRankResult lr;
  if (present.size() >= 2) lr = stats::log_rank(present);
  out = Json::object();
  out["statistic"] = number(lr.statistic);
  out["df"] = lr.df;
  out["p"] = number(lr.p);
  Json g = Json::array();
  for (std::size_t i = 0; i < names.size() && i < lr.observed.size(); ++i) {
    g.push_back({{"group", names[i]}, {"observed", lr.observed[i]}, {"expected", number(lr.expected[i])}});
  }
  out["groups"] = std::move(g);
  return lr;
}

Json propensity_json(const KmSet& set) {
  if (!set.propensity) return nullptr;
  const auto& p = *set.propensity;
  return {{"groups", p.groups}, {"converged", p.converged}, {"capped", p.capped},
          {"error", p.error.empty() ? Json(nullptr) : Json(p.error)}};
}

Json survival_at_1y(const KmSet& set) {
  Json j = Json::object();
  for (const auto& c : set.curves) j[c.group] = number(stats::km_survival_at(c.curve, kOneYearDays));
  return j;
}

}  // namespace

StatsResult run_stats(const ResultsTable& table, const ReportSpec& spec, const StatsOptions& options) {
  validate_report_spec(spec, table);
  StatsResult res;
  for (Grouping g : spec.groupings) res.tables.push_back(summary_table(table, spec, g));

  // Models are independent; each slot is filled by exactly one worker.
  res.models.resize(options.models.size());
  const unsigned threads =
      std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(options.models.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(options.models.size());
  auto worker = [&]() {
    for (std::size_t i = next++; i < options.models.size(); i = next++) {
      try {
        res.models[i] = fit_model(table, options.models[i], options.ties);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  res.km_unadjusted = km_by_group(table, Grouping::trajectory, false);
  res.km_ipw = km_by_group(table, Grouping::trajectory, true);
  res.km_subphenotype = km_by_group(table, Grouping::subphenotype, false);
  res.km_subphenotype_ipw = km_by_group(table, Grouping::subphenotype, true);

  Json j;
  j["ties"] = stats::to_string(options.ties);
  j["rows"] = table.rows();
  Json models = Json::array();
  for (const auto& m : res.models) models.push_back(model_json(m));
  j["models"] = std::move(models);
  Json lr_traj, lr_sub;
  res.log_rank_trajectory = group_log_rank(table, Grouping::trajectory, lr_traj);
  res.log_rank_subphenotype = group_log_rank(table, Grouping::subphenotype, lr_sub);
  j["log_rank"] = {{"trajectory", std::move(lr_traj)}, {"subphenotype", std::move(lr_sub)}};
  j["propensity"] = {{"trajectory", propensity_json(res.km_ipw)},
                     {"subphenotype", propensity_json(res.km_subphenotype_ipw)}};
  j["survival_1y"] = {{"unadjusted", survival_at_1y(res.km_unadjusted)},
                      {"ipw", survival_at_1y(res.km_ipw)},
                      {"subphenotype", survival_at_1y(res.km_subphenotype)},
                      {"subphenotype_ipw", survival_at_1y(res.km_subphenotype_ipw)}};
  res.models_json = j.dump(2) + "\n";
  return res;
}

void write_stats(const StatsResult& result, const std::filesystem::path& output_dir) {
  prepare_fresh_directory(output_dir);
  for (const auto& t : result.tables) {
    write_text_file(output_dir / ("table_" + std::string(to_string(t.grouping)) + ".csv"), t.csv);
  }
  write_text_file(output_dir / "models.json", result.models_json);
  write_text_file(output_dir / "km_unadjusted.csv", km_csv(result.km_unadjusted));
  write_text_file(output_dir / "km_ipw.csv", km_csv(result.km_ipw));
  write_text_file(output_dir / "km_subphenotype.csv", km_csv(result.km_subphenotype));
  write_text_file(output_dir / "km_subphenotype_ipw.csv", km_csv(result.km_subphenotype_ipw));
}

}  // namespace ktraj
