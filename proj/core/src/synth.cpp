#include "ktraj/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "ktraj/csv.hpp"
#include "ktraj/error.hpp"

namespace ktraj {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // 53-bit uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(std::floor(uniform() * static_cast<double>(hi - lo + 1)));
  }
  bool bernoulli(double p) { return uniform() < p; }
  double exponential(double rate) {
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log1p(-uniform()) / rate;
  }
  int poisson(double mean) {
    const double limit = std::exp(-mean);
    int k = 0;
    for (double prod = uniform(); prod > limit; prod *= uniform()) ++k;
    return k;
  }
  template <std::size_t N>
  std::size_t categorical(const std::array<double, N>& p) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    for (std::size_t i = N; i-- > 0;) {
      if (p[i] > 0.0) return i;
    }
    return 0;
  }

 private:
  std::mt19937_64 engine_;
};

double round2(double v) { return std::round(v * 100.0) / 100.0; }
double ceil2(double v) { return std::ceil(v * 100.0 - 1e-9) / 100.0; }

// Ratio bands per stage, kept clear of the staging thresholds.
constexpr std::array<std::array<double, 2>, 4> kBands{{{1.0, 1.1}, {1.6, 1.9}, {2.1, 2.8}, {3.1, 4.0}}};

std::string dx_type(std::string_view code) {
  return !code.empty() && std::isalpha(static_cast<unsigned char>(code.front())) ? "10" : "09";
}

std::string px_type(std::string_view code) {
  if (code.size() == 5 && (std::isdigit(static_cast<unsigned char>(code.back())) || code.back() == 'T')) return "CH";
  return code.size() == 7 ? "10" : "09";
}

Date birth_for_age(Date admit_day, int age, int extra_days) {
  const std::chrono::year_month_day ymd{admit_day};
  const std::chrono::year y = ymd.year() - std::chrono::years{age};
  std::chrono::year_month_day birth{y, ymd.month(), ymd.day()};
  if (!birth.ok()) birth = std::chrono::year_month_day{y / ymd.month() / std::chrono::last};
  return Date{birth} - Days{extra_days};
}

std::array<double, 4> parse4(const std::string& text, const std::string& key) {
  const auto parts = split_list(text);
  if (parts.size() != 4) throw ConfigError("[generator] " + key + " needs 4 comma-separated values");
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto v = parse_double(parts[i]);
    if (!v) throw ConfigError("[generator] " + key + ": '" + parts[i] + "' is not a number");
    out[i] = *v;
  }
  return out;
}

std::array<double, 3> parse3(const std::string& text, const std::string& key) {
  const auto parts = split_list(text);
  if (parts.size() != 3) throw ConfigError("[generator] " + key + " needs 3 comma-separated values");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto v = parse_double(parts[i]);
    if (!v) throw ConfigError("[generator] " + key + ": '" + parts[i] + "' is not a number");
    out[i] = *v;
  }
  return out;
}

template <std::size_t N>
std::string join(const std::array<double, N>& v) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s;
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

template <std::size_t N>
bool is_distribution(const std::array<double, N>& p) {
  return std::all_of(p.begin(), p.end(), is_probability) &&
         std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-6;
}

struct Point {
  TimePoint time;
  double value;
};

}  // namespace

void validate_generator_config(const GeneratorConfig& c) {
  std::vector<std::string> problems;
  if (c.encounters == 0) problems.push_back("encounters must be positive");
  if (!is_distribution(c.prevalence)) problems.push_back("prevalence must be 4 probabilities summing to 1");
  const double aki = c.prevalence[1] + c.prevalence[2] + c.prevalence[3];
  if (aki > 0.0 && !is_distribution(c.severity)) {
    problems.push_back("severity must be 3 probabilities summing to 1 when AKI prevalence is nonzero");
  }
  if (c.severity[2] > 0.0 && c.krt_fraction > 0.0 && c.prevalence[2] + c.prevalence[3] == 0.0) {
    problems.push_back("krt_fraction needs persistent AKI prevalence");
  }
  if (!(c.baseline_hazard > 0.0) || !std::isfinite(c.baseline_hazard)) {
    problems.push_back("baseline_hazard must be positive");
  }
  for (double h : c.hazard_ratio) {
    if (!(h > 0.0) || !std::isfinite(h)) problems.push_back("hazard_ratio values must be positive");
  }
  if (!(c.censor_rate >= 0.0) || !std::isfinite(c.censor_rate)) {
    problems.push_back("censor_rate must be non-negative");
  }
  for (const auto* arr : {&c.hospital_death, &c.icu, &c.ventilation}) {
    if (!std::all_of(arr->begin(), arr->end(), is_probability)) {
      problems.push_back("hospital_death, icu and ventilation must be probabilities");
      break;
    }
  }
  for (double p : {c.female, c.african_american, c.over_65, c.krt_fraction, c.recurrence_fraction}) {
    if (!is_probability(p)) {
      problems.push_back("female, african_american, over_65, krt_fraction and recurrence_fraction must be "
                         "probabilities");
      break;
    }
  }
  if (!(c.cci_rate >= 0.0) || c.cci_rate > 20.0) problems.push_back("cci_rate must be in [0, 20]");
  if (!is_distribution(c.reference_mix)) problems.push_back("reference_mix must be 4 probabilities summing to 1");
  if (c.admission_span_days < 1) problems.push_back("admission_span_days must be positive");
  if (!problems.empty()) {
    std::string msg = "invalid generator config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

GeneratorConfig parse_generator_config(std::string_view ini_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in{std::string(ini_text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  GeneratorConfig c;
  for (const auto& [section, body] : tree) {
    if (section != "generator") throw ConfigError("generator config: unknown section [" + section + "]");
    for (const auto& [key, node] : body) {
      const std::string v = node.get_value<std::string>();
      auto num = [&]() {
        const auto d = parse_double(trim(v));
        if (!d) throw ConfigError("[generator] " + key + ": '" + v + "' is not a number");
        return *d;
      };
      auto integer = [&]() {
        const auto d = parse_int(trim(v));
        if (!d || *d < 0) throw ConfigError("[generator] " + key + ": '" + v + "' is not a non-negative integer");
        return *d;
      };
      if (key == "seed") c.seed = static_cast<std::uint64_t>(integer());
      else if (key == "encounters") c.encounters = static_cast<std::size_t>(integer());
      else if (key == "prevalence") c.prevalence = parse4(v, key);
      else if (key == "severity") c.severity = parse3(v, key);
      else if (key == "baseline_hazard") c.baseline_hazard = num();
      else if (key == "hazard_ratio") c.hazard_ratio = parse4(v, key);
      else if (key == "censor_rate") c.censor_rate = num();
      else if (key == "hospital_death") c.hospital_death = parse4(v, key);
      else if (key == "female") c.female = num();
      else if (key == "african_american") c.african_american = num();
      else if (key == "over_65") c.over_65 = num();
      else if (key == "icu") c.icu = parse4(v, key);
      else if (key == "ventilation") c.ventilation = parse4(v, key);
      else if (key == "cci_rate") c.cci_rate = num();
      else if (key == "krt_fraction") c.krt_fraction = num();
      else if (key == "recurrence_fraction") c.recurrence_fraction = num();
      else if (key == "reference_mix") c.reference_mix = parse4(v, key);
      else if (key == "start_date") {
        const auto d = parse_date(trim(v));
        if (!d) throw ConfigError("[generator] start_date: '" + v + "' is not a date");
        c.start = *d;
      } else if (key == "admission_span_days") c.admission_span_days = static_cast<int>(integer());
      else throw ConfigError("[generator] unknown key '" + key + "'");
    }
  }
  validate_generator_config(c);
  return c;
}

std::string render_generator_config(const GeneratorConfig& c) {
  std::string s = "[generator]\n";
  s += "seed = " + std::to_string(c.seed) + "\n";
  s += "encounters = " + std::to_string(c.encounters) + "\n";
  s += "prevalence = " + join(c.prevalence) + "\n";
  s += "severity = " + join(c.severity) + "\n";
  s += "baseline_hazard = " + format_double(c.baseline_hazard) + "\n";
  s += "hazard_ratio = " + join(c.hazard_ratio) + "\n";
  s += "censor_rate = " + format_double(c.censor_rate) + "\n";
  s += "hospital_death = " + join(c.hospital_death) + "\n";
  s += "female = " + format_double(c.female) + "\n";
  s += "african_american = " + format_double(c.african_american) + "\n";
  s += "over_65 = " + format_double(c.over_65) + "\n";
  s += "icu = " + join(c.icu) + "\n";
  s += "ventilation = " + join(c.ventilation) + "\n";
  s += "cci_rate = " + format_double(c.cci_rate) + "\n";
  s += "krt_fraction = " + format_double(c.krt_fraction) + "\n";
  s += "recurrence_fraction = " + format_double(c.recurrence_fraction) + "\n";
  s += "reference_mix = " + join(c.reference_mix) + "\n";
  s += "start_date = " + format_date(c.start) + "\n";
  s += "admission_span_days = " + std::to_string(c.admission_span_days) + "\n";
  return s;
}

std::string ground_truth_csv(const GroundTruth& truth) {
  std::string out =
      "encounter_id,patient_id,trajectory_group,severity,worst_stage,subphenotype,recurrent,krt,"
      "reference_method,hospital_death,survival_time,event\n";
  auto it = std::back_inserter(out);
  for (const auto& r : truth.rows) {
    fmt::format_to(it, "{},{},{},{},{},{},{},{},{},{},{},{}\n", r.encounter_id, r.patient_id, to_string(r.group),
                   to_string(r.severity), r.worst_stage, to_string(r.subphenotype), int{r.recurrent}, int{r.krt},
                   to_string(r.reference_method), int{r.hospital_death},
                   r.survival_time ? format_double(*r.survival_time) : std::string(), int{r.event});
  }
  return out;
}

GroundTruth generate_cohort(const GeneratorConfig& config, const std::filesystem::path& out_dir,
                            const CodeMapConfig& codes) {
  validate_generator_config(config);
  Rng rng(config.seed);
  GroundTruth truth;
  truth.rows.reserve(config.encounters);

  std::string demo = "PATID,BIRTH_DATE,SEX,RACE\n";
  std::string enc = "PATID,ENCOUNTERID,ADMIT_DATETIME,DISCHARGE_DATETIME,DISCHARGE_STATUS\n";
  std::string lab = "PATID,LAB_LOINC,RESULT_NUM,RESULT_UNIT,RESULT_DATETIME\n";
  std::string dx = "PATID,DX,DX_TYPE,DX_DATE\n";
  std::string px = "PATID,PX,PX_TYPE,PX_DATE\n";
  std::string med = "PATID,MEDICATION,MED_DATETIME\n";
  std::string death = "PATID,DEATH_DATE\n";
  lab.reserve(config.encounters * 480);

  // Charlson categories usable without creating CKD by history.
  struct CategoryCode {
    std::string code;
    bool renal;
  };
  std::vector<CategoryCode> categories;
  for (const auto& cat : codes.charlson) {
    auto [code, ctx] = cat.codes.representative();
    const bool renal = codes.ckd.matches(code, CodeContext::diagnosis) ||
                       codes.eskd.matches(code, CodeContext::diagnosis) ||
                       codes.transplant.matches(code, CodeContext::diagnosis);
    categories.push_back({code, renal});
  }
  const auto icu_code = codes.icu.representative();
  const auto vent_code = codes.ventilation.representative();
  const auto krt_code = codes.krt.representative();
  const auto htn_code = codes.hypertension.representative();

  auto emit_code = [&](const std::string& pid, const std::pair<std::string, std::optional<CodeContext>>& code,
                       Date date) {
    if (code.second == CodeContext::diagnosis) {
      fmt::format_to(std::back_inserter(dx), "{},{},{},{}\n", pid, code.first, dx_type(code.first), format_date(date));
    } else {
      fmt::format_to(std::back_inserter(px), "{},{},{},{}\n", pid, code.first, px_type(code.first), format_date(date));
    }
  };
  auto emit_lab = [&](const std::string& pid, std::string_view loinc, double value, std::string_view unit,
                      TimePoint t) {
    fmt::format_to(std::back_inserter(lab), "{},{},{:.2f},{},{}\n", pid, loinc, value, unit, format_timestamp(t));
  };

  for (std::size_t i = 0; i < config.encounters; ++i) {
    GroundTruthRow row;
    row.patient_id = fmt::format("P{:07d}", i + 1);
    row.encounter_id = fmt::format("E{:07d}", i + 1);
    const std::string& pid = row.patient_id;

    const auto group_index = rng.categorical(config.prevalence);
    row.group = static_cast<TrajectoryGroup>(group_index);
    const bool aki = row.group != TrajectoryGroup::no_aki;
    const int stage = aki ? static_cast<int>(rng.categorical(config.severity)) + 1 : 0;

    const bool older = rng.bernoulli(config.over_65);
    const int age = older ? rng.uniform_int(66, 95) : rng.uniform_int(18, 65);
    const Sex sex = rng.bernoulli(config.female) ? Sex::female : Sex::male;
    const bool aa = rng.bernoulli(config.african_american);

    const Date admit_day = config.start + Days{rng.uniform_int(0, config.admission_span_days - 1)};
    const TimePoint admit = to_time(admit_day) + Hours{rng.uniform_int(0, 23)} + std::chrono::minutes{rng.uniform_int(0, 59)};
    fmt::format_to(std::back_inserter(demo), "{},{},{},{}\n", pid,
                   format_date(birth_for_age(admit_day, age, rng.uniform_int(1, 300))),
                   sex == Sex::female ? "F" : "M", aa ? "03" : "05");

    row.reference_method = static_cast<ReferenceMethod>(
        std::array{ReferenceMethod::min_prior_7d, ReferenceMethod::median_prior_8_365d, ReferenceMethod::admission,
                   ReferenceMethod::estimated_ckdepi}[rng.categorical(config.reference_mix)]);
    const bool estimated = row.reference_method == ReferenceMethod::estimated_ckdepi;
    const double b = estimated ? back_calculate_scr(kAssumedBaselineEgfr, age, sex) : round2(rng.uniform(0.6, 1.3));

    // Preadmission creatinine.
    if (row.reference_method == ReferenceMethod::min_prior_7d) {
      // Disjoint offsets so the two values never share a timestamp.
      emit_lab(pid, "2160-0", b, "mg/dL", admit - std::chrono::minutes{rng.uniform_int(6 * 60, 3 * 24 * 60)});
      if (rng.bernoulli(0.5)) {
        emit_lab(pid, "2160-0", ceil2(b * rng.uniform(1.0, 1.1)), "mg/dL",
                 admit - std::chrono::minutes{rng.uniform_int(3 * 24 * 60 + 1, 6 * 24 * 60)});
      }
    } else if (row.reference_method == ReferenceMethod::median_prior_8_365d) {
      emit_lab(pid, "2160-0", round2(b * 0.9), "mg/dL", admit - Days{rng.uniform_int(10, 60)});
      emit_lab(pid, "2160-0", b, "mg/dL", admit - Days{rng.uniform_int(90, 180)});
      emit_lab(pid, "2160-0", round2(b * 1.1), "mg/dL", admit - Days{rng.uniform_int(200, 360)});
    }

    // In-stay series on a 12-hour grid, as ratio-band stages.
    std::vector<int> stages;
    auto pre = [&](int n) { stages.insert(stages.end(), static_cast<std::size_t>(n), 0); };
    auto episode = [&](int n, int peak_stage) {
      const std::size_t start = stages.size();
      stages.insert(stages.end(), static_cast<std::size_t>(n), 1);
      stages[start + static_cast<std::size_t>(rng.uniform_int(0, n - 1))] = peak_stage;
    };
    int onset_index = -1;
    bool krt = false;
    switch (row.group) {
      case TrajectoryGroup::no_aki:
        pre(rng.uniform_int(3, 12));
        break;
      case TrajectoryGroup::rapidly_reversed:
        pre(rng.uniform_int(1, 3));
        onset_index = static_cast<int>(stages.size());
        episode(rng.uniform_int(1, 4), stage);
        pre(rng.uniform_int(1, 4));
        if (rng.bernoulli(config.recurrence_fraction)) {
          row.recurrent = true;
          episode(rng.uniform_int(1, 3), 1);
          if (rng.bernoulli(0.5)) pre(rng.uniform_int(1, 3));
        }
        break;
      case TrajectoryGroup::persistent_with_recovery:
      case TrajectoryGroup::persistent_without_recovery: {
        pre(rng.uniform_int(1, 3));
        onset_index = static_cast<int>(stages.size());
        episode(rng.uniform_int(5, 10), stage);
        if (row.group == TrajectoryGroup::persistent_with_recovery) pre(rng.uniform_int(1, 4));
        krt = stage == 3 && rng.bernoulli(config.krt_fraction);
        break;
      }
    }

    const TimePoint t0 = estimated ? admit + std::chrono::minutes{rng.uniform_int(25 * 60, 36 * 60)}
                                   : admit + std::chrono::minutes{rng.uniform_int(60, 20 * 60)};
    std::vector<Point> series;
    for (std::size_t k = 0; k < stages.size(); ++k) {
      const TimePoint t = t0 + Hours{12 * static_cast<long>(k)};
      double v;
      if (stages[k] == 0) {
        const bool first_admission = k == 0 && row.reference_method == ReferenceMethod::admission;
        v = first_admission ? b : ceil2(b * rng.uniform(1.0, 1.1));
      } else {
        const auto& band = kBands[static_cast<std::size_t>(stages[k])];
        v = round2(b * rng.uniform(band[0], band[1]));
      }
      series.push_back({t, v});
    }
    for (const auto& p : series) emit_lab(pid, "2160-0", p.value, "mg/dL", p.time);
    emit_lab(pid, "718-7", round2(rng.uniform(9.0, 15.0)), "g/dL", admit + Hours{2});

    const TimePoint discharge = series.back().time + std::chrono::minutes{rng.uniform_int(60, 11 * 60)};
    row.krt = krt;
    row.worst_stage = krt ? 3 : stage;
    row.severity = !aki ? Severity::none : row.worst_stage >= 2 ? Severity::severe : Severity::mild;
    row.subphenotype = make_subphenotype(row.severity, row.group);

    // Codes: comorbidities within the prior year, in-stay procedures.
    std::vector<std::size_t> pool;
    for (std::size_t c = 0; c < categories.size(); ++c) {
      if (!(estimated && categories[c].renal)) pool.push_back(c);
    }
    const int n_cat = std::min<int>(rng.poisson(config.cci_rate), static_cast<int>(pool.size()));
    for (int c = 0; c < n_cat; ++c) {
      const auto pick = static_cast<std::size_t>(rng.uniform_int(c, static_cast<int>(pool.size()) - 1));
      std::swap(pool[static_cast<std::size_t>(c)], pool[pick]);
      emit_code(pid, {categories[pool[static_cast<std::size_t>(c)]].code, CodeContext::diagnosis},
                admit_day - Days{rng.uniform_int(1, 300)});
    }
    if (rng.bernoulli(0.4)) {
      emit_code(pid, {htn_code.first, CodeContext::diagnosis}, admit_day - Days{rng.uniform_int(1, 300)});
    }
    if (rng.bernoulli(config.icu[group_index])) {
      emit_code(pid, {icu_code.first, icu_code.second.value_or(CodeContext::procedure)}, admit_day);
    }
    if (rng.bernoulli(config.ventilation[group_index])) {
      emit_code(pid, {vent_code.first, vent_code.second.value_or(CodeContext::procedure)}, admit_day);
    }
    if (krt) {
      emit_code(pid, {krt_code.first, CodeContext::procedure}, to_date(series[static_cast<std::size_t>(onset_index) + 2].time));
    }
    for (const auto& group : codes.nephrotoxins) {
      if (group.patterns.empty() || !rng.bernoulli(0.15)) continue;
      std::string name = group.patterns.front();
      if (!name.empty()) name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
      fmt::format_to(std::back_inserter(med), "{},{},{}\n", pid, csv_escape(name),
                     format_timestamp(admit + std::chrono::minutes{rng.uniform_int(0, 72 * 60)}));
    }

    // Disposition and mortality.
    row.hospital_death = rng.bernoulli(config.hospital_death[group_index]);
    const Date discharge_day = to_date(discharge);
    std::string_view status = row.hospital_death ? "E" : (rng.bernoulli(0.7) ? "HO" : "SN");
    const double t_death = rng.exponential(config.baseline_hazard * config.hazard_ratio[group_index]);
    const double t_censor = rng.exponential(config.censor_rate);
    if (row.hospital_death) {
      fmt::format_to(std::back_inserter(death), "{},{}\n", pid, format_date(discharge_day));
    } else {
      const double horizon = 1095.0;
      if (t_death < t_censor) {
        const long days = std::max(1L, static_cast<long>(std::ceil(t_death)));
        fmt::format_to(std::back_inserter(death), "{},{}\n", pid, format_date(discharge_day + Days{days}));
        row.event = days <= 1095;
        row.survival_time = row.event ? static_cast<double>(days) : horizon;
      } else {
        const long days = std::isinf(t_censor) ? 100000L : static_cast<long>(std::floor(t_censor));
        emit_lab(pid, "718-7", round2(rng.uniform(9.0, 15.0)), "g/dL", to_time(discharge_day + Days{days}) + Hours{12});
        row.survival_time = std::min(static_cast<double>(days), horizon);
      }
    }
    fmt::format_to(std::back_inserter(enc), "{},{},{},{},{}\n", pid, row.encounter_id, format_timestamp(admit),
                   format_timestamp(discharge), status);
    truth.rows.push_back(std::move(row));
  }

  std::filesystem::create_directories(out_dir);
  const IngestConfig layout = default_ingest_config();
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + (out_dir / name).string());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw DataError("failed writing " + (out_dir / name).string());
  };
  write(layout.table(Table::demographic).file, demo);
  write(layout.table(Table::encounter).file, enc);
  write(layout.table(Table::lab).file, lab);
  write(layout.table(Table::diagnosis).file, dx);
  write(layout.table(Table::procedure).file, px);
  write(layout.table(Table::medication).file, med);
  write(layout.table(Table::death).file, death);
  write(std::string(kGroundTruthFile), ground_truth_csv(truth));
  return truth;
}

}  // namespace ktraj
