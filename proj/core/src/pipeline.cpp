#include "ktraj/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iterator>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "ktraj/csv.hpp"
#include "ktraj/error.hpp"

namespace ktraj {

namespace {

using Json = nlohmann::ordered_json;

std::string opt_bool(const std::optional<bool>& v) { return v ? (*v ? "1" : "0") : ""; }
std::string opt_double(const std::optional<double>& v) { return v ? format_double(*v) : ""; }
std::string bool01(bool v) { return v ? "1" : "0"; }

struct Column {
  const char* name;
  std::string (*get)(const PhenotypeResult&, const EncounterPhenotype&);
};

const EncounterRecord& enc(const PhenotypeResult& r, const EncounterPhenotype& p) {
  return r.store.encounters()[p.encounter_index];
}
const PatientRecord& pat(const PhenotypeResult& r, const EncounterPhenotype& p) {
  return r.store.patient_of(enc(r, p));
}

// clang-format off
const std::vector<Column>& outcome_columns() {
  static const std::vector<Column> cols = {
      {"disposition", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::string(to_string(p.outcomes.disposition)); }},
      {"hospital_mortality", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.outcomes.mortality.hospital); }},
      {"death_30d_after_discharge", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_bool(p.outcomes.mortality.within_30d_of_discharge); }},
      {"mortality_30d", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.outcomes.mortality.at_30d); }},
      {"mortality_1y", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.outcomes.mortality.at_1y); }},
      {"mortality_3y", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.outcomes.mortality.at_3y); }},
      {"readmit_30d", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_bool(p.outcomes.readmit_30d); }},
      {"readmit_90d", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_bool(p.outcomes.readmit_90d); }},
      {"readmit_1y", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_bool(p.outcomes.readmit_1y); }},
      {"readmission_group_30d", [](const PhenotypeResult&, const EncounterPhenotype& p) {
         return p.outcomes.readmission_group_30d ? std::string(short_label(*p.outcomes.readmission_group_30d)) : std::string(); }},
      {"new_krt_90d", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_bool(p.outcomes.new_krt_90d); }},
      {"new_krt_1y", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_bool(p.outcomes.new_krt_1y); }},
      {"new_ckd_90d", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_bool(p.outcomes.new_ckd_90d); }},
      {"new_ckd_1y", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_bool(p.outcomes.new_ckd_1y); }},
      {"ckd_progression_1y", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_bool(p.outcomes.ckd_progression_1y); }},
      {"death_before_admission", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.outcomes.mortality.death_before_admission); }},
      {"survival_time", [](const PhenotypeResult&, const EncounterPhenotype& p) {
         return p.outcomes.survival ? format_double(p.outcomes.survival->time) : std::string(); }},
      {"survival_event", [](const PhenotypeResult&, const EncounterPhenotype& p) {
         return p.outcomes.survival ? bool01(p.outcomes.survival->event) : std::string(); }},
  };
  return cols;
}

const std::vector<Column>& phenotype_columns() {
  static const std::vector<Column> cols = {
      {"patient_id", [](const PhenotypeResult& r, const EncounterPhenotype& p) { return enc(r, p).patient_id; }},
      {"admit", [](const PhenotypeResult& r, const EncounterPhenotype& p) { return format_timestamp(enc(r, p).admit); }},
      {"discharge", [](const PhenotypeResult& r, const EncounterPhenotype& p) { return format_timestamp(enc(r, p).discharge); }},
      {"age", [](const PhenotypeResult&, const EncounterPhenotype& p) { return p.age ? std::to_string(*p.age) : std::string(); }},
      {"age_over_65", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.age && *p.age > 65); }},
      {"female", [](const PhenotypeResult& r, const EncounterPhenotype& p) { return bool01(pat(r, p).sex == Sex::female); }},
      {"african_american", [](const PhenotypeResult& r, const EncounterPhenotype& p) { return bool01(pat(r, p).african_american); }},
      {"reference_creatinine", [](const PhenotypeResult&, const EncounterPhenotype& p) { return format_double(p.baseline.reference.value); }},
      {"reference_method", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::string(to_string(p.baseline.reference.method)); }},
      {"ckd_present", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::string(to_string(p.baseline.ckd.present)); }},
      {"ckd_basis", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::string(to_string(p.baseline.ckd.basis)); }},
      {"g_stage", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::string(to_string(p.baseline.ckd.g_stage)); }},
      {"baseline_egfr", [](const PhenotypeResult&, const EncounterPhenotype& p) { return opt_double(p.baseline.ckd.egfr); }},
      {"akd_state", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::string(to_string(p.baseline.ckd.akd)); }},
      {"has_aki", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.aki.has_aki); }},
      {"worst_stage", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::to_string(p.aki.worst_stage); }},
      {"stage3_with_krt", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.aki.stage3_with_krt); }},
      {"severe_aki", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.aki.worst_stage >= 2); }},
      {"stage3_aki", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.aki.worst_stage == 3); }},
      {"first_trajectory", [](const PhenotypeResult&, const EncounterPhenotype& p) {
         return p.aki.first_trajectory ? std::string(to_string(*p.aki.first_trajectory)) : std::string(); }},
      {"recovered_at_discharge", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.aki.recovered_at_discharge); }},
      {"trajectory_group", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::string(short_label(p.aki.group)); }},
      {"severity", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::string(to_string(p.aki.severity)); }},
      {"subphenotype", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::string(to_string(p.aki.subphenotype)); }},
      {"recurrent", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.aki.recurrent); }},
      {"episodes", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::to_string(p.aki.episodes.size()); }},
      {"aki_duration_days", [](const PhenotypeResult&, const EncounterPhenotype& p) {
         return p.aki.has_aki ? format_double(p.aki.total_duration_days) : std::string(); }},
      {"short_unresolved_first_episode", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.aki.short_unresolved_first_episode); }},
      {"cci", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::to_string(p.features.cci); }},
      {"hypertension", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.features.hypertension); }},
      {"chronic_pulmonary", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.features.chronic_pulmonary); }},
      {"cardiovascular", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.features.cardiovascular); }},
      {"diabetes", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.features.diabetes); }},
      {"ckd", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.features.ckd); }},
      {"icu", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.features.icu); }},
      {"ventilation", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.features.ventilation); }},
      {"vasopressor", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.features.vasopressor); }},
      {"krt", [](const PhenotypeResult&, const EncounterPhenotype& p) { return bool01(p.features.krt); }},
      {"nephrotoxins_2d", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::to_string(p.features.nephrotoxins.first_2d); }},
      {"nephrotoxins_3d", [](const PhenotypeResult&, const EncounterPhenotype& p) { return std::to_string(p.features.nephrotoxins.first_3d); }},
      {"nephrotoxins_before_onset", [](const PhenotypeResult&, const EncounterPhenotype& p) {
         return p.features.nephrotoxins.before_onset ? std::to_string(*p.features.nephrotoxins.before_onset) : std::string(); }},
  };
  return cols;
}
// clang-format on

std::string render_csv(const PhenotypeResult& result, const std::vector<const std::vector<Column>*>& groups) {
  std::string out = "encounter_id";
  for (const auto* g : groups) {
    for (const auto& c : *g) out += std::string(",") + c.name;
  }
  out += '\n';
  for (const auto& row : result.rows) {
    out += csv_escape(enc(result, row).encounter_id);
    for (const auto* g : groups) {
      for (const auto& c : *g) {
        out += ',';
        out += csv_escape(c.get(result, row));
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace

EncounterPhenotype phenotype_encounter(const CohortStore& store, std::size_t encounter_index,
                                       const PipelineConfig& config) {
  const auto& e = store.encounters().at(encounter_index);
  EncounterPhenotype p;
  p.encounter_index = encounter_index;
  p.age = age_at_admission(store, e);
  const auto series = creatinine_series(store, e);
  p.baseline = evaluate_renal_baseline(store, e, series, config.codemap);
  const auto krt = krt_intervals(store, e, config.codemap);
  const auto assessments = assess_points(series, p.baseline.reference, krt);
  const bool died = derive_mortality(store.patient_of(e), e, config.outcomes).hospital;
  p.aki = classify_encounter(segment_episodes(assessments), assessments, died);
  p.features = extract_features(store, e, config.codemap, p.baseline.ckd.present == CkdPresence::yes,
                                p.aki.first_onset);
  return p;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  constexpr std::size_t kChunk = 256;
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t error_index = n;
  std::exception_ptr error;
  auto worker = [&]() {
    for (;;) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + kChunk);
      for (std::size_t i = begin; i < end; ++i) {
        try {
          fn(i);
        } catch (...) {
          // Keep the lowest failing index so errors are reproducible.
          std::lock_guard lock(mu);
          if (i < error_index) {
            error_index = i;
            error = std::current_exception();
          }
          break;
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<EncounterPhenotype> phenotype_cohort(const CohortStore& store, const FilteredCohort& filtered,
                                                 const PipelineConfig& config, unsigned threads) {
  const auto& idx = filtered.encounters;
  std::vector<EncounterPhenotype> rows(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t i) { rows[i] = phenotype_encounter(store, idx[i], config); });

  std::vector<std::optional<TrajectoryGroup>> groups(store.encounters().size());
  for (const auto& r : rows) groups[r.encounter_index] = r.aki.group;
  const GroupLookup lookup = [&](std::size_t i) { return groups[i]; };
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    auto& r = rows[i];
    const IndexRenalState state{r.features.krt, r.baseline.ckd};
    r.outcomes = derive_outcomes(store, r.encounter_index, state, config.codemap, config.outcomes, lookup);
  });
  return rows;
}

PhenotypeResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& input_dir, unsigned threads,
                             std::string* stage) {
  auto set_stage = [&](const char* s) {
    if (stage) *stage = s;
  };
  PhenotypeResult result;
  set_stage("ingest");
  result.store = load_cohort(config.ingest, input_dir);
  set_stage("filter");
  result.filtered = apply_cohort_filters(result.store);
  set_stage("phenotype");
  result.rows = phenotype_cohort(result.store, result.filtered, config, threads);
  return result;
}

std::string encounters_csv(const PhenotypeResult& result) {
  return render_csv(result, {&phenotype_columns(), &outcome_columns()});
}

std::string outcomes_csv(const PhenotypeResult& result) { return render_csv(result, {&outcome_columns()}); }

std::string survival_csv(const PhenotypeResult& result) {
  std::string out = "encounter_id,time,event,trajectory_group\n";
  for (const auto& row : result.rows) {
    if (!row.outcomes.survival) continue;
    fmt::format_to(std::back_inserter(out), "{},{},{},{}\n", csv_escape(enc(result, row).encounter_id),
                   format_double(row.outcomes.survival->time), bool01(row.outcomes.survival->event),
                   short_label(row.aki.group));
  }
  return out;
}

std::string aki_results_jsonl(const PhenotypeResult& result) {
  std::string out;
  for (const auto& row : result.rows) {
    const auto& e = enc(result, row);
    const auto& ref = row.baseline.reference;
    const auto& ckd = row.baseline.ckd;
    Json j;
    j["encounter_id"] = e.encounter_id;
    j["patient_id"] = e.patient_id;
    j["reference"] = {{"value", ref.value}, {"method", to_string(ref.method)}, {"anchor", format_timestamp(ref.anchor)}};
    j["ckd"] = {{"present", to_string(ckd.present)},
                {"basis", to_string(ckd.basis)},
                {"g_stage", to_string(ckd.g_stage)},
                {"egfr", ckd.egfr ? Json(*ckd.egfr) : Json(nullptr)},
                {"akd", to_string(ckd.akd)}};
    j["has_aki"] = row.aki.has_aki;
    j["worst_stage"] = row.aki.worst_stage;
    j["stage3_with_krt"] = row.aki.stage3_with_krt;
    j["first_trajectory"] = row.aki.first_trajectory ? Json(to_string(*row.aki.first_trajectory)) : Json(nullptr);
    j["recovered_at_discharge"] = row.aki.recovered_at_discharge;
    j["died_in_hospital"] = row.aki.died_in_hospital;
    j["trajectory_group"] = to_string(row.aki.group);
    j["severity"] = to_string(row.aki.severity);
    j["subphenotype"] = to_string(row.aki.subphenotype);
    j["recurrent"] = row.aki.recurrent;
    j["total_duration_days"] = row.aki.total_duration_days;
    j["short_unresolved_first_episode"] = row.aki.short_unresolved_first_episode;
    Json eps = Json::array();
    for (const auto& ep : row.aki.episodes) {
      eps.push_back({{"onset", format_timestamp(ep.onset)},
                     {"resolution", ep.resolution ? Json(format_timestamp(*ep.resolution)) : Json(nullptr)},
                     {"peak_creatinine", ep.peak_creatinine},
                     {"peak_stage", ep.peak_stage},
                     {"duration_days", ep.duration_days},
                     {"krt", ep.krt}});
    }
    j["episodes"] = std::move(eps);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string ingest_errors_json(const IngestReport& report) {
  Json j;
  Json tables = Json::object();
  for (const auto& [name, t] : report.tables) {
    tables[name] = {{"rows", t.rows}, {"parse_errors", t.parse_errors}, {"implausible", t.implausible},
                    {"orphans", t.orphans}};
  }
  j["total_errors"] = report.total_errors();
  j["tables"] = std::move(tables);
  Json samples = Json::array();
  for (const auto& s : report.samples) samples.push_back({{"table", s.table}, {"line", s.line}, {"reason", s.reason}});
  j["samples"] = std::move(samples);
  return j.dump(2) + "\n";
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) fmt::format_to(std::back_inserter(hex), "{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

void prepare_fresh_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  if (std::filesystem::exists(dir, ec)) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("output path is not a directory: " + dir.string());
    if (!std::filesystem::is_empty(dir)) throw ConfigError("output directory is not empty: " + dir.string());
  }
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("failed writing " + path.string());
}

void write_outputs(const PhenotypeResult& result, const PipelineConfig& config, const std::filesystem::path& input_dir,
                   const std::filesystem::path& output_dir, OutputSet set) {
  prepare_fresh_directory(output_dir);
  std::vector<std::pair<std::string, std::string>> files;
  if (set == OutputSet::phenotype) {
    files.emplace_back(kEncountersFile, encounters_csv(result));
    files.emplace_back(kAkiResultsFile, aki_results_jsonl(result));
    files.emplace_back(kExclusionsFile, tally_to_json(result.filtered.tally));
    files.emplace_back(kIngestErrorsFile, ingest_errors_json(result.store.report()));
  }
  files.emplace_back(kOutcomesFile, outcomes_csv(result));
  files.emplace_back(kSurvivalFile, survival_csv(result));

  Json manifest;
  manifest["tool"] = "ktraj";
  manifest["version"] = KTRAJ_VERSION;
  manifest["output_set"] = set == OutputSet::phenotype ? "phenotype" : "outcomes";
  const std::string config_text = config.config_text.empty() ? render_pipeline_config(config) : config.config_text;
  manifest["config_sha256"] = sha256_hex(config_text);
  manifest["codemap_sha256"] = sha256_hex(config.codemap_text);
  manifest["codemap_version"] = config.codemap.version;
  manifest["egfr_equation"] = kCkdEpi2021.version;
  manifest["mortality_anchor"] = config.outcomes.mortality_anchor == MortalityAnchor::admission ? "admission" : "discharge";

  Json inputs = Json::object();
  for (Table t : kAllTables) {
    const auto& spec = config.ingest.table(t);
    if (spec.file.empty()) continue;
    inputs[spec.file] = sha256_file(input_dir / spec.file);
  }
  manifest["inputs"] = std::move(inputs);

  const auto& tally = result.filtered.tally;
  std::size_t aki = 0;
  std::array<std::size_t, kTrajectoryGroupCount> groups{};
  for (const auto& r : result.rows) {
    if (r.aki.has_aki) ++aki;
    ++groups[static_cast<std::size_t>(r.aki.group)];
  }
  Json counts;
  counts["patients"] = result.store.patients().size();
  counts["encounters_loaded"] = result.store.encounters().size();
  counts["ingest_errors"] = result.store.report().total_errors();
  counts["excluded_age"] = tally.excluded_age;
  counts["excluded_no_creatinine"] = tally.excluded_no_creatinine;
  counts["included"] = tally.included;
  counts["phenotyped"] = result.rows.size();
  counts["aki"] = aki;
  Json by_group = Json::object();
  for (std::size_t g = 0; g < groups.size(); ++g) by_group[std::string(short_label(static_cast<TrajectoryGroup>(g)))] = groups[g];
  counts["trajectory_groups"] = std::move(by_group);
  std::size_t survival = 0;
  for (const auto& r : result.rows) survival += r.outcomes.survival ? 1 : 0;
  counts["survival_records"] = survival;
  manifest["counts"] = std::move(counts);

  Json outputs = Json::object();
  for (const auto& [name, body] : files) {
    write_text_file(output_dir / name, body);
    outputs[name] = sha256_hex(body);
  }
  manifest["outputs"] = std::move(outputs);
  write_text_file(output_dir / kManifestFile, manifest.dump(2) + "\n");
}

}  // namespace ktraj
