#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ktraj/aki_engine.hpp"
#include "ktraj/cdm.hpp"
#include "ktraj/config.hpp"
#include "ktraj/features.hpp"
#include "ktraj/outcomes.hpp"
#include "ktraj/renal_baseline.hpp"

namespace ktraj {

struct EncounterPhenotype {
  std::size_t encounter_index = 0;
  std::optional<int> age;
  RenalBaseline baseline;
  EncounterAkiResult aki;
  EncounterFeatures features;
  OutcomeSet outcomes;
};

struct PhenotypeResult {
  CohortStore store;
  FilteredCohort filtered;
  /// One row per filtered encounter, in store order.
  std::vector<EncounterPhenotype> rows;
};

/// Baseline, AKI, features and outcomes for each filtered encounter.
/// Output is identical for any thread count.
std::vector<EncounterPhenotype> phenotype_cohort(const CohortStore& store, const FilteredCohort& filtered,
                                                 const PipelineConfig& config, unsigned threads = 1);

EncounterPhenotype phenotype_encounter(const CohortStore& store, std::size_t encounter_index,
                                       const PipelineConfig& config);

/// Ingest, filter and phenotype. `stage`, when given, tracks the step in
/// progress for error attribution.
PhenotypeResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& input_dir,
                             unsigned threads = 1, std::string* stage = nullptr);

std::string encounters_csv(const PhenotypeResult& result);
std::string outcomes_csv(const PhenotypeResult& result);
std::string survival_csv(const PhenotypeResult& result);
std::string aki_results_jsonl(const PhenotypeResult& result);
std::string ingest_errors_json(const IngestReport& report);

inline constexpr const char* kEncountersFile = "encounters.csv";
inline constexpr const char* kOutcomesFile = "outcomes.csv";
inline constexpr const char* kSurvivalFile = "survival.csv";
inline constexpr const char* kAkiResultsFile = "aki_results.jsonl";
inline constexpr const char* kExclusionsFile = "exclusions.json";
inline constexpr const char* kIngestErrorsFile = "ingest_errors.json";
inline constexpr const char* kManifestFile = "manifest.json";

enum class OutputSet { phenotype, outcomes };

/// Writes result files plus manifest.json into a fresh (absent or empty)
/// directory. Throws ConfigError if the directory already holds files.
void write_outputs(const PhenotypeResult& result, const PipelineConfig& config, const std::filesystem::path& input_dir,
                   const std::filesystem::path& output_dir, OutputSet set = OutputSet::phenotype);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Creates `dir`, refusing one that exists with any entries.
void prepare_fresh_directory(const std::filesystem::path& dir);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace ktraj
