#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ktraj/codes.hpp"
#include "ktraj/config.hpp"
#include "ktraj/datetime.hpp"

namespace ktraj {

enum class Sex { female, male, unknown };
enum class Disposition { expired, home_rehab, other_facility, unknown };
enum class Analyte : std::uint8_t { serum_creatinine, other };

std::string_view to_string(Sex sex);
std::string_view to_string(Disposition disposition);

inline constexpr double kMaxPlausibleCreatinine = 50.0;
inline constexpr double kUmolPerMgCreatinine = 88.42;

struct LabObservation {
  TimePoint time;
  Analyte analyte = Analyte::other;
  /// mg/dL for creatinine.
  double value = 0.0;
};

struct CodedEvent {
  Date date;
  CodeContext context = CodeContext::diagnosis;
  CodeSystem system = CodeSystem::other;
  /// Normalized (uppercase, no dots).
  std::string code;
};

struct MedicationEvent {
  TimePoint time;
  /// Lower-cased medication name or class.
  std::string name;
};

struct CreatininePoint {
  TimePoint time;
  double value = 0.0;  // mg/dL
};

using CreatinineSeries = std::vector<CreatininePoint>;

/// Half-open index range into one of a patient's event vectors.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

struct EncounterRecord {
  std::string patient_id;
  std::string encounter_id;
  std::size_t patient_index = 0;
  TimePoint admit;
  TimePoint discharge;
  Disposition disposition = Disposition::unknown;
  /// In-stay events: labs in [admit, discharge], codes dated within the
  /// admit..discharge calendar days, medications in [admit, discharge].
  IndexRange labs;
  IndexRange codes;
  IndexRange medications;
};

struct PatientRecord {
  std::string patient_id;
  std::optional<Date> birth_date;
  Sex sex = Sex::unknown;
  bool african_american = false;
  std::optional<Date> death_date;
  /// All events, time-sorted.
  std::vector<LabObservation> labs;
  std::vector<CodedEvent> codes;
  std::vector<MedicationEvent> medications;
  /// Serum creatinine only, time-sorted, one value per timestamp (max).
  std::vector<CreatininePoint> creatinine;
  /// Encounter indices in admission order.
  std::vector<std::size_t> encounters;
  /// Latest date with any recorded activity (events, encounters, death).
  std::optional<Date> last_activity;
};

struct RowErrorSample {
  std::string table;
  std::size_t line = 0;
  std::string reason;
};

struct TableLoadStats {
  std::size_t rows = 0;
  std::size_t parse_errors = 0;
  std::size_t implausible = 0;
  std::size_t orphans = 0;
};

/// Row-level error ledger produced by load_cohort.
struct IngestReport {
  std::map<std::string, TableLoadStats> tables;
  std::vector<RowErrorSample> samples;

  std::size_t total_errors() const;
};

/// Immutable after load; all downstream stages read it concurrently.
class CohortStore {
 public:
  const std::vector<PatientRecord>& patients() const noexcept { return patients_; }
  const std::vector<EncounterRecord>& encounters() const noexcept { return encounters_; }
  const IngestReport& report() const noexcept { return report_; }

  const PatientRecord& patient_of(const EncounterRecord& e) const { return patients_[e.patient_index]; }

  std::span<const LabObservation> in_stay_labs(const EncounterRecord& e) const;
  std::span<const CodedEvent> in_stay_codes(const EncounterRecord& e) const;
  std::span<const MedicationEvent> in_stay_medications(const EncounterRecord& e) const;

  /// Canonical text dump; identical stores serialize to identical bytes.
  std::string serialize() const;

  /// Builds a store from in-memory records. Sorts events, derives the
  /// creatinine view, links encounters and validates invariants.
  static CohortStore assemble(std::vector<PatientRecord> patients, std::vector<EncounterRecord> encounters,
                              IngestReport report = {});

 private:
  std::vector<PatientRecord> patients_;
  std::vector<EncounterRecord> encounters_;
  IngestReport report_;
};

/// Loads CDM-style tables from `input_dir` as described by `config`.
/// Throws DataError for a missing file, a missing mapped column, or a table
/// whose unparseable-row fraction exceeds config.error_tolerance.
CohortStore load_cohort(const IngestConfig& config, const std::filesystem::path& input_dir);

struct ExclusionTally {
  std::size_t considered = 0;
  std::size_t excluded_age = 0;
  std::size_t excluded_no_creatinine = 0;
  std::size_t included = 0;
};

struct FilteredCohort {
  /// Indices into store.encounters(), ascending.
  std::vector<std::size_t> encounters;
  ExclusionTally tally;
};

inline constexpr int kAdultAge = 18;
inline constexpr Hours kCreatinineAvailabilityWindow{48};

/// Age at admission in whole years; nullopt without a birth date.
std::optional<int> age_at_admission(const CohortStore& store, const EncounterRecord& e);

/// End of the window searched for the encounter's creatinine values:
/// max(discharge, admit + 48h), inclusive.
TimePoint creatinine_window_end(const EncounterRecord& e);

/// Keeps adult encounters (>= 18 at the admission date; unknown birth date
/// counts as an age exclusion) with at least one creatinine during the stay
/// or within 48h of admission. Reasons are applied in that order.
FilteredCohort apply_cohort_filters(const CohortStore& store);
FilteredCohort apply_cohort_filters(const CohortStore& store, std::span<const std::size_t> candidates);

/// Time-sorted creatinine values within [admit, creatinine_window_end].
/// Values sharing a timestamp collapse to their maximum.
CreatinineSeries creatinine_series(const CohortStore& store, const EncounterRecord& e);

/// Sorts and collapses duplicate timestamps to the maximum value.
CreatinineSeries normalize_series(CreatinineSeries points);

std::string tally_to_json(const ExclusionTally& tally);

}  // namespace ktraj
