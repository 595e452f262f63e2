#pragma once

#include <optional>
#include <span>

#include "ktraj/cdm.hpp"
#include "ktraj/config.hpp"

namespace ktraj {

inline constexpr Days kComorbidityLookback{365};

struct NephrotoxinCounts {
  int first_2d = 0;
  int first_3d = 0;
  /// [admit, first AKI onset); unset without AKI.
  std::optional<int> before_onset;
};

struct EncounterFeatures {
  int cci = 0;
  bool hypertension = false;
  bool chronic_pulmonary = false;
  /// CHF, coronary artery disease or peripheral vascular disease.
  bool cardiovascular = false;
  bool diabetes = false;
  bool ckd = false;
  bool icu = false;
  bool ventilation = false;
  bool vasopressor = false;
  bool krt = false;
  NephrotoxinCounts nephrotoxins;
};

/// Sum of weights of distinct Charlson categories matched by diagnosis codes
/// dated in [admit - lookback, admit), after hierarchy overrides.
int charlson_score(std::span<const CodedEvent> codes, Date admit, const CodeMapConfig& config,
                   Days lookback = kComorbidityLookback);

bool detect_code_flag(std::span<const CodedEvent> codes, const CodeList& list);

/// Distinct nephrotoxin groups with a medication event in [begin, end).
int nephrotoxin_group_count(std::span<const MedicationEvent> meds, TimePoint begin, TimePoint end,
                            const CodeMapConfig& config);

EncounterFeatures extract_features(const CohortStore& store, const EncounterRecord& e, const CodeMapConfig& config,
                                   bool ckd_present, std::optional<TimePoint> first_aki_onset);

}  // namespace ktraj
