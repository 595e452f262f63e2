#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ktraj/aki_engine.hpp"
#include "ktraj/cdm.hpp"
#include "ktraj/config.hpp"
#include "ktraj/renal_baseline.hpp"
#include "ktraj/stats/survival.hpp"

namespace ktraj {

struct MortalityOutcome {
  bool hospital = false;
  /// Death within 30 days of discharge; unset for hospital deaths.
  std::optional<bool> within_30d_of_discharge;
  bool at_30d = false;
  bool at_1y = false;
  bool at_3y = false;
  /// Effective death date (a recorded death, or discharge date when the
  /// disposition says expired without one).
  std::optional<Date> death_date;
  /// A death recorded before admission was ignored.
  bool death_before_admission = false;
};

struct SurvivalTime {
  /// Days from discharge.
  double time = 0.0;
  bool event = false;
};

struct OutcomeSet {
  MortalityOutcome mortality;
  Disposition disposition = Disposition::unknown;
  // Survivor-only outcomes; unset for hospital deaths or outside their
  // denominator.
  std::optional<bool> readmit_30d;
  std::optional<bool> readmit_90d;
  std::optional<bool> readmit_1y;
  /// Only for encounters without in-stay KRT.
  std::optional<bool> new_krt_90d;
  std::optional<bool> new_krt_1y;
  /// Only for encounters without index CKD.
  std::optional<bool> new_ckd_90d;
  std::optional<bool> new_ckd_1y;
  /// Only for encounters with index CKD and a known index G-stage.
  std::optional<bool> ckd_progression_1y;
  /// Trajectory group of the first readmission within 30 days, when that
  /// encounter was phenotyped.
  std::optional<TrajectoryGroup> readmission_group_30d;
  /// Set for encounters discharged alive.
  std::optional<SurvivalTime> survival;
};

MortalityOutcome derive_mortality(const PatientRecord& patient, const EncounterRecord& e, const OutcomeConfig& config);

/// Follow-up time from discharge under the censoring rule: death within the
/// horizon is an event, otherwise censored at min(horizon, end of data)
/// where end of data is the administrative end or the last activity.
std::optional<SurvivalTime> survival_time(const PatientRecord& patient, const EncounterRecord& e,
                                          const MortalityOutcome& mortality, const OutcomeConfig& config);

/// Looks up the phenotype of another encounter (by store index), if it was
/// phenotyped.
using GroupLookup = std::function<std::optional<TrajectoryGroup>(std::size_t)>;

struct IndexRenalState {
  bool krt_in_stay = false;
  CkdStatus ckd;
};

OutcomeSet derive_outcomes(const CohortStore& store, std::size_t encounter_index, const IndexRenalState& index,
                           const CodeMapConfig& codes, const OutcomeConfig& config, const GroupLookup& lookup = {});


/// One record per row discharged alive. `covariates` and `weights`, when
/// given, are indexed like `outcomes`.
std::vector<SurvivalRecord> build_survival_records(std::span<const OutcomeSet> outcomes,
                                                   std::span<const std::vector<double>> covariates = {},
                                                   std::span<const double> weights = {});

}  // namespace ktraj
