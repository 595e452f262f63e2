#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ktraj/cdm.hpp"
#include "ktraj/config.hpp"
#include "ktraj/renal_baseline.hpp"

namespace ktraj {

inline constexpr double kAbsoluteRise = 0.3;
inline constexpr double kStage1Ratio = 1.5;
inline constexpr double kStage2Ratio = 2.0;
inline constexpr double kStage3Ratio = 3.0;
inline constexpr Hours kNadirWindow{48};
inline constexpr Days kBaselineWindow{7};
inline constexpr Hours kRapidReversal{48};
/// Slack on threshold comparisons so decimal inputs like 1.3 - 1.0 hit 0.3.
inline constexpr double kThresholdEpsilon = 1e-9;

enum class Criterion { none, absolute_48h, relative_ratio, krt };
std::string_view to_string(Criterion c);

/// Kidney replacement therapy active over [begin, end).
struct KrtInterval {
  TimePoint begin;
  TimePoint end;
  bool contains(TimePoint t) const noexcept { return begin <= t && t < end; }
};

struct AkiPointAssessment {
  TimePoint time;
  /// NaN for a KRT marker (a KRT interval without any measurement).
  double creatinine = 0.0;
  double nadir48 = 0.0;
  double baseline7 = 0.0;
  double ratio = 0.0;
  int stage = 0;
  Criterion criterion = Criterion::none;
  bool krt_active = false;

  bool is_marker() const noexcept;
};

struct AkiEpisode {
  TimePoint onset;
  std::optional<TimePoint> resolution;
  double peak_creatinine = 0.0;
  int peak_stage = 0;
  /// Onset to resolution, or onset to the last assessment when unresolved.
  double duration_days = 0.0;
  bool krt = false;

  bool resolved() const noexcept { return resolution.has_value(); }
};

enum class Trajectory { rapidly_reversed, persistent };
enum class TrajectoryGroup { no_aki, rapidly_reversed, persistent_with_recovery, persistent_without_recovery };
enum class Severity { none, mild, severe };
enum class Subphenotype {
  no_aki,
  mild_rapidly_reversed,
  mild_persistent_with_recovery,
  mild_persistent_without_recovery,
  severe_rapidly_reversed,
  severe_persistent_with_recovery,
  severe_persistent_without_recovery
};

inline constexpr std::size_t kTrajectoryGroupCount = 4;
inline constexpr std::size_t kSubphenotypeCount = 7;

std::string_view to_string(Trajectory v);
std::string_view to_string(TrajectoryGroup v);
std::string_view to_string(Severity v);
std::string_view to_string(Subphenotype v);
/// Short labels: no-AKI, RR, PwR, PwoR.
std::string_view short_label(TrajectoryGroup v);

struct EncounterAkiResult {
  bool has_aki = false;
  int worst_stage = 0;
  bool stage3_with_krt = false;
  std::optional<Trajectory> first_trajectory;
  /// Final assessment has no AKI stage.
  bool recovered_at_discharge = true;
  bool died_in_hospital = false;
  TrajectoryGroup group = TrajectoryGroup::no_aki;
  Severity severity = Severity::none;
  Subphenotype subphenotype = Subphenotype::no_aki;
  bool recurrent = false;
  double total_duration_days = 0.0;
  std::optional<TimePoint> first_onset;
  /// First episode never resolved and was under 48h old at the last
  /// assessment; classified persistent.
  bool short_unresolved_first_episode = false;
  std::vector<AkiEpisode> episodes;
};

/// In-stay KRT procedure codes as day-long intervals clipped to the stay,
/// overlapping days merged.
std::vector<KrtInterval> krt_intervals(const CohortStore& store, const EncounterRecord& e, const CodeMapConfig& codes);

/// Stages every measurement against the rolling 48h nadir and the 7-day
/// baseline. KRT intervals holding no measurement add a stage-3 marker.
std::vector<AkiPointAssessment> assess_points(std::span<const CreatininePoint> series, const ReferenceCreatinine& ref,
                                              std::span<const KrtInterval> krt = {});

std::vector<AkiEpisode> segment_episodes(std::span<const AkiPointAssessment> assessments);

EncounterAkiResult classify_encounter(std::vector<AkiEpisode> episodes,
                                      std::span<const AkiPointAssessment> assessments, bool died_in_hospital);

Subphenotype make_subphenotype(Severity severity, TrajectoryGroup group);

}  // namespace ktraj
