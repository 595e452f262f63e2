#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "ktraj/cdm.hpp"
#include "ktraj/config.hpp"

namespace ktraj {

/// CKD-EPI creatinine equation, 2021 refit without race.
struct CkdEpiConstants {
  std::string_view version = "ckd-epi-2021";
  double scale = 142.0;
  double kappa_female = 0.7;
  double kappa_male = 0.9;
  double alpha_female = -0.241;
  double alpha_male = -0.302;
  double upper_exponent = -1.200;
  double age_base = 0.9938;
  double female_factor = 1.012;
};
inline constexpr CkdEpiConstants kCkdEpi2021{};

inline constexpr double kMinEgfrAge = 18.0;
inline constexpr double kMaxEgfrAge = 120.0;
inline constexpr double kBackCalcLowScr = 0.01;
inline constexpr double kBackCalcHighScr = 50.0;
inline constexpr double kAssumedBaselineEgfr = 75.0;

struct EgfrResult {
  double egfr = 0.0;
  double creatinine = 0.0;
  double age = 0.0;
  Sex sex = Sex::unknown;
};

/// Throws std::invalid_argument for scr <= 0, age outside [18, 120] or
/// unknown sex.
EgfrResult ckd_epi_egfr(double scr, double age, Sex sex);

/// Creatinine (mg/dL) at which ckd_epi_egfr equals target_egfr. Throws
/// std::invalid_argument when the target is unattainable for scr in
/// [0.01, 50] or the inputs are invalid.
double back_calculate_scr(double target_egfr, double age, Sex sex);

enum class GStage { G1, G2, G3a, G3b, G4, G5, unstaged };
std::string_view to_string(GStage stage);

/// G1 >= 90, G2 [60,90), G3a [45,60), G3b [30,45), G4 [15,30), G5 < 15.
GStage assign_g_stage(double egfr);

enum class ReferenceMethod { admission, min_prior_7d, median_prior_8_365d, estimated_ckdepi, first_creatinine };
std::string_view to_string(ReferenceMethod method);

struct ReferenceCreatinine {
  double value = 0.0;
  ReferenceMethod method = ReferenceMethod::first_creatinine;
  TimePoint anchor;
};

enum class CkdPresence { yes, no, insufficient_data };
enum class CkdBasis { medical_history, creatinine_criteria, post_transplant, none };
enum class AkdState { none, recovered_recent_aki, non_recovered_recent_aki };

std::string_view to_string(CkdPresence v);
std::string_view to_string(CkdBasis v);
std::string_view to_string(AkdState v);

struct CkdStatus {
  CkdPresence present = CkdPresence::no;
  CkdBasis basis = CkdBasis::none;
  GStage g_stage = GStage::unstaged;
  /// eGFR behind g_stage, when computable.
  std::optional<double> egfr{};
  AkdState akd = AkdState::none;
};

inline constexpr Days kCkdChronicity{90};
inline constexpr Days kRecentAkiLookback{90};
inline constexpr double kCkdEgfrThreshold = 60.0;

/// CKD presence and basis, plus the AKD-on-admission state, from history
/// strictly before admission. g_stage is left unstaged; see stage_ckd.
CkdStatus identify_ckd(const PatientRecord& patient, TimePoint admit, const CodeMapConfig& codes);

/// Cascade: minimum in the 7 days before admit, median 8-365 days before,
/// earliest value within 24h after admit, back-calculated at eGFR 75 when
/// CKD is not present, else the first in-stay value.
/// Throws std::invalid_argument when nothing applies (empty series).
ReferenceCreatinine determine_reference_creatinine(const PatientRecord& patient, TimePoint admit,
                                                   std::span<const CreatininePoint> series,
                                                   const CkdStatus& ckd);

/// Fills g_stage/egfr from the reference creatinine and age at admission.
void stage_ckd(CkdStatus& ckd, const ReferenceCreatinine& ref, std::optional<int> age, Sex sex);

struct RenalBaseline {
  CkdStatus ckd;
  ReferenceCreatinine reference;
};

RenalBaseline evaluate_renal_baseline(const CohortStore& store, const EncounterRecord& e,
                                      std::span<const CreatininePoint> series, const CodeMapConfig& codes);

double median(std::span<const double> values);

}  // namespace ktraj
