#include "ktraj/renal_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <boost/math/tools/roots.hpp>

namespace ktraj {

namespace {

void check_demographics(double age, Sex sex) {
  if (!(age >= kMinEgfrAge && age <= kMaxEgfrAge)) {
    throw std::invalid_argument("eGFR age out of range [18, 120]");
  }
  if (sex == Sex::unknown) throw std::invalid_argument("eGFR requires a known sex");
}

double egfr_unchecked(double scr, double age, Sex sex) {
  const auto& k = kCkdEpi2021;
  const bool female = sex == Sex::female;
  const double kappa = female ? k.kappa_female : k.kappa_male;
  const double alpha = female ? k.alpha_female : k.alpha_male;
  const double r = scr / kappa;
  double v = k.scale * std::pow(std::min(r, 1.0), alpha) * std::pow(std::max(r, 1.0), k.upper_exponent) *
             std::pow(k.age_base, age);
  if (female) v *= k.female_factor;
  return v;
}

std::optional<double> egfr_if_computable(double scr, std::optional<int> age, Sex sex) {
  if (!age || !(scr > 0.0)) return std::nullopt;
  const double a = *age;
  if (a < kMinEgfrAge || a > kMaxEgfrAge || sex == Sex::unknown) return std::nullopt;
  return egfr_unchecked(scr, a, sex);
}

std::optional<int> age_on(const PatientRecord& p, Date d) {
  if (!p.birth_date) return std::nullopt;
  return age_in_years(*p.birth_date, d);
}

}  // namespace

double median(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

EgfrResult ckd_epi_egfr(double scr, double age, Sex sex) {
  if (!(scr > 0.0)) throw std::invalid_argument("creatinine must be positive");
  check_demographics(age, sex);
  return {egfr_unchecked(scr, age, sex), scr, age, sex};
}

double back_calculate_scr(double target_egfr, double age, Sex sex) {
  if (!(target_egfr > 0.0)) throw std::invalid_argument("target eGFR must be positive");
  check_demographics(age, sex);
  auto f = [&](double scr) { return egfr_unchecked(scr, age, sex) - target_egfr; };
  const double f_lo = f(kBackCalcLowScr), f_hi = f(kBackCalcHighScr);
  if (f_lo < 0.0 || f_hi > 0.0) {
    throw std::invalid_argument("target eGFR unattainable for creatinine in [0.01, 50]");
  }
  if (f_lo == 0.0) return kBackCalcLowScr;
  if (f_hi == 0.0) return kBackCalcHighScr;
  std::uintmax_t iterations = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(f, kBackCalcLowScr, kBackCalcHighScr, f_lo, f_hi,
                                                          boost::math::tools::eps_tolerance<double>(52), iterations);
  return std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
}

std::string_view to_string(GStage stage) {
  switch (stage) {
    case GStage::G1: return "G1";
    case GStage::G2: return "G2";
    case GStage::G3a: return "G3a";
    case GStage::G3b: return "G3b";
    case GStage::G4: return "G4";
    case GStage::G5: return "G5";
    case GStage::unstaged: break;
  }
  return "unstaged";
}

GStage assign_g_stage(double egfr) {
  if (std::isnan(egfr)) return GStage::unstaged;
  if (egfr >= 90.0) return GStage::G1;
  if (egfr >= 60.0) return GStage::G2;
  if (egfr >= 45.0) return GStage::G3a;
  if (egfr >= 30.0) return GStage::G3b;
  if (egfr >= 15.0) return GStage::G4;
  return GStage::G5;
}

std::string_view to_string(ReferenceMethod m) {
  switch (m) {
    case ReferenceMethod::admission: return "admission";
    case ReferenceMethod::min_prior_7d: return "min-prior-7d";
    case ReferenceMethod::median_prior_8_365d: return "median-prior-8-365d";
    case ReferenceMethod::estimated_ckdepi: return "estimated-ckdepi";
    case ReferenceMethod::first_creatinine: break;
  }
  return "first-creatinine";
}

std::string_view to_string(CkdPresence v) {
  switch (v) {
    case CkdPresence::yes: return "yes";
    case CkdPresence::no: return "no";
    case CkdPresence::insufficient_data: break;
  }
  return "insufficient-data";
}

std::string_view to_string(CkdBasis v) {
  switch (v) {
    case CkdBasis::medical_history: return "medical-history";
    case CkdBasis::creatinine_criteria: return "creatinine-criteria";
    case CkdBasis::post_transplant: return "post-transplant";
    case CkdBasis::none: break;
  }
  return "none";
}

std::string_view to_string(AkdState v) {
  switch (v) {
    case AkdState::none: return "none";
    case AkdState::recovered_recent_aki: return "recovered-recent-aki";
    case AkdState::non_recovered_recent_aki: break;
  }
  return "non-recovered-recent-aki";
}

CkdStatus identify_ckd(const PatientRecord& patient, TimePoint admit, const CodeMapConfig& codes) {
  CkdStatus status;
  const Date admit_day = to_date(admit);

  bool any_code = false, ckd_code = false, transplant = false, recent_aki = false;
  for (const auto& c : patient.codes) {
    if (c.date >= admit_day) break;
    any_code = true;
    if (c.context == CodeContext::diagnosis &&
        (codes.ckd.matches(c.code, c.context) || codes.eskd.matches(c.code, c.context))) {
      ckd_code = true;
    }
    if (codes.transplant.matches(c.code, c.context)) transplant = true;
    if (c.context == CodeContext::diagnosis && c.date >= admit_day - kRecentAkiLookback &&
        codes.aki_history.matches(c.code, c.context)) {
      recent_aki = true;
    }
  }

  auto prior_end = std::lower_bound(patient.creatinine.begin(), patient.creatinine.end(), admit,
                                    [](const CreatininePoint& p, TimePoint t) { return p.time < t; });
  const std::span<const CreatininePoint> prior(patient.creatinine.begin(), prior_end);

  std::optional<TimePoint> first_low, last_low;
  for (const auto& p : prior) {
    const auto e = egfr_if_computable(p.value, age_on(patient, to_date(p.time)), patient.sex);
    if (e && *e < kCkdEgfrThreshold) {
      if (!first_low) first_low = p.time;
      last_low = p.time;
    }
  }
  const bool sustained_low = first_low && (*last_low - *first_low) >= kCkdChronicity;

  if (ckd_code) {
    status.present = CkdPresence::yes;
    status.basis = CkdBasis::medical_history;
  } else if (sustained_low) {
    status.present = CkdPresence::yes;
    status.basis = CkdBasis::creatinine_criteria;
  } else if (transplant) {
    status.present = CkdPresence::yes;
    status.basis = CkdBasis::post_transplant;
  } else if (prior.empty() && !any_code) {
    status.present = CkdPresence::insufficient_data;
  }

  if (recent_aki) {
    status.akd = AkdState::recovered_recent_aki;
    if (!prior.empty()) {
      const CreatininePoint latest = prior.back();
      std::vector<double> older;
      for (const auto& p : prior.first(prior.size() - 1)) {
        const auto gap = admit - p.time;
        if (gap > Days{7} && gap <= Days{365}) older.push_back(p.value);
      }
      if (!older.empty()) {
        const double base = median(older);
        if (latest.value / base >= 1.5 - 1e-9 || latest.value - base >= 0.3 - 1e-9) {
          status.akd = AkdState::non_recovered_recent_aki;
        }
      }
    }
  }
  return status;
}

ReferenceCreatinine determine_reference_creatinine(const PatientRecord& patient, TimePoint admit,
                                                   std::span<const CreatininePoint> series, const CkdStatus& ckd) {
  const auto& cr = patient.creatinine;
  auto prior_end = std::lower_bound(cr.begin(), cr.end(), admit,
                                    [](const CreatininePoint& p, TimePoint t) { return p.time < t; });

  // 1. Minimum in (admit - 7d, admit); anchored at the minimum.
  std::optional<CreatininePoint> best;
  std::vector<double> year;
  for (auto it = cr.begin(); it != prior_end; ++it) {
    const auto gap = admit - it->time;
    if (gap <= Days{7}) {
      if (!best || it->value < best->value) best = *it;
    } else if (gap <= Days{365}) {
      year.push_back(it->value);
    }
  }
  if (best) return {best->value, ReferenceMethod::min_prior_7d, best->time};

  // 2. Median 8-365 days before admission.
  if (!year.empty()) return {median(year), ReferenceMethod::median_prior_8_365d, admit};

  // 3. Earliest value within 24h after admission.
  for (const auto& p : series) {
    if (p.time < admit) continue;
    if (p.time - admit <= Hours{24}) return {p.value, ReferenceMethod::admission, p.time};
    break;
  }

  // 4. Back-calculated from an assumed eGFR of 75 when CKD is not present.
  if (ckd.present != CkdPresence::yes) {
    const auto age = age_on(patient, to_date(admit));
    if (age && *age >= kMinEgfrAge && *age <= kMaxEgfrAge && patient.sex != Sex::unknown) {
      return {back_calculate_scr(kAssumedBaselineEgfr, *age, patient.sex), ReferenceMethod::estimated_ckdepi, admit};
    }
  }

  // 5. First in-stay value.
  if (series.empty()) throw std::invalid_argument("no creatinine available for reference determination");
  return {series.front().value, ReferenceMethod::first_creatinine, series.front().time};
}

void stage_ckd(CkdStatus& ckd, const ReferenceCreatinine& ref, std::optional<int> age, Sex sex) {
  ckd.egfr = egfr_if_computable(ref.value, age, sex);
  ckd.g_stage = ckd.egfr ? assign_g_stage(*ckd.egfr) : GStage::unstaged;
}

RenalBaseline evaluate_renal_baseline(const CohortStore& store, const EncounterRecord& e,
                                      std::span<const CreatininePoint> series, const CodeMapConfig& codes) {
  const auto& patient = store.patient_of(e);
  RenalBaseline out;
  out.ckd = identify_ckd(patient, e.admit, codes);
  out.reference = determine_reference_creatinine(patient, e.admit, series, out.ckd);
  stage_ckd(out.ckd, out.reference, age_at_admission(store, e), patient.sex);
  return out;
}

}  // namespace ktraj
