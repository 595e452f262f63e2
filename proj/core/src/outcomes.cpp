#include "ktraj/outcomes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ktraj {

namespace {

bool within(Date event, Date from, long days) {
  const long d = days_between(from, event);
  return d > 0 && d <= days;
}

bool low_egfr(const PatientRecord& p, const CreatininePoint& c) {
  if (!p.birth_date || p.sex == Sex::unknown) return false;
  const int age = age_in_years(*p.birth_date, to_date(c.time));
  if (age < kMinEgfrAge || age > kMaxEgfrAge) return false;
  return ckd_epi_egfr(c.value, age, p.sex).egfr < kCkdEgfrThreshold;
}

// CKD by code or by a reduced-eGFR pair whose second value lands in the window.
bool new_ckd_within(const PatientRecord& p, const EncounterRecord& e, const CodeMapConfig& codes, long days) {
  const Date discharge_day = to_date(e.discharge);
  for (const auto& c : p.codes) {
    if (c.context != CodeContext::diagnosis || !within(c.date, discharge_day, days)) continue;
    if (codes.ckd.matches(c.code, c.context) || codes.eskd.matches(c.code, c.context)) return true;
  }
  std::optional<TimePoint> first_low;
  const TimePoint window_end = e.discharge + Days{days};
  for (const auto& c : p.creatinine) {
    if (c.time > window_end) break;
    if (!low_egfr(p, c)) continue;
    if (!first_low) first_low = c.time;
    if (c.time > e.discharge && c.time - *first_low >= kCkdChronicity) return true;
  }
  return false;
}

bool new_krt_within(const PatientRecord& p, const EncounterRecord& e, const CodeMapConfig& codes, long days) {
  const Date discharge_day = to_date(e.discharge);
  return std::any_of(p.codes.begin(), p.codes.end(), [&](const CodedEvent& c) {
    return c.context == CodeContext::procedure && within(c.date, discharge_day, days) &&
           codes.krt.matches(c.code, c.context);
  });
}

}  // namespace

MortalityOutcome derive_mortality(const PatientRecord& patient, const EncounterRecord& e, const OutcomeConfig& config) {
  MortalityOutcome m;
  const Date admit_day = to_date(e.admit), discharge_day = to_date(e.discharge);
  std::optional<Date> death = patient.death_date;
  if (death && *death < admit_day) {
    m.death_before_admission = true;
    death.reset();
  }
  if (!death && e.disposition == Disposition::expired) death = discharge_day;
  m.death_date = death;
  m.hospital = e.disposition == Disposition::expired || (death && *death <= discharge_day);
  if (!m.hospital) m.within_30d_of_discharge = death && days_between(discharge_day, *death) <= 30;
  if (death) {
    const Date anchor = config.mortality_anchor == MortalityAnchor::admission ? admit_day : discharge_day;
    const long d = days_between(anchor, *death);
    m.at_30d = d <= 30;
    m.at_1y = d <= 365;
    m.at_3y = d <= 1095;
  }
  return m;
}

std::optional<SurvivalTime> survival_time(const PatientRecord& patient, const EncounterRecord& e,
                                          const MortalityOutcome& mortality, const OutcomeConfig& config) {
  if (mortality.hospital) return std::nullopt;
  const Date discharge_day = to_date(e.discharge);
  const double horizon = config.horizon_days;

  std::optional<Date> end = config.administrative_end;
  if (!end) end = patient.last_activity;
  double censor = end ? static_cast<double>(days_between(discharge_day, *end)) : 0.0;
  censor = std::clamp(censor, 0.0, horizon);

  if (mortality.death_date) {
    const double d = static_cast<double>(days_between(discharge_day, *mortality.death_date));
    const bool covered = !config.administrative_end || *mortality.death_date <= *config.administrative_end;
    if (covered && d <= horizon) return SurvivalTime{std::max(d, 0.0), true};
  }
  return SurvivalTime{censor, false};
}

OutcomeSet derive_outcomes(const CohortStore& store, std::size_t encounter_index, const IndexRenalState& index,
                           const CodeMapConfig& codes, const OutcomeConfig& config, const GroupLookup& lookup) {
  const auto& e = store.encounters().at(encounter_index);
  const auto& p = store.patient_of(e);
  OutcomeSet o;
  o.disposition = e.disposition;
  o.mortality = derive_mortality(p, e, config);
  o.survival = survival_time(p, e, o.mortality, config);
  if (o.mortality.hospital) return o;

  // Later admissions of the same patient.
  std::optional<std::size_t> first_readmit;
  const auto readmit_within = [&](long days) {
    bool hit = false;
    for (std::size_t idx : p.encounters) {
      const auto& other = store.encounters()[idx];
      if (idx == encounter_index || other.admit <= e.discharge) continue;
      if (other.admit - e.discharge <= Days{days}) {
        hit = true;
        if (days == 30 && (!first_readmit || other.admit < store.encounters()[*first_readmit].admit)) {
          first_readmit = idx;
        }
      }
    }
    return hit;
  };
  o.readmit_30d = readmit_within(30);
  o.readmit_90d = readmit_within(90);
  o.readmit_1y = readmit_within(365);
  if (first_readmit && lookup) o.readmission_group_30d = lookup(*first_readmit);

  if (!index.krt_in_stay) {
    o.new_krt_90d = new_krt_within(p, e, codes, 90);
    o.new_krt_1y = new_krt_within(p, e, codes, 365);
  }

  if (index.ckd.present != CkdPresence::yes) {
    o.new_ckd_90d = new_ckd_within(p, e, codes, 90);
    o.new_ckd_1y = new_ckd_within(p, e, codes, 365);
  } else if (index.ckd.g_stage != GStage::unstaged) {
    // Last eGFR within a year after discharge, staged against the index stage.
    bool worse = false;
    const TimePoint end = e.discharge + Days{365};
    for (auto it = p.creatinine.rbegin(); it != p.creatinine.rend(); ++it) {
      if (it->time > end) continue;
      if (it->time <= e.discharge) break;
      if (!p.birth_date || p.sex == Sex::unknown) break;
      const int age = age_in_years(*p.birth_date, to_date(it->time));
      if (age < kMinEgfrAge || age > kMaxEgfrAge) break;
      worse = assign_g_stage(ckd_epi_egfr(it->value, age, p.sex).egfr) > index.ckd.g_stage;
      break;
    }
    o.ckd_progression_1y = worse;
  }
  return o;
}

std::vector<SurvivalRecord> build_survival_records(std::span<const OutcomeSet> outcomes,
                                                   std::span<const std::vector<double>> covariates,
                                                   std::span<const double> weights) {
  if (!covariates.empty() && covariates.size() != outcomes.size()) {
    throw std::invalid_argument("covariate rows do not match outcome rows");
  }
  if (!weights.empty() && weights.size() != outcomes.size()) {
    throw std::invalid_argument("weights do not match outcome rows");
  }
  std::vector<SurvivalRecord> out;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].survival) continue;
    SurvivalRecord r;
    r.row = i;
    r.time = outcomes[i].survival->time;
    r.event = outcomes[i].survival->event;
    if (!weights.empty()) {
      if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) throw std::invalid_argument("weight must be positive");
      r.weight = weights[i];
    }
    if (!covariates.empty()) {
      for (double v : covariates[i]) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite covariate");
      }
      r.covariates = covariates[i];
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ktraj
