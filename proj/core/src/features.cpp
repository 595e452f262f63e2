#include "ktraj/features.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace ktraj {

namespace {

std::span<const CodedEvent> history_codes(std::span<const CodedEvent> codes, Date admit, Days lookback) {
  auto lo = std::lower_bound(codes.begin(), codes.end(), admit - lookback,
                             [](const CodedEvent& c, Date d) { return c.date < d; });
  auto hi = std::lower_bound(lo, codes.end(), admit, [](const CodedEvent& c, Date d) { return c.date < d; });
  return {lo, hi};
}

bool any_dx(std::span<const CodedEvent> codes, const CodeList& list) {
  return std::any_of(codes.begin(), codes.end(), [&](const CodedEvent& c) {
    return c.context == CodeContext::diagnosis && list.matches(c.code, c.context);
  });
}

bool has_category(std::span<const CodedEvent> codes, const CodeMapConfig& config, std::string_view name) {
  const auto* cat = config.find_charlson(name);
  return cat != nullptr && any_dx(codes, cat->codes);
}

}  // namespace

int charlson_score(std::span<const CodedEvent> codes, Date admit, const CodeMapConfig& config, Days lookback) {
  const auto window = history_codes(codes, admit, lookback);
  std::set<std::string> matched;
  for (const auto& cat : config.charlson) {
    if (any_dx(window, cat.codes)) matched.insert(cat.name);
  }
  for (const auto& cat : config.charlson) {
    if (!matched.count(cat.name)) continue;
    for (const auto& lower : cat.supersedes) matched.erase(lower);
  }
  int score = 0;
  for (const auto& cat : config.charlson) {
    if (matched.count(cat.name)) score += cat.weight;
  }
  return score;
}

bool detect_code_flag(std::span<const CodedEvent> codes, const CodeList& list) {
  return std::any_of(codes.begin(), codes.end(),
                     [&](const CodedEvent& c) { return list.matches(c.code, c.context); });
}

int nephrotoxin_group_count(std::span<const MedicationEvent> meds, TimePoint begin, TimePoint end,
                            const CodeMapConfig& config) {
  if (end < begin) throw std::invalid_argument("nephrotoxin window ends before it starts");
  int count = 0;
  for (const auto& group : config.nephrotoxins) {
    const bool hit = std::any_of(meds.begin(), meds.end(), [&](const MedicationEvent& m) {
      return m.time >= begin && m.time < end && group.matches(m.name);
    });
    if (hit) ++count;
  }
  return count;
}

EncounterFeatures extract_features(const CohortStore& store, const EncounterRecord& e, const CodeMapConfig& config,
                                   bool ckd_present, std::optional<TimePoint> first_aki_onset) {
  const auto& patient = store.patient_of(e);
  const Date admit_day = to_date(e.admit);
  const auto history = history_codes(patient.codes, admit_day, kComorbidityLookback);
  const auto stay = store.in_stay_codes(e);

  EncounterFeatures f;
  f.cci = charlson_score(patient.codes, admit_day, config);
  f.hypertension = any_dx(history, config.hypertension);
  f.chronic_pulmonary = has_category(history, config, "chronic_pulmonary_disease");
  f.cardiovascular = has_category(history, config, "congestive_heart_failure") ||
                     has_category(history, config, "peripheral_vascular_disease") ||
                     any_dx(history, config.coronary_artery_disease);
  f.diabetes = has_category(history, config, "diabetes") || has_category(history, config, "diabetes_complicated");
  f.ckd = ckd_present;
  f.icu = detect_code_flag(stay, config.icu);
  f.ventilation = detect_code_flag(stay, config.ventilation);
  f.krt = std::any_of(stay.begin(), stay.end(), [&](const CodedEvent& c) {
    return c.context == CodeContext::procedure && config.krt.matches(c.code, c.context);
  });

  // Medications are searched patient-wide so windows may run past discharge.
  const std::span<const MedicationEvent> meds(patient.medications);
  if (const auto* vaso = config.find_nephrotoxin(kVasopressorGroup)) {
    const auto in_stay = store.in_stay_medications(e);
    f.vasopressor = std::any_of(in_stay.begin(), in_stay.end(),
                                [&](const MedicationEvent& m) { return vaso->matches(m.name); });
  }
  f.nephrotoxins.first_2d = nephrotoxin_group_count(meds, e.admit, e.admit + Days{2}, config);
  f.nephrotoxins.first_3d = nephrotoxin_group_count(meds, e.admit, e.admit + Days{3}, config);
  if (first_aki_onset) {
    f.nephrotoxins.before_onset =
        nephrotoxin_group_count(meds, e.admit, std::max(e.admit, *first_aki_onset), config);
  }
  return f;
}

}  // namespace ktraj
