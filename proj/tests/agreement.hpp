#pragma once

// Compares pipeline output against a generator's ground truth.

#include <cmath>
#include <string>
#include <unordered_map>

#include <fmt/format.h>

#include "ktraj/pipeline.hpp"
#include "ktraj/synth.hpp"

namespace agreement {

struct Summary {
  std::size_t compared = 0;
  std::size_t label_mismatches = 0;
  std::size_t survival_mismatches = 0;
  /// Truth rows with no phenotyped encounter.
  std::size_t missing = 0;
  std::string first_problem;

  bool perfect() const { return compared > 0 && label_mismatches == 0 && survival_mismatches == 0 && missing == 0; }
};

inline Summary compare(const ktraj::PhenotypeResult& result, const ktraj::GroundTruth& truth) {
  std::unordered_map<std::string, const ktraj::EncounterPhenotype*> by_id;
  for (const auto& row : result.rows) {
    by_id.emplace(result.store.encounters()[row.encounter_index].encounter_id, &row);
  }
  Summary s;
  auto note = [&](const std::string& msg) {
    if (s.first_problem.empty()) s.first_problem = msg;
  };
  for (const auto& t : truth.rows) {
    const auto it = by_id.find(t.encounter_id);
    if (it == by_id.end()) {
      ++s.missing;
      note(fmt::format("{} was not phenotyped", t.encounter_id));
      continue;
    }
    ++s.compared;
    const auto& aki = it->second->aki;
    if (aki.group != t.group || aki.severity != t.severity || aki.worst_stage != t.worst_stage ||
        aki.subphenotype != t.subphenotype || aki.recurrent != t.recurrent || aki.stage3_with_krt != t.krt ||
        it->second->baseline.reference.method != t.reference_method) {
      ++s.label_mismatches;
      note(fmt::format("{}: got {} stage {} want {} stage {}", t.encounter_id, ktraj::to_string(aki.group),
                       aki.worst_stage, ktraj::to_string(t.group), t.worst_stage));
    }
    const auto& o = it->second->outcomes;
    bool ok = o.mortality.hospital == t.hospital_death;
    if (ok && !t.hospital_death) {
      ok = o.survival && t.survival_time && std::abs(o.survival->time - *t.survival_time) < 1e-9 &&
           o.survival->event == t.event;
    }
    if (!ok) {
      ++s.survival_mismatches;
      note(fmt::format("{}: survival differs", t.encounter_id));
    }
  }
  return s;
}

}  // namespace agreement
