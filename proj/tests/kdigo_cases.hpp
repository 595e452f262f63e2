#pragma once

// Hand-built creatinine series with the staging and trajectory each one is
// forced to under the KDIGO rules. Shared by the unit tests and the
// acceptance runner.

#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "ktraj/aki_engine.hpp"
#include "ktraj/datetime.hpp"

namespace kdigo {

using ktraj::Criterion;
using ktraj::TrajectoryGroup;

struct Expect {
  bool has_aki = false;
  int worst_stage = 0;
  TrajectoryGroup group = TrajectoryGroup::no_aki;
  int episodes = 0;
  bool recovered = true;
  bool recurrent = false;
  bool short_unresolved = false;
  bool stage3_with_krt = false;
  /// Criterion at the first point with a stage.
  Criterion first_criterion = Criterion::none;
};

struct Case {
  std::string name;
  double reference = 1.0;
  /// Reference anchor relative to admission.
  int anchor_hours = -24 * 30;
  std::vector<std::pair<int, double>> points;  // (hours after admission, mg/dL)
  std::vector<std::pair<int, int>> krt;        // [begin, end) hours
  bool died = false;
  Expect expect;
};

inline const ktraj::TimePoint kAdmit = *ktraj::parse_timestamp("2021-03-01T08:00:00");

inline ktraj::TimePoint at(int hours) { return kAdmit + ktraj::Hours{hours}; }

struct Run {
  std::vector<ktraj::AkiPointAssessment> assessments;
  ktraj::EncounterAkiResult result;
};

inline Run run(const Case& c) {
  ktraj::CreatinineSeries series;
  for (const auto& [h, v] : c.points) series.push_back({at(h), v});
  ktraj::ReferenceCreatinine ref{c.reference, ktraj::ReferenceMethod::median_prior_8_365d, at(c.anchor_hours)};
  std::vector<ktraj::KrtInterval> krt;
  for (const auto& [b, e] : c.krt) krt.push_back({at(b), at(e)});
  Run r;
  r.assessments = ktraj::assess_points(series, ref, krt);
  r.result = ktraj::classify_encounter(ktraj::segment_episodes(r.assessments), r.assessments, c.died);
  return r;
}

/// Empty when the engine matches the expectation, else a description.
inline std::string check(const Case& c) {
  const Run r = run(c);
  const auto& got = r.result;
  const auto& want = c.expect;
  Criterion first = Criterion::none;
  for (const auto& a : r.assessments) {
    if (a.stage > 0) {
      first = a.criterion;
      break;
    }
  }
  std::string diff;
  auto cmp = [&](const char* what, auto g, auto w) {
    if (g != w) diff += fmt::format(" {}: got {} want {};", what, g, w);
  };
  cmp("has_aki", got.has_aki, want.has_aki);
  cmp("worst_stage", got.worst_stage, want.worst_stage);
  cmp("group", ktraj::short_label(got.group), ktraj::short_label(want.group));
  cmp("episodes", static_cast<int>(got.episodes.size()), want.episodes);
  cmp("recovered", got.recovered_at_discharge, want.recovered);
  cmp("recurrent", got.recurrent, want.recurrent);
  cmp("short_unresolved", got.short_unresolved_first_episode, want.short_unresolved);
  cmp("stage3_with_krt", got.stage3_with_krt, want.stage3_with_krt);
  cmp("first_criterion", ktraj::to_string(first), ktraj::to_string(want.first_criterion));
  const auto severity = want.worst_stage >= 2 ? ktraj::Severity::severe
                        : want.has_aki        ? ktraj::Severity::mild
                                              : ktraj::Severity::none;
  cmp("severity", ktraj::to_string(got.severity), ktraj::to_string(severity));
  cmp("subphenotype", ktraj::to_string(got.subphenotype), ktraj::to_string(ktraj::make_subphenotype(severity, want.group)));
  return diff;
}

inline Expect none() { return {}; }

inline Expect aki(int stage, TrajectoryGroup group, int episodes, bool recovered, Criterion first) {
  Expect e;
  e.has_aki = true;
  e.worst_stage = stage;
  e.group = group;
  e.episodes = episodes;
  e.recovered = recovered;
  e.recurrent = episodes > 1;
  e.first_criterion = first;
  return e;
}

inline std::vector<Case> cases() {
  using G = TrajectoryGroup;
  using C = Criterion;
  std::vector<Case> v;

  // Ratio thresholds. Reference 0.5 keeps every rise from the reference
  // under 0.3 for the sub-threshold values, so only the ratio can fire.
  v.push_back({"ratio 1.49 is below stage 1", 0.5, -720, {{6, 0.745}}, {}, false, none()});
  v.push_back({"ratio 1.50 is stage 1", 0.5, -720, {{6, 0.75}}, {}, false, aki(1, G::persistent_without_recovery, 1, false, C::relative_ratio)});
  v.push_back({"ratio 1.99 is stage 1", 0.5, -720, {{6, 0.995}}, {}, false, aki(1, G::persistent_without_recovery, 1, false, C::relative_ratio)});
  v.push_back({"ratio 2.00 is stage 2", 0.5, -720, {{6, 1.0}}, {}, false, aki(2, G::persistent_without_recovery, 1, false, C::relative_ratio)});
  v.push_back({"ratio 2.99 is stage 2", 0.5, -720, {{6, 1.495}}, {}, false, aki(2, G::persistent_without_recovery, 1, false, C::relative_ratio)});
  v.push_back({"ratio 3.00 is stage 3", 0.5, -720, {{6, 1.5}}, {}, false, aki(3, G::persistent_without_recovery, 1, false, C::relative_ratio)});
  for (auto* c : {&v[1], &v[2], &v[3], &v[4], &v[5]}) c->expect.short_unresolved = true;

  // Absolute rise within 48h; reference 2.0 keeps the ratio near 1.
  v.push_back({"rise 0.29 in 24h is no AKI", 2.0, -720, {{0, 2.0}, {24, 2.29}}, {}, false, none()});
  {
    Case c{"rise 0.30 in 24h is stage 1", 2.0, -720, {{0, 2.0}, {24, 2.3}, {36, 2.0}}, {}, false,
           aki(1, G::rapidly_reversed, 1, true, C::absolute_48h)};
    v.push_back(c);
  }
  v.push_back({"rise 0.30 over 47h is stage 1", 2.2, -720, {{0, 2.0}, {47, 2.3}, {60, 2.0}}, {}, false,
               aki(1, G::rapidly_reversed, 1, true, C::absolute_48h)});
  v.push_back({"rise 0.30 over 49h is outside the window", 2.2, -720, {{0, 2.0}, {49, 2.3}}, {}, false, none()});

  // Reference enters the 48h nadir only when anchored inside the window.
  v.push_back({"reference anchored 12h before admission joins the nadir", 1.0, -12, {{6, 1.2}, {12, 1.31}, {30, 1.0}},
               {}, false, aki(1, G::rapidly_reversed, 1, true, C::absolute_48h)});
  v.push_back({"reference anchored a month earlier stays out of the nadir", 1.0, -720, {{6, 1.2}, {12, 1.31}}, {},
               false, none()});

  // Rolling 7-day baseline.
  v.push_back({"ratio against a value 100h earlier", 3.0, -720, {{0, 1.0}, {100, 1.5}, {110, 1.0}}, {}, false,
               aki(1, G::rapidly_reversed, 1, true, C::relative_ratio)});
  v.push_back({"value 200h earlier is outside the 7-day baseline", 3.0, -720, {{0, 1.0}, {200, 1.5}}, {}, false,
               none()});

  // Trajectory boundary: onset at 12h, first stage-0 value 47/48/49h later.
  v.push_back({"resolution after 47h is rapidly reversed", 1.0, -720, {{0, 1.0}, {12, 1.6}, {59, 1.0}}, {}, false,
               aki(1, G::rapidly_reversed, 1, true, C::relative_ratio)});
  v.push_back({"resolution after 48h is rapidly reversed", 1.0, -720, {{0, 1.0}, {12, 1.6}, {60, 1.0}}, {}, false,
               aki(1, G::rapidly_reversed, 1, true, C::relative_ratio)});
  v.push_back({"resolution after 49h is persistent with recovery", 1.0, -720, {{0, 1.0}, {12, 1.6}, {61, 1.0}}, {},
               false, aki(1, G::persistent_with_recovery, 1, true, C::relative_ratio)});
  v.push_back({"persistent stage 2 that recovers", 1.0, -720, {{0, 1.0}, {12, 2.1}, {36, 2.2}, {72, 1.1}}, {}, false,
               aki(2, G::persistent_with_recovery, 1, true, C::relative_ratio)});

  // Unresolved at discharge.
  v.push_back({"unresolved long episode", 1.0, -720, {{0, 1.0}, {12, 2.1}, {36, 2.2}, {60, 2.2}, {84, 2.1}}, {}, false,
               aki(2, G::persistent_without_recovery, 1, false, C::relative_ratio)});
  {
    Case c{"unresolved episode shorter than 48h", 1.0, -720, {{0, 1.0}, {12, 1.6}, {24, 1.7}}, {}, false,
           aki(1, G::persistent_without_recovery, 1, false, C::relative_ratio)};
    c.expect.short_unresolved = true;
    v.push_back(c);
  }
  v.push_back({"in-hospital death with unresolved stage 3", 1.0, -720, {{0, 1.0}, {24, 3.2}, {96, 3.5}}, {}, true,
               aki(3, G::persistent_without_recovery, 1, false, C::relative_ratio)});

  // Recurrence.
  v.push_back({"two rapidly reversed episodes", 1.0, -720, {{0, 1.0}, {12, 1.6}, {24, 1.0}, {48, 1.0}, {60, 1.6}, {72, 1.0}},
               {}, false, aki(1, G::rapidly_reversed, 2, true, C::relative_ratio)});
  v.push_back({"rapid first episode, unresolved second", 1.0, -720, {{0, 1.0}, {12, 1.6}, {24, 1.0}, {36, 1.6}}, {},
               false, aki(1, G::rapidly_reversed, 2, false, C::relative_ratio)});
  v.push_back({"persistent first episode, relapse at discharge", 1.0, -720, {{0, 1.0}, {12, 1.6}, {72, 1.0}, {84, 1.6}},
               {}, false, aki(1, G::persistent_without_recovery, 2, false, C::relative_ratio)});

  // KRT forces stage 3.
  {
    Case c{"KRT during a stage 1 rise", 1.0, -720, {{0, 1.0}, {12, 1.6}, {36, 1.6}}, {{6, 30}}, false,
           aki(3, G::persistent_without_recovery, 1, false, C::relative_ratio)};
    c.expect.short_unresolved = true;
    c.expect.stage3_with_krt = true;
    v.push_back(c);
  }
  {
    Case c{"KRT day without a measurement", 1.0, -720, {{0, 1.0}, {6, 1.0}, {60, 1.0}}, {{24, 48}}, false,
           aki(3, G::rapidly_reversed, 1, true, C::krt)};
    c.expect.stage3_with_krt = true;
    v.push_back(c);
  }
  {
    Case c{"KRT with normal creatinine", 1.0, -720, {{0, 1.0}, {30, 1.1}, {80, 1.0}}, {{24, 48}}, false,
           aki(3, G::persistent_with_recovery, 1, true, C::krt)};
    c.expect.stage3_with_krt = true;
    v.push_back(c);
  }

  // No AKI.
  v.push_back({"falling creatinine", 2.0, -720, {{0, 2.0}, {24, 1.5}, {48, 1.2}}, {}, false, none()});
  v.push_back({"flat series", 1.0, -720, {{0, 1.0}, {12, 1.1}, {24, 1.0}, {36, 1.2}}, {}, false, none()});
  return v;
}

}  // namespace kdigo
