#include "ktraj/aki_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ktraj {

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::none: return "none";
    case Criterion::absolute_48h: return "absolute-48h";
    case Criterion::relative_ratio: return "relative-ratio";
    case Criterion::krt: break;
  }
  return "krt";
}

std::string_view to_string(Trajectory v) {
  return v == Trajectory::rapidly_reversed ? "rapidly-reversed" : "persistent";
}

std::string_view to_string(TrajectoryGroup v) {
  switch (v) {
    case TrajectoryGroup::no_aki: return "no-aki";
    case TrajectoryGroup::rapidly_reversed: return "rapidly-reversed";
    case TrajectoryGroup::persistent_with_recovery: return "persistent-with-recovery";
    case TrajectoryGroup::persistent_without_recovery: break;
  }
  return "persistent-without-recovery";
}

std::string_view short_label(TrajectoryGroup v) {
  switch (v) {
    case TrajectoryGroup::no_aki: return "no-AKI";
    case TrajectoryGroup::rapidly_reversed: return "RR";
    case TrajectoryGroup::persistent_with_recovery: return "PwR";
    case TrajectoryGroup::persistent_without_recovery: break;
  }
  return "PwoR";
}

std::string_view to_string(Severity v) {
  switch (v) {
    case Severity::none: return "none";
    case Severity::mild: return "mild";
    case Severity::severe: break;
  }
  return "severe";
}

std::string_view to_string(Subphenotype v) {
  switch (v) {
    case Subphenotype::no_aki: return "no-aki";
    case Subphenotype::mild_rapidly_reversed: return "mild-rapidly-reversed";
    case Subphenotype::mild_persistent_with_recovery: return "mild-persistent-with-recovery";
    case Subphenotype::mild_persistent_without_recovery: return "mild-persistent-without-recovery";
    case Subphenotype::severe_rapidly_reversed: return "severe-rapidly-reversed";
    case Subphenotype::severe_persistent_with_recovery: return "severe-persistent-with-recovery";
    case Subphenotype::severe_persistent_without_recovery: break;
  }
  return "severe-persistent-without-recovery";
}

bool AkiPointAssessment::is_marker() const noexcept { return std::isnan(creatinine); }

std::vector<KrtInterval> krt_intervals(const CohortStore& store, const EncounterRecord& e, const CodeMapConfig& codes) {
  std::vector<KrtInterval> out;
  for (const auto& c : store.in_stay_codes(e)) {
    if (c.context != CodeContext::procedure || !codes.krt.matches(c.code, c.context)) continue;
    KrtInterval iv{std::max(to_time(c.date), e.admit), std::min(to_time(c.date + Days{1}), e.discharge)};
    if (iv.end <= iv.begin) {
      // Zero-length stay day (discharge at midnight or same-instant stay).
      if (iv.begin != e.discharge) continue;
      iv.end = iv.begin + std::chrono::seconds{1};
    }
    out.push_back(iv);
  }
  std::sort(out.begin(), out.end(), [](const KrtInterval& a, const KrtInterval& b) { return a.begin < b.begin; });
  std::vector<KrtInterval> merged;
  for (const auto& iv : out) {
    if (!merged.empty() && iv.begin <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, iv.end);
    } else {
      merged.push_back(iv);
    }
  }
  return merged;
}

std::vector<AkiPointAssessment> assess_points(std::span<const CreatininePoint> series, const ReferenceCreatinine& ref,
                                              std::span<const KrtInterval> krt) {
  std::vector<AkiPointAssessment> out;
  out.reserve(series.size() + krt.size());
  const auto krt_active = [&](TimePoint t) {
    return std::any_of(krt.begin(), krt.end(), [&](const KrtInterval& iv) { return iv.contains(t); });
  };

  std::size_t lo48 = 0, lo7 = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const TimePoint t = series[i].time;
    const double scr = series[i].value;
    while (lo48 < i && series[lo48].time < t - kNadirWindow) ++lo48;
    while (lo7 < i && series[lo7].time < t - kBaselineWindow) ++lo7;

    double nadir = std::numeric_limits<double>::infinity();
    for (std::size_t j = lo48; j < i; ++j) nadir = std::min(nadir, series[j].value);
    const bool anchor_in_window = ref.anchor >= t - kNadirWindow && ref.anchor < t;
    if (anchor_in_window || lo48 == i) nadir = std::min(nadir, ref.value);

    double base = ref.value;
    for (std::size_t j = lo7; j < i; ++j) base = std::min(base, series[j].value);

    AkiPointAssessment a;
    a.time = t;
    a.creatinine = scr;
    a.nadir48 = nadir;
    a.baseline7 = base;
    a.ratio = scr / base;
    a.krt_active = krt_active(t);

    const bool absolute = scr - nadir >= kAbsoluteRise - kThresholdEpsilon;
    const bool relative = a.ratio >= kStage1Ratio - kThresholdEpsilon;
    if (a.krt_active || a.ratio >= kStage3Ratio - kThresholdEpsilon) {
      a.stage = 3;
    } else if (a.ratio >= kStage2Ratio - kThresholdEpsilon) {
      a.stage = 2;
    } else if (absolute || relative) {
      a.stage = 1;
    }
    if (relative) {
      a.criterion = Criterion::relative_ratio;
    } else if (absolute) {
      a.criterion = Criterion::absolute_48h;
    } else if (a.krt_active) {
      a.criterion = Criterion::krt;
    }
    out.push_back(a);
  }

  for (const auto& iv : krt) {
    const bool measured = std::any_of(series.begin(), series.end(),
                                      [&](const CreatininePoint& p) { return iv.contains(p.time); });
    if (measured) continue;
    AkiPointAssessment m;
    m.time = iv.begin;
    m.creatinine = std::numeric_limits<double>::quiet_NaN();
    m.nadir48 = m.baseline7 = m.ratio = std::numeric_limits<double>::quiet_NaN();
    m.stage = 3;
    m.criterion = Criterion::krt;
    m.krt_active = true;
    out.push_back(m);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AkiPointAssessment& a, const AkiPointAssessment& b) { return a.time < b.time; });
  return out;
}

std::vector<AkiEpisode> segment_episodes(std::span<const AkiPointAssessment> assessments) {
  std::vector<AkiEpisode> episodes;
  std::optional<AkiEpisode> open;
  for (const auto& a : assessments) {
    if (a.stage > 0) {
      if (!open) {
        open = AkiEpisode{};
        open->onset = a.time;
        open->peak_creatinine = 0.0;
      }
      open->peak_stage = std::max(open->peak_stage, a.stage);
      if (!a.is_marker()) open->peak_creatinine = std::max(open->peak_creatinine, a.creatinine);
      open->krt = open->krt || a.krt_active;
    } else if (open) {
      open->resolution = a.time;
      open->duration_days = days_between(open->onset, a.time);
      episodes.push_back(*open);
      open.reset();
    }
  }
  if (open) {
    open->duration_days = days_between(open->onset, assessments.back().time);
    episodes.push_back(*open);
  }
  return episodes;
}

Subphenotype make_subphenotype(Severity severity, TrajectoryGroup group) {
  if (group == TrajectoryGroup::no_aki || severity == Severity::none) return Subphenotype::no_aki;
  const int offset = severity == Severity::mild ? 0 : 3;
  const int g = static_cast<int>(group) - 1;
  return static_cast<Subphenotype>(1 + offset + g);
}

EncounterAkiResult classify_encounter(std::vector<AkiEpisode> episodes,
                                      std::span<const AkiPointAssessment> assessments, bool died_in_hospital) {
  EncounterAkiResult r;
  r.died_in_hospital = died_in_hospital;
  for (const auto& a : assessments) {
    r.worst_stage = std::max(r.worst_stage, a.stage);
    if (a.krt_active) r.stage3_with_krt = true;
  }
  r.recovered_at_discharge = assessments.empty() || assessments.back().stage == 0;
  r.episodes = std::move(episodes);
  if (r.episodes.empty()) return r;

  r.has_aki = true;
  const AkiEpisode& first = r.episodes.front();
  r.first_onset = first.onset;
  const bool rapid = first.resolved() && (*first.resolution - first.onset) <= kRapidReversal;
  r.first_trajectory = rapid ? Trajectory::rapidly_reversed : Trajectory::persistent;
  r.short_unresolved_first_episode = !first.resolved() && first.duration_days * 24.0 < kRapidReversal.count();
  if (rapid) {
    r.group = TrajectoryGroup::rapidly_reversed;
  } else {
    r.group = r.recovered_at_discharge ? TrajectoryGroup::persistent_with_recovery
                                       : TrajectoryGroup::persistent_without_recovery;
  }
  r.severity = r.worst_stage >= 2 ? Severity::severe : Severity::mild;
  r.subphenotype = make_subphenotype(r.severity, r.group);
  r.recurrent = r.episodes.size() >= 2;
  for (const auto& e : r.episodes) r.total_duration_days += e.duration_days;
  return r;
}

}  // namespace ktraj
