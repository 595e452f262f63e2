#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "kdigo_cases.hpp"

using namespace ktraj;

TEST_CASE("hand-built KDIGO cases") {
  for (const auto& c : kdigo::cases()) {
    CAPTURE(c.name);
    CHECK(kdigo::check(c) == "");
  }
}

namespace {

// Stage of point i by direct scan of every earlier point.
int oracle_stage(const CreatinineSeries& s, std::size_t i, const ReferenceCreatinine& ref) {
  const TimePoint t = s[i].time;
  double nadir = INFINITY;
  double base = ref.value;
  bool any48 = false;
  for (std::size_t j = 0; j < i; ++j) {
    if (s[j].time >= t - Hours{48}) {
      nadir = std::min(nadir, s[j].value);
      any48 = true;
    }
    if (s[j].time >= t - Days{7}) base = std::min(base, s[j].value);
  }
  if (!any48 || (ref.anchor >= t - Hours{48} && ref.anchor < t)) nadir = std::min(nadir, ref.value);
  const double ratio = s[i].value / base;
  if (ratio >= 3.0 - 1e-9) return 3;
  if (ratio >= 2.0 - 1e-9) return 2;
  if (ratio >= 1.5 - 1e-9 || s[i].value - nadir >= 0.3 - 1e-9) return 1;
  return 0;
}

CreatinineSeries random_series(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> gap(1, 40);
  std::lognormal_distribution<double> level(0.0, 0.35);
  CreatinineSeries s;
  int h = 0;
  for (int i = 0; i < n; ++i) {
    h += gap(rng);
    s.push_back({kdigo::at(h), std::round(level(rng) * 100) / 100});
  }
  return s;
}

}  // namespace

TEST_CASE("point staging agrees with a direct scan") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 400; ++trial) {
    const auto s = random_series(rng, 1 + trial % 25);
    ReferenceCreatinine ref{0.6 + 0.01 * (trial % 60), ReferenceMethod::median_prior_8_365d,
                            kdigo::at(trial % 3 == 0 ? -10 : -400)};
    const auto a = assess_points(s, ref);
    REQUIRE(a.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      CAPTURE(trial);
      CAPTURE(i);
      REQUIRE(a[i].stage == oracle_stage(s, i, ref));
    }
  }
}

TEST_CASE("per-encounter invariants on random series") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = random_series(rng, 1 + trial % 30);
    ReferenceCreatinine ref{0.9, ReferenceMethod::admission, kdigo::at(-300)};
    std::vector<KrtInterval> krt;
    if (trial % 7 == 0) krt.push_back({kdigo::at(50), kdigo::at(74)});
    const auto a = assess_points(s, ref, krt);
    const auto r = classify_encounter(segment_episodes(a), a, trial % 11 == 0);
    CAPTURE(trial);

    for (const auto& p : a) {
      CHECK((p.stage >= 1) == (p.criterion != Criterion::none || p.krt_active));
      if (p.krt_active) CHECK(p.stage == 3);
    }
    CHECK(r.has_aki == (r.worst_stage > 0));
    CHECK(r.has_aki == !r.episodes.empty());
    CHECK(r.recurrent == (r.episodes.size() > 1));
    CHECK((r.group == TrajectoryGroup::no_aki) == !r.has_aki);
    CHECK((r.subphenotype == Subphenotype::no_aki) == !r.has_aki);
    if (r.has_aki) {
      CHECK((r.severity == Severity::severe) == (r.worst_stage >= 2));
      const auto& first = r.episodes.front();
      const bool rapid = first.resolution && *first.resolution - first.onset <= Hours{48};
      CHECK((r.group == TrajectoryGroup::rapidly_reversed) == rapid);
      if (!rapid) CHECK((r.group == TrajectoryGroup::persistent_with_recovery) == r.recovered_at_discharge);
    }
    if (r.stage3_with_krt) CHECK(r.worst_stage == 3);
    for (std::size_t i = 0; i + 1 < r.episodes.size(); ++i) {
      REQUIRE(r.episodes[i].resolution);
      CHECK(*r.episodes[i].resolution <= r.episodes[i + 1].onset);
    }
    double total = 0;
    for (const auto& e : r.episodes) total += e.duration_days;
    CHECK(r.total_duration_days == doctest::Approx(total));
  }
}

TEST_CASE("subphenotype is the product of severity and trajectory") {
  using G = TrajectoryGroup;
  CHECK(make_subphenotype(Severity::mild, G::rapidly_reversed) == Subphenotype::mild_rapidly_reversed);
  CHECK(make_subphenotype(Severity::mild, G::persistent_without_recovery) ==
        Subphenotype::mild_persistent_without_recovery);
  CHECK(make_subphenotype(Severity::severe, G::persistent_with_recovery) ==
        Subphenotype::severe_persistent_with_recovery);
  CHECK(make_subphenotype(Severity::none, G::rapidly_reversed) == Subphenotype::no_aki);
  CHECK(make_subphenotype(Severity::severe, G::no_aki) == Subphenotype::no_aki);
  CHECK(short_label(G::persistent_without_recovery) == "PwoR");
}

TEST_CASE("KRT marker without a measurement is stage 3") {
  CreatinineSeries s = {{kdigo::at(0), 1.0}, {kdigo::at(100), 1.0}};
  ReferenceCreatinine ref{1.0, ReferenceMethod::admission, kdigo::at(0)};
  std::vector<KrtInterval> krt = {{kdigo::at(24), kdigo::at(48)}};
  const auto a = assess_points(s, ref, krt);
  REQUIRE(a.size() == 3);
  CHECK(a[1].is_marker());
  CHECK(a[1].stage == 3);
  CHECK(a[1].criterion == Criterion::krt);
  const auto r = classify_encounter(segment_episodes(a), a, false);
  CHECK(r.worst_stage == 3);
  CHECK(r.stage3_with_krt);
  REQUIRE(r.episodes.size() == 1);
  CHECK(r.episodes[0].peak_creatinine == 0.0);
}
