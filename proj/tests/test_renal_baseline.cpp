#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ktraj/renal_baseline.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ktraj;
using testing::day;
using testing::ts;

TEST_CASE("CKD-EPI matches hand-evaluated values") {
  // Evaluated at 40 significant digits from the published expression.
  struct Row {
    double scr, age;
    Sex sex;
    double egfr;
  };
  const Row rows[] = {
      {0.7, 50, Sex::female, 105.2976011491}, {0.9, 40, Sex::male, 110.7255996036},
      {2.0, 40, Sex::male, 42.4720337356},    {1.0, 50, Sex::female, 68.6334966588},
      {1.2, 70, Sex::male, 65.0565950204},    {0.5, 30, Sex::female, 129.3169597507},
      {4.0, 85, Sex::female, 10.4599322150},  {0.6, 20, Sex::male, 141.7254200397},
  };
  for (const auto& r : rows) {
    CHECK(ckd_epi_egfr(r.scr, r.age, r.sex).egfr == doctest::Approx(r.egfr).epsilon(1e-10));
  }
}

TEST_CASE("CKD-EPI agrees with the branchwise oracle on a grid") {
  for (int i = 0; i < 100; ++i) {
    const double scr = 0.3 + 0.08 * i;
    const double age = 18 + (i * 7) % 83;
    for (Sex sex : {Sex::female, Sex::male}) {
      const double got = ckd_epi_egfr(scr, age, sex).egfr;
      CHECK(std::abs(got - oracle::egfr(scr, age, sex == Sex::female)) < 1e-9);
    }
  }
}

TEST_CASE("eGFR strictly decreases with creatinine") {
  for (Sex sex : {Sex::female, Sex::male}) {
    double prev = ckd_epi_egfr(0.05, 45, sex).egfr;
    for (double scr = 0.06; scr < 20.0; scr += 0.01) {
      const double v = ckd_epi_egfr(scr, 45, sex).egfr;
      REQUIRE(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("CKD-EPI rejects invalid inputs") {
  CHECK_THROWS_AS(ckd_epi_egfr(0.0, 50, Sex::male), std::invalid_argument);
  CHECK_THROWS_AS(ckd_epi_egfr(1.0, 17, Sex::male), std::invalid_argument);
  CHECK_THROWS_AS(ckd_epi_egfr(1.0, 121, Sex::male), std::invalid_argument);
  CHECK_THROWS_AS(ckd_epi_egfr(1.0, 50, Sex::unknown), std::invalid_argument);
  CHECK_THROWS_AS(back_calculate_scr(1e6, 50, Sex::male), std::invalid_argument);
}

TEST_CASE("back-calculation inverts the forward equation") {
  for (int age = 18; age <= 100; age += 2) {
    for (Sex sex : {Sex::female, Sex::male}) {
      for (double target : {15.0, 45.0, 75.0, 104.0, 130.0}) {
        const double scr = back_calculate_scr(target, age, sex);
        const double rel = std::abs(ckd_epi_egfr(scr, age, sex).egfr - target) / target;
        REQUIRE(rel < 1e-9);
      }
    }
  }
  CHECK(back_calculate_scr(105.2976011491, 50, Sex::female) == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(back_calculate_scr(75, 60, Sex::male) == doctest::Approx(oracle::bisect_scr(75, 60, false)).epsilon(1e-6));
}

TEST_CASE("G-stage thresholds are the printed half-open intervals") {
  CHECK(assign_g_stage(90.0) == GStage::G1);
  CHECK(assign_g_stage(std::nextafter(90.0, 0.0)) == GStage::G2);
  CHECK(assign_g_stage(60.0) == GStage::G2);
  CHECK(assign_g_stage(std::nextafter(60.0, 0.0)) == GStage::G3a);
  CHECK(assign_g_stage(50.0) == GStage::G3a);
  CHECK(assign_g_stage(45.0) == GStage::G3a);
  CHECK(assign_g_stage(std::nextafter(45.0, 0.0)) == GStage::G3b);
  CHECK(assign_g_stage(30.0) == GStage::G3b);
  CHECK(assign_g_stage(std::nextafter(30.0, 0.0)) == GStage::G4);
  CHECK(assign_g_stage(15.0) == GStage::G4);
  CHECK(assign_g_stage(14.9) == GStage::G5);
  CHECK(assign_g_stage(std::nan("")) == GStage::unstaged);
}

namespace {

PatientRecord patient(Sex sex = Sex::male, const char* birth = "1960-06-01") {
  PatientRecord p;
  p.patient_id = "P";
  p.sex = sex;
  p.birth_date = day(birth);
  return p;
}

CodedEvent dx(const char* date, const char* code) { return {day(date), CodeContext::diagnosis, CodeSystem::icd10, code}; }

const TimePoint kAdmit = ts("2020-06-15T10:00");

}  // namespace

TEST_CASE("reference cascade") {
  const CkdStatus no_ckd{.present = CkdPresence::no};
  const CreatinineSeries stay = {{kAdmit + Hours{30}, 1.3}, {kAdmit + Hours{40}, 1.1}};

  SUBCASE("minimum of the previous 7 days") {
    auto p = patient();
    p.creatinine = {{kAdmit - Days{20}, 0.6}, {kAdmit - Days{3}, 0.9}, {kAdmit - Hours{20}, 0.8}};
    const auto r = determine_reference_creatinine(p, kAdmit, stay, no_ckd);
    CHECK(r.value == 0.8);
    CHECK(r.method == ReferenceMethod::min_prior_7d);
    CHECK(r.anchor == kAdmit - Hours{20});
  }
  SUBCASE("median of 8-365 days") {
    auto p = patient();
    p.creatinine = {{kAdmit - Days{300}, 1.2}, {kAdmit - Days{200}, 1.6}, {kAdmit - Days{30}, 1.4},
                    {kAdmit - Days{400}, 9.0}};
    const auto r = determine_reference_creatinine(p, kAdmit, stay, no_ckd);
    CHECK(r.value == 1.4);
    CHECK(r.method == ReferenceMethod::median_prior_8_365d);
  }
  SUBCASE("admission value within 24h") {
    const CreatinineSeries s = {{kAdmit + Hours{3}, 1.7}, {kAdmit + Hours{10}, 1.2}};
    const auto r = determine_reference_creatinine(patient(), kAdmit, s, no_ckd);
    CHECK(r.value == 1.7);
    CHECK(r.method == ReferenceMethod::admission);
  }
  SUBCASE("back-calculated without CKD") {
    const auto r = determine_reference_creatinine(patient(), kAdmit, stay, no_ckd);
    CHECK(r.method == ReferenceMethod::estimated_ckdepi);
    CHECK(r.value == doctest::Approx(oracle::bisect_scr(75, 60, false)).epsilon(1e-6));
  }
  SUBCASE("first in-stay value with CKD") {
    const auto r = determine_reference_creatinine(patient(), kAdmit, stay, CkdStatus{.present = CkdPresence::yes});
    CHECK(r.method == ReferenceMethod::first_creatinine);
    CHECK(r.value == 1.3);
  }
  SUBCASE("first in-stay value without age or sex") {
    auto p = patient(Sex::unknown);
    const auto r = determine_reference_creatinine(p, kAdmit, stay, no_ckd);
    CHECK(r.method == ReferenceMethod::first_creatinine);
  }
  SUBCASE("empty series is an error") {
    CHECK_THROWS_AS(determine_reference_creatinine(patient(), kAdmit, {}, CkdStatus{.present = CkdPresence::yes}),
                    std::invalid_argument);
  }
}

TEST_CASE("CKD identification") {
  const auto& codes = default_code_map();
  SUBCASE("diagnosis code before admission") {
    auto p = patient();
    p.codes = {dx("2020-03-07", "N183")};
    const auto s = identify_ckd(p, kAdmit, codes);
    CHECK(s.present == CkdPresence::yes);
    CHECK(s.basis == CkdBasis::medical_history);
  }
  SUBCASE("code on the admission day does not count") {
    auto p = patient();
    p.codes = {dx("2020-06-15", "N183")};
    p.creatinine = {{kAdmit - Days{30}, 1.0}};
    CHECK(identify_ckd(p, kAdmit, codes).present == CkdPresence::no);
  }
  SUBCASE("two reduced eGFR values 120 days apart") {
    auto p = patient();
    const double scr45 = oracle::bisect_scr(45, 59, false);
    p.creatinine = {{kAdmit - Days{200}, scr45}, {kAdmit - Days{80}, scr45}};
    const auto s = identify_ckd(p, kAdmit, codes);
    CHECK(s.present == CkdPresence::yes);
    CHECK(s.basis == CkdBasis::creatinine_criteria);
  }
  SUBCASE("reduced values only 60 days apart") {
    auto p = patient();
    p.creatinine = {{kAdmit - Days{100}, 2.0}, {kAdmit - Days{40}, 2.0}};
    CHECK(identify_ckd(p, kAdmit, codes).present == CkdPresence::no);
  }
  SUBCASE("transplant history") {
    auto p = patient();
    p.codes = {dx("2018-01-01", "Z940")};
    const auto s = identify_ckd(p, kAdmit, codes);
    CHECK(s.present == CkdPresence::yes);
    CHECK(s.basis == CkdBasis::post_transplant);
  }
  SUBCASE("no history at all") {
    const auto s = identify_ckd(patient(), kAdmit, codes);
    CHECK(s.present == CkdPresence::insufficient_data);
    CHECK(s.basis == CkdBasis::none);
  }
  SUBCASE("recent AKI, recovered and not") {
    auto p = patient();
    p.codes = {dx("2020-05-01", "N179")};
    p.creatinine = {{kAdmit - Days{200}, 1.0}, {kAdmit - Days{100}, 1.0}, {kAdmit - Days{2}, 1.05}};
    CHECK(identify_ckd(p, kAdmit, codes).akd == AkdState::recovered_recent_aki);
    p.creatinine.back().value = 1.6;
    CHECK(identify_ckd(p, kAdmit, codes).akd == AkdState::non_recovered_recent_aki);
    p.codes = {dx("2019-05-01", "N179")};
    CHECK(identify_ckd(p, kAdmit, codes).akd == AkdState::none);
  }
}

TEST_CASE("estimated references only occur without CKD") {
  const CreatinineSeries stay = {{kAdmit + Hours{30}, 1.3}};
  for (auto presence : {CkdPresence::yes, CkdPresence::no, CkdPresence::insufficient_data}) {
    const auto r = determine_reference_creatinine(patient(), kAdmit, stay, CkdStatus{.present = presence});
    if (r.method == ReferenceMethod::estimated_ckdepi) CHECK(presence != CkdPresence::yes);
  }
}

TEST_CASE("G-stage uses the reference creatinine and admission age") {
  CkdStatus s{.present = CkdPresence::yes, .basis = CkdBasis::medical_history};
  stage_ckd(s, ReferenceCreatinine{2.0, ReferenceMethod::first_creatinine, kAdmit}, 40, Sex::male);
  REQUIRE(s.egfr);
  CHECK(*s.egfr == doctest::Approx(42.4720337356).epsilon(1e-10));
  CHECK(s.g_stage == GStage::G3b);
  CkdStatus t{.present = CkdPresence::yes};
  stage_ckd(t, ReferenceCreatinine{2.0, ReferenceMethod::first_creatinine, kAdmit}, std::nullopt, Sex::male);
  CHECK(t.g_stage == GStage::unstaged);
  CHECK_FALSE(t.egfr);
}
