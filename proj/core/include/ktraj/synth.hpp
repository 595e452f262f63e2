#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ktraj/aki_engine.hpp"
#include "ktraj/config.hpp"
#include "ktraj/datetime.hpp"
#include "ktraj/renal_baseline.hpp"

namespace ktraj {

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::size_t encounters = 1000;
  /// no-AKI, rapidly reversed, persistent with recovery, persistent without.
  /// The default mix is 14% AKI split 69/31 reversed/persistent.
  std::array<double, 4> prevalence{0.86, 0.0966, 0.01436, 0.02904};
  /// Worst stage 1/2/3 within AKI.
  std::array<double, 3> severity{0.63, 0.21, 0.16};
  /// Post-discharge mortality: exponential with rate baseline_hazard * hazard_ratio[group] per day.
  double baseline_hazard = 0.0002;
  std::array<double, 4> hazard_ratio{1.0, 2.0, 3.0, 5.0};
  /// Exponential loss-to-follow-up rate per day.
  double censor_rate = 1.0 / 1500.0;
  std::array<double, 4> hospital_death{0.01, 0.03, 0.06, 0.20};
  double female = 0.5;
  double african_american = 0.2;
  double over_65 = 0.4;
  std::array<double, 4> icu{0.15, 0.30, 0.40, 0.50};
  std::array<double, 4> ventilation{0.05, 0.10, 0.20, 0.30};
  /// Mean number of Charlson categories present.
  double cci_rate = 0.8;
  /// Share of persistent stage-3 encounters that receive KRT.
  double krt_fraction = 0.3;
  /// Share of rapidly reversed encounters with a second, milder episode.
  double recurrence_fraction = 0.1;
  /// prior 7d, median 8-365d, admission, estimated.
  std::array<double, 4> reference_mix{0.30, 0.20, 0.35, 0.15};
  Date start = Date{std::chrono::year{2014} / 1 / 1};
  int admission_span_days = 1095;
};

/// Throws ConfigError for an infeasible configuration.
void validate_generator_config(const GeneratorConfig& config);

/// INI with a single [generator] section; unknown keys are errors.
GeneratorConfig parse_generator_config(std::string_view ini_text);
std::string render_generator_config(const GeneratorConfig& config);

struct GroundTruthRow {
  std::string encounter_id;
  std::string patient_id;
  TrajectoryGroup group = TrajectoryGroup::no_aki;
  Severity severity = Severity::none;
  int worst_stage = 0;
  Subphenotype subphenotype = Subphenotype::no_aki;
  bool recurrent = false;
  bool krt = false;
  ReferenceMethod reference_method = ReferenceMethod::admission;
  bool hospital_death = false;
  /// Days from discharge; unset for hospital deaths.
  std::optional<double> survival_time;
  bool event = false;
};

struct GroundTruth {
  std::vector<GroundTruthRow> rows;
};

inline constexpr std::string_view kGroundTruthFile = "ground_truth.csv";

/// Writes the CDM tables (default layout) and ground_truth.csv into
/// out_dir, which is created if needed. Identical configs produce
/// identical bytes.
GroundTruth generate_cohort(const GeneratorConfig& config, const std::filesystem::path& out_dir,
                            const CodeMapConfig& codes = default_code_map());

std::string ground_truth_csv(const GroundTruth& truth);

}  // namespace ktraj
