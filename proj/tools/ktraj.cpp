#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ktraj/config.hpp"
#include "ktraj/error.hpp"
#include "ktraj/pipeline.hpp"
#include "ktraj/report.hpp"
#include "ktraj/synth.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitConfig = 2;
constexpr int kExitModel = 3;

struct PipelineArgs {
  std::string config;
  std::string input;
  std::string output;
  std::string anchor;
  unsigned threads = 0;
};

ktraj::PipelineConfig load_config(const PipelineArgs& args) {
  ktraj::PipelineConfig config = args.config.empty() ? ktraj::PipelineConfig{} : ktraj::load_pipeline_config(args.config);
  if (!args.anchor.empty()) {
    if (args.anchor == "admission") config.outcomes.mortality_anchor = ktraj::MortalityAnchor::admission;
    else if (args.anchor == "discharge") config.outcomes.mortality_anchor = ktraj::MortalityAnchor::discharge;
    else throw ktraj::ConfigError("--anchor must be admission or discharge");
  }
  if (args.threads > 0) config.threads = args.threads;
  return config;
}

int run_pipeline_command(const PipelineArgs& args, ktraj::OutputSet set, std::string& stage) {
  stage = "config";
  const auto config = load_config(args);
  if (!fs::is_directory(args.input)) throw ktraj::ConfigError("input directory not found: " + args.input);
  const auto result = ktraj::run_pipeline(config, args.input, config.threads, &stage);
  stage = "write";
  ktraj::write_outputs(result, config, args.input, args.output, set);
  const auto& tally = result.filtered.tally;
  fmt::print("{} encounters considered, {} included, {} phenotyped -> {}\n", tally.considered, tally.included,
             result.rows.size(), args.output);
  return kExitOk;
}

struct StatsArgs {
  std::string encounters;
  std::string output;
  std::string report;
  std::string models = "all";
  std::string ties = "efron";
  unsigned threads = 1;
};

int run_stats_command(const StatsArgs& args, std::string& stage) {
  stage = "config";
  ktraj::StatsOptions options;
  options.ties = ktraj::stats::parse_tie_method(args.ties);
  options.models = ktraj::parse_model_selection(args.models);
  options.threads = args.threads;
  const auto spec = args.report.empty() ? ktraj::default_report_spec()
                                        : ktraj::parse_report_spec(ktraj::read_text_file(args.report));
  fs::path path = args.encounters;
  if (fs::is_directory(path)) path /= ktraj::kEncountersFile;
  stage = "load";
  const auto table = ktraj::ResultsTable::load(path);
  stage = "stats";
  const auto result = ktraj::run_stats(table, spec, options);
  stage = "write";
  ktraj::write_stats(result, args.output);
  int code = kExitOk;
  for (const auto& m : result.models) {
    if (m.failed()) {
      fmt::print(stderr, "ktraj: model {} failed: {}\n", m.spec.name(), m.error);
      code = kExitModel;
    }
  }
  fmt::print("{} rows, {} tables, {} models -> {}\n", table.rows(), result.tables.size(), result.models.size(),
             args.output);
  return code;
}

struct SimulateArgs {
  std::string config;
  std::string output;
  std::optional<unsigned long long> seed;
  std::optional<long long> encounters;
};

int run_simulate_command(const SimulateArgs& args, std::string& stage) {
  stage = "config";
  auto config = args.config.empty() ? ktraj::GeneratorConfig{}
                                    : ktraj::parse_generator_config(ktraj::read_text_file(args.config));
  if (args.seed) config.seed = *args.seed;
  if (args.encounters) {
    if (*args.encounters <= 0) throw ktraj::ConfigError("--encounters must be positive");
    config.encounters = static_cast<std::size_t>(*args.encounters);
  }
  ktraj::validate_generator_config(config);
  stage = "simulate";
  ktraj::prepare_fresh_directory(args.output);
  const auto truth = ktraj::generate_cohort(config, args.output);
  fmt::print("{} encounters generated (seed {}) -> {}\n", truth.rows.size(), config.seed, args.output);
  return kExitOk;
}

struct ValidateArgs {
  std::string config;
  std::string codemap;
  std::string report;
  std::string generator;
  bool print = false;
};

int run_validate_command(const ValidateArgs& args, std::string& stage) {
  stage = "config";
  if (!args.config.empty()) {
    const auto config = ktraj::load_pipeline_config(args.config);
    fmt::print("config ok: {}\n", args.config);
    if (args.print) fmt::print("{}", ktraj::render_pipeline_config(config));
  }
  if (!args.codemap.empty()) {
    const auto codes = ktraj::load_code_map(args.codemap);
    fmt::print("code map ok: {} (version {})\n", args.codemap, codes.version);
  }
  if (!args.report.empty()) {
    const auto spec = ktraj::parse_report_spec(ktraj::read_text_file(args.report));
    fmt::print("report spec ok: {} ({} variables)\n", args.report, spec.variables.size());
  }
  if (!args.generator.empty()) {
    const auto gen = ktraj::parse_generator_config(ktraj::read_text_file(args.generator));
    ktraj::validate_generator_config(gen);
    fmt::print("generator config ok: {}\n", args.generator);
    if (args.print) fmt::print("{}", ktraj::render_generator_config(gen));
  }
  if (args.config.empty() && args.codemap.empty() && args.report.empty() && args.generator.empty()) {
    const ktraj::PipelineConfig defaults;
    fmt::print("{}", ktraj::render_pipeline_config(defaults));
  }
  return kExitOk;
}

void add_pipeline_options(CLI::App* cmd, PipelineArgs& args) {
  cmd->add_option("-c,--config", args.config, "Pipeline config (INI)");
  cmd->add_option("-i,--input", args.input, "Directory with CDM tables")->required();
  cmd->add_option("-o,--output", args.output, "Fresh output directory")->required();
  cmd->add_option("--anchor", args.anchor, "Mortality horizon anchor")->check(CLI::IsMember({"admission", "discharge"}));
  cmd->add_option("-j,--threads", args.threads, "Worker threads (default from config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AKI trajectory phenotyping and outcome analysis"};
  app.set_version_flag("--version", "ktraj " KTRAJ_VERSION);
  app.require_subcommand(1);

  PipelineArgs phenotype_args;
  auto* phenotype = app.add_subcommand("phenotype", "Ingest, phenotype and derive outcomes");
  add_pipeline_options(phenotype, phenotype_args);

  PipelineArgs outcomes_args;
  auto* outcomes = app.add_subcommand("outcomes", "Write outcome and survival files only");
  add_pipeline_options(outcomes, outcomes_args);

  StatsArgs stats_args;
  auto* stats = app.add_subcommand("stats", "Summary tables, models and KM curves from phenotype results");
  stats->add_option("-e,--encounters", stats_args.encounters, "encounters.csv or a phenotype output directory")
      ->required();
  stats->add_option("-o,--output", stats_args.output, "Fresh output directory")->required();
  stats->add_option("-r,--report", stats_args.report, "Report spec (INI)");
  stats->add_option("-m,--models", stats_args.models, "Models: all, none, cox, logistic or names like cox_all_A");
  stats->add_option("--ties", stats_args.ties, "Cox tie method")->check(CLI::IsMember({"efron", "breslow"}));
  stats->add_option("-j,--threads", stats_args.threads, "Worker threads for model fits");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort with ground truth");
  simulate->add_option("-c,--config", sim_args.config, "Generator config (INI)");
  simulate->add_option("-o,--output", sim_args.output, "Fresh output directory")->required();
  simulate->add_option("-s,--seed", sim_args.seed, "Random seed");
  simulate->add_option("-n,--encounters", sim_args.encounters, "Number of encounters");

  ValidateArgs val_args;
  auto* validate = app.add_subcommand("validate-config", "Check configuration files");
  validate->add_option("-c,--config", val_args.config, "Pipeline config");
  validate->add_option("--codemap", val_args.codemap, "Code map");
  validate->add_option("-r,--report", val_args.report, "Report spec");
  validate->add_option("-g,--generator", val_args.generator, "Generator config");
  validate->add_flag("-p,--print", val_args.print, "Print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::string stage = "config";
  try {
    if (*phenotype) return run_pipeline_command(phenotype_args, ktraj::OutputSet::phenotype, stage);
    if (*outcomes) return run_pipeline_command(outcomes_args, ktraj::OutputSet::outcomes, stage);
    if (*stats) return run_stats_command(stats_args, stage);
    if (*simulate) return run_simulate_command(sim_args, stage);
    if (*validate) return run_validate_command(val_args, stage);
  } catch (const ktraj::ConfigError& e) {
    fmt::print(stderr, "ktraj: error [stage {}]: {}\n", stage, e.what());
    return kExitConfig;
  } catch (const ktraj::DataError& e) {
    fmt::print(stderr, "ktraj: error [stage {}]: {}\n", stage, e.what());
    return kExitData;
  } catch (const ktraj::ModelError& e) {
    fmt::print(stderr, "ktraj: error [stage {}]: {}\n", stage, e.what());
    return kExitModel;
  } catch (const std::exception& e) {
    fmt::print(stderr, "ktraj: error [stage {}]: {}\n", stage, e.what());
    return kExitData;
  }
  return kExitOk;
}
