#include <benchmark/benchmark.h>

#include <unistd.h>

#include <filesystem>
#include <map>
#include <random>

#include "ktraj/pipeline.hpp"
#include "ktraj/stats/cox.hpp"
#include "ktraj/stats/survival.hpp"
#include "ktraj/synth.hpp"

namespace {

using namespace ktraj;

// Generated once per size and reused across benchmark repetitions.
struct CohortDirs : std::map<std::size_t, std::filesystem::path> {
  ~CohortDirs() {
    std::error_code ec;
    for (const auto& [n, dir] : *this) std::filesystem::remove_all(dir, ec);
  }
};

const std::filesystem::path& cohort_dir(std::size_t n) {
  static CohortDirs dirs;
  auto it = dirs.find(n);
  if (it == dirs.end()) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("ktraj-bench-" + std::to_string(::getpid()) + "-" + std::to_string(n));
    std::filesystem::remove_all(dir);
    GeneratorConfig cfg;
    cfg.encounters = n;
    cfg.seed = 17;
    generate_cohort(cfg, dir);
    it = dirs.emplace(n, dir).first;
  }
  return it->second;
}

std::vector<SurvivalRecord> survival_records(std::size_t n, std::size_t p) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<SurvivalRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = out[i];
    r.row = i;
    r.covariates.resize(p);
    double lp = 0.0;
    for (auto& v : r.covariates) {
      v = nd(rng);
      lp += 0.2 * v;
    }
    const double t = std::exponential_distribution<double>(0.002 * std::exp(lp))(rng);
    r.time = std::ceil(std::min(t, 1095.0));
    r.event = t < 1095.0;
  }
  return out;
}

void BM_Ingest(benchmark::State& state) {
  const auto& dir = cohort_dir(static_cast<std::size_t>(state.range(0)));
  const auto ingest = default_ingest_config();
  for (auto _ : state) benchmark::DoNotOptimize(load_cohort(ingest, dir));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Ingest)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Phenotype(benchmark::State& state) {
  const auto& dir = cohort_dir(static_cast<std::size_t>(state.range(0)));
  PipelineConfig cfg;
  const auto store = load_cohort(cfg.ingest, dir);
  const auto filtered = apply_cohort_filters(store);
  for (auto _ : state) benchmark::DoNotOptimize(phenotype_cohort(store, filtered, cfg, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Phenotype)->Arg(10000)->Arg(50000)->Unit(benchmark::kMillisecond);

void BM_CoxFit(benchmark::State& state) {
  const auto records = survival_records(static_cast<std::size_t>(state.range(0)), 9);
  std::vector<std::string> names;
  for (int j = 0; j < 9; ++j) names.push_back("x" + std::to_string(j));
  for (auto _ : state) benchmark::DoNotOptimize(stats::fit_cox(records, names));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CoxFit)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_KaplanMeier(benchmark::State& state) {
  const auto records = survival_records(static_cast<std::size_t>(state.range(0)), 0);
  for (auto _ : state) benchmark::DoNotOptimize(stats::km_estimate(records));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KaplanMeier)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
