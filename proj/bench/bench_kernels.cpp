#include <benchmark/benchmark.h>

#include "drf/bootstrap.hpp"
#include "drf/simulation.hpp"
#include "drf/spline.hpp"
#include "drf/treatment.hpp"

namespace {

drf::Dataset sample(drf::Study study, std::size_t n) {
  drf::StudySpec spec = drf::default_spec(study);
  spec.n = n;
  spec.seed = 11;
  return drf::generate(spec);
}

std::span<const double> view(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

drf::Execution mode(const benchmark::State& state) {
  return state.range(0) ? drf::Execution::parallel : drf::Execution::serial;
}

void BM_TensorGcv(benchmark::State& state) {
  const drf::Dataset data = sample(drf::Study::sim1, 2000);
  const auto model = drf::fit_treatment_model(data, drf::study_design(drf::Study::sim1));
  const auto s = drf::score(model, data);
  drf::SmoothOptions opt;
  opt.execution = mode(state);
  for (auto _ : state) {
    auto fit = drf::fit_tensor_scm(view(data.treatment()), view(s.theta), view(data.response()), view(data.weights()), opt);
    benchmark::DoNotOptimize(fit);
  }
}
BENCHMARK(BM_TensorGcv)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
  const drf::Dataset data = sample(drf::Study::sim2_linear, 1000);
  drf::EstimatorConfig cfg;
  cfg.kind = drf::EstimatorKind::hi;
  const drf::Grid grid = drf::Grid::range(-1.5, 5.5, 8);
  drf::BootstrapOptions opt;
  opt.design = drf::study_design(drf::Study::sim2_linear);
  opt.execution = mode(state);
  for (auto _ : state) {
    auto r = drf::bootstrap_drf(data, cfg, grid, 50, 3, opt);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_Bootstrap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Replications(benchmark::State& state) {
  drf::StudySpec spec = drf::default_spec(drf::Study::sim1);
  spec.n = 1000;
  drf::EstimatorConfig cfg;
  cfg.kind = drf::EstimatorKind::ivd;
  for (auto _ : state) {
    auto s = drf::run_replications(spec, {cfg}, drf::study_grid(spec), 0.0, 20, 5, mode(state));
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_Replications)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
