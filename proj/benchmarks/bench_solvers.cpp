#include "sgdlab/limit.hpp"
#include "sgdlab/sgdsim.hpp"

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

using namespace sgdlab;

static void BM_SgdStep(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  std::vector<double> theta(d, 1.0), x(d, 0.5);
  for (auto _ : state) {
    sgd_step_inplace(theta, x, 0.1, 1e-4);
    benchmark::DoNotOptimize(theta.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d));
}
BENCHMARK(BM_SgdStep)->Arg(100)->Arg(1000)->Arg(10000);

static void BM_SgdRun(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  SgdConfig cfg;
  cfg.d = d;
  cfg.T = static_cast<double>(d * d) / 4.0;
  cfg.eta = 1.0 / (static_cast<double>(d) * cfg.T);
  cfg.init = ConstantInit{1.0};
  const FieldSampler sampler(CovarianceModel::example1(), d, true);
  const NoiseSpec noise = NoiseSpec::gaussian(1.0);
  std::uint64_t rep = 0;
  for (auto _ : state) {
    RngStream f(7, rep, StreamRole::Field), n(7, rep, StreamRole::Noise);
    ++rep;
    benchmark::DoNotOptimize(run(cfg, sampler, noise, f, n));
  }
}
BENCHMARK(BM_SgdRun)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_SolveOde(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto sd = std::make_shared<const SpectralData>(spectral_decompose(CovarianceModel::example2(), n));
  const GridFunction init = sample_initial(ProfileInit{"smooth_random", 1}, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_ode(sd, init, 1.0, 1.0, 1e-2));
  }
}
BENCHMARK(BM_SolveOde)->Arg(64)->Arg(256);

static void BM_SpectralDecompose(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(spectral_decompose(CovarianceModel::example2(), n));
  }
}
BENCHMARK(BM_SpectralDecompose)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_FluctuationPath(benchmark::State& state) {
  const std::size_t n = 128;
  auto sd = std::make_shared<const SpectralData>(
      spectral_decompose(CovarianceModel::example1(), n, 1e-10));
  auto theta = std::make_shared<const LimitSolution>(
      solve_ode(sd, GridFunction::Constant(n, 1.0), 1.0, 1.0, 1e-3));
  const FluctuationSpec spec(1.0, 0.5, 1.0, FluctuationRegime::ParticleInteraction, theta);
  RngStream rng(3);
  const GridFunction zero = GridFunction::Zero(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_fluctuation_sde(spec, sd, zero, 1.0, 1e-3, rng, 100));
  }
}
BENCHMARK(BM_FluctuationPath)->Unit(benchmark::kMillisecond);
