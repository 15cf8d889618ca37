#include "sgdlab/field.hpp"

#include <benchmark/benchmark.h>

using namespace sgdlab;

static void BM_FieldDraw(benchmark::State& state, bool prefer_fft) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const FieldSampler sampler(CovarianceModel::example2(), d, prefer_fft);
  RngStream rng(1);
  GridFunction out(d);
  for (auto _ : state) {
    sampler.draw(rng, std::span<double>(out.data(), d));
    benchmark::DoNotOptimize(out.data());
  }
  state.SetLabel(sampler.mode() == SamplerMode::Dense ? "dense" : "fft");
}

BENCHMARK_CAPTURE(BM_FieldDraw, dense, false)->Arg(64)->Arg(512)->Arg(2048);
BENCHMARK_CAPTURE(BM_FieldDraw, fft, true)->Arg(64)->Arg(512)->Arg(2048);

static void BM_SamplerSetup(benchmark::State& state, bool prefer_fft) {
  const auto d = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    FieldSampler sampler(CovarianceModel::example2(), d, prefer_fft);
    benchmark::DoNotOptimize(&sampler);
  }
}

BENCHMARK_CAPTURE(BM_SamplerSetup, dense, false)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SamplerSetup, fft, true)->Arg(64)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);
