// Serial reference vs OpenMP lookahead analysis, plus the SATD kernel.
#include <random>

#include <benchmark/benchmark.h>

#include "carf/costs.hpp"
#include "carf/lookahead.hpp"
#include "carf/media_io.hpp"

namespace {

std::vector<carf::Frame> lowres_frames(int width, int height, int frames) {
  const auto v = carf::synth_sequence({width, height, frames, {25, 1}, carf::TexturePattern{3, 1, 11, 128, 60, 8}, {}});
  std::vector<carf::Frame> out;
  for (const auto& f : v.frames) out.push_back(carf::downsample_half(f));
  return out;
}

void BM_AnalyzeSerial(benchmark::State& state) {
  const auto frames = lowres_frames(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 16);
  for (auto _ : state) benchmark::DoNotOptimize(carf::analyze_sequence_serial(frames));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames.size()));
}

void BM_AnalyzeParallel(benchmark::State& state) {
  const auto frames = lowres_frames(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 16);
  for (auto _ : state) benchmark::DoNotOptimize(carf::analyze_sequence(frames));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames.size()));
}

void BM_Satd16(benchmark::State& state) {
  std::mt19937 rng(3);
  carf::MbBlock a, b;
  for (auto& x : a) x = static_cast<std::uint8_t>(rng());
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  for (auto _ : state) benchmark::DoNotOptimize(carf::satd(a, b));
}

}  // namespace

BENCHMARK(BM_AnalyzeSerial)->Args({640, 360})->Args({1920, 1080})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AnalyzeParallel)->Args({640, 360})->Args({1920, 1080})->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Satd16);

BENCHMARK_MAIN();
