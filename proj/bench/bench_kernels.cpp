#include <random>
#include <vector>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "ctcattn/kernels.hpp"
#include "ctcattn/synth.hpp"
#include "ctcattn/train.hpp"

using namespace ctcattn;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <void (*Gemm)(const kernels::GemmDims&, std::span<const double>,
                       std::span<const double>, std::span<double>)>
void BM_Gemm(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const kernels::GemmDims d{s, s, s};
  const auto a = random_values(s * s, 1), b = random_values(s * s, 2);
  std::vector<double> c(s * s);
  for (auto _ : state) {
    Gemm(d, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * s * s * s));
}

BENCHMARK(BM_Gemm<kernels::serial::gemm>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<kernels::parallel::gemm>)->Name("gemm/parallel")->RangeMultiplier(2)->Range(32, 256);

struct Batch {
  Model model;
  std::vector<Example> examples;
};

Batch& toy_batch(AttnMode mode) {
  static std::vector<std::pair<AttnMode, Batch>> cache;
  for (auto& [m, b] : cache) {
    if (m == mode) return b;
  }
  SynthTaskSpec task;
  task.feature_dim = 3;
  ModelConfig cfg;
  cfg.encoder = EncoderConfig{3, 1, 32, false, 1, 1, 32};
  cfg.charset = task.vocab;
  cfg.attn.set_mode(mode);
  cfg.sync();
  Model model(cfg, 1);
  auto ex = prepare_examples(gen_dataset(task, 16), cfg);
  cache.emplace_back(mode, Batch{std::move(model), std::move(ex)});
  return cache.back().second;
}

// Serial reference: one utterance at a time on the calling thread.
void BM_BatchSerial(benchmark::State& state) {
  Batch& b = toy_batch(static_cast<AttnMode>(state.range(0)));
  ParamSet g = b.model.params().zeros_like();
  for (auto _ : state) {
    double total = 0;
    for (const auto& ex : b.examples) total += utterance_loss(b.model, ex, &g);
    benchmark::DoNotOptimize(total);
  }
}

void BM_BatchParallel(benchmark::State& state) {
  Batch& b = toy_batch(static_cast<AttnMode>(state.range(0)));
  ParamSet g = b.model.params().zeros_like();
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradient(b.model, b.examples, g));
  state.counters["threads"] = omp_get_max_threads();
}

BENCHMARK(BM_BatchSerial)->Name("batch16/serial")->Arg(static_cast<int>(AttnMode::kVanilla))
    ->Arg(static_cast<int>(AttnMode::kComa))->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchParallel)->Name("batch16/parallel")->Arg(static_cast<int>(AttnMode::kVanilla))
    ->Arg(static_cast<int>(AttnMode::kComa))->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
