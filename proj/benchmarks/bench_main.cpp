// Microbenchmarks for the three hot paths: the shared matmul kernels, codebook
// quantization, and one cached generation pass at the desk configuration.

#include <benchmark/benchmark.h>

#include "flexvar/inference.hpp"
#include "flexvar/kernels.hpp"
#include "flexvar/model.hpp"
#include "flexvar/rng.hpp"
#include "flexvar/scheduler.hpp"
#include "flexvar/tensor.hpp"
#include "flexvar/tokenizer.hpp"

using namespace flexvar;

namespace {

void bm_matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  TensorF a = TensorF::randn({n, n}, rng);
  TensorF b = TensorF::randn({n, n}, rng);
  TensorF c = TensorF::zeros({n, n});
  for (auto _ : state) {
    kernels::matmul(&a[0], &b[0], &c[0], n, n, n);
    benchmark::DoNotOptimize(c[0]);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}

void bm_matmul_bt(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  TensorF a = TensorF::randn({n, n}, rng);
  TensorF b = TensorF::randn({n, n}, rng);
  TensorF c = TensorF::zeros({n, n});
  for (auto _ : state) {
    kernels::matmul_bt(&a[0], &b[0], &c[0], n, n, n);
    benchmark::DoNotOptimize(c[0]);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}

void bm_quantize(benchmark::State& state) {
  Rng rng(3);
  TensorF codebook = TensorF::randn({512, 16}, rng);
  TensorF level = TensorF::randn({16, 8, 8}, rng);
  for (auto _ : state) {
    auto r = tok::quantize_indices(level, codebook);
    benchmark::DoNotOptimize(r.indices[0]);
  }
  state.SetItemsProcessed(state.iterations() * 64);
}

void bm_generate(benchmark::State& state) {
  tok::TokenizerConfig tcfg;
  Rng rng(4);
  const auto tokenizer = tok::init_tokenizer<float>(tcfg, rng.stream("tok"));
  model::ModelConfig mcfg;
  const auto params = model::init_model<float>(mcfg, rng.stream("ar"));
  const auto schedule = sched::inference_schedule("default", {8, 8});
  infer::SamplerConfig sampler;
  sampler.top_k = 16;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    sampler.seed = seed++;
    const auto res = infer::generate(params, tokenizer, 0, schedule, sampler);
    benchmark::DoNotOptimize(res.image[0]);
  }
}

}  // namespace

BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul_bt)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_quantize);
BENCHMARK(bm_generate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
