#include <benchmark/benchmark.h>

#include <vector>

#include "part/kernels.hpp"
#include "part/rng.hpp"
#include "part/train.hpp"
#include "part/dataio.hpp"

using namespace part;

namespace {

using Kernel = void (*)(std::span<const double>, std::span<const double>, std::span<double>, kernels::MatShape, bool);

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <Kernel K>
void BM_Kernel(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  const std::size_t k = static_cast<std::size_t>(state.range(1));
  const std::size_t n = static_cast<std::size_t>(state.range(2));
  const std::vector<double> a = filled(m * k, 1), b = filled(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    K(a, b, c, {m, k, n}, false);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({65, 64, 64})->Args({65, 64, 256})->Args({256, 256, 256})->Args({1024, 128, 128});
}

BENCHMARK(BM_Kernel<kernels::matmul_ref>)->Name("matmul/serial")->Apply(shapes);
BENCHMARK(BM_Kernel<kernels::matmul>)->Name("matmul/openmp")->Apply(shapes);
BENCHMARK(BM_Kernel<kernels::matmul_nt_ref>)->Name("matmul_nt/serial")->Apply(shapes);
BENCHMARK(BM_Kernel<kernels::matmul_nt>)->Name("matmul_nt/openmp")->Apply(shapes);
BENCHMARK(BM_Kernel<kernels::matmul_tn_ref>)->Name("matmul_tn/serial")->Apply(shapes);
BENCHMARK(BM_Kernel<kernels::matmul_tn>)->Name("matmul_tn/openmp")->Apply(shapes);

void BM_PretrainStep(benchmark::State& state) {
  SyntheticSceneSpec spec;
  const auto data = generate_scenes(spec, 64);
  ModelConfig m;
  m.dims = spec.dims();
  m.sampler.patch_size = 8;
  m.sampler.size_min = 8;
  m.sampler.size_max = 8;
  m.sampler.patch_count = 16;
  m.vit.embed_dim = 32;
  m.vit.depth = 2;
  m.vit.heads = 2;
  m.vit.mlp_ratio = 2;
  m.vit.patch_size = 8;
  m.head.kind = static_cast<HeadKind>(state.range(0));
  m.head.patch_count = 16;
  TrainConfig t;
  t.steps = 1 << 30;
  t.batch_size = 16;
  t.pair_count = 256;
  Pretrainer p(m, t, *data);
  for (auto _ : state) benchmark::DoNotOptimize(p.step());
  state.SetLabel(to_string(m.head.kind));
}
BENCHMARK(BM_PretrainStep)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
