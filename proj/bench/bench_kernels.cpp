// Serial reference vs packed OpenMP gemm on the shapes the trainers actually hit.
#include <benchmark/benchmark.h>

#include "kdla/kernels.hpp"
#include "kdla/linalg.hpp"
#include "kdla/rng.hpp"

using namespace kdla;
using kernels::Op;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  CounterRng rng(seed, 1);
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(-1.0, 1.0);
  return m;
}

// psi psi^T: D x M times its transpose, the Gram product behind every K fit
template <Matrix (*Gemm)(Op, Op, const Matrix&, const Matrix&)>
void gram(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const Matrix a = random_matrix(d, m, 1);
  for (auto _ : state) benchmark::DoNotOptimize(Gemm(Op::none, Op::transpose, a, a));
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * d * d * m * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

// W x: one dense layer applied to a batch
template <Matrix (*Gemm)(Op, Op, const Matrix&, const Matrix&)>
void layer(benchmark::State& state) {
  const auto w = static_cast<std::size_t>(state.range(0));
  const auto batch = static_cast<std::size_t>(state.range(1));
  const Matrix a = random_matrix(w, w, 2), x = random_matrix(w, batch, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Gemm(Op::none, Op::none, a, x));
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * w * w * batch * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

void pinv_lifted(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(d, 10 * d, 4);
  for (auto _ : state) benchmark::DoNotOptimize(pinv(a));
}

}  // namespace

BENCHMARK(gram<kernels::serial::gemm>)->Args({26, 500})->Args({114, 2000})->Args({164, 10000})->Unit(benchmark::kMillisecond);
BENCHMARK(gram<kernels::parallel::gemm>)->Args({26, 500})->Args({114, 2000})->Args({164, 10000})->Unit(benchmark::kMillisecond);
BENCHMARK(layer<kernels::serial::gemm>)->Args({100, 256})->Args({250, 5000})->Unit(benchmark::kMillisecond);
BENCHMARK(layer<kernels::parallel::gemm>)->Args({100, 256})->Args({250, 5000})->Unit(benchmark::kMillisecond);
BENCHMARK(pinv_lifted)->Arg(26)->Arg(114)->Arg(214)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
