#include <benchmark/benchmark.h>

#include "patchlab/das.hpp"
#include "patchlab/rome.hpp"

using namespace patchlab;

static void BM_Svd(benchmark::State& state) {
  Rng rng(1);
  const Index d = state.range(0);
  const Matrix w = gaussian_matrix(d, 4 * d, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(svd(w));
}
BENCHMARK(BM_Svd)->Arg(16)->Arg(64);

static void BM_Forward(benchmark::State& state) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  const Vector x = sample_example(m, 1, 3);
  for (auto _ : state) benchmark::DoNotOptimize(forward_with_cache(m, x));
}
BENCHMARK(BM_Forward);

static void BM_DasGrad(benchmark::State& state) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  const auto pair = make_training_pairs(m, 2, 1).front();
  Rng rng(2);
  const auto site = static_cast<Site>(state.range(0));
  const Matrix v = orthonormalize_columns(gaussian_matrix(site_dim(m, site), 1, 1.0, rng));
  for (auto _ : state) benchmark::DoNotOptimize(das_grad(m, pair, v, site));
}
BENCHMARK(BM_DasGrad)
    ->Arg(static_cast<int>(Site::kResidPre))
    ->Arg(static_cast<int>(Site::kMlpPostAct));

static void BM_EditToSubspace(benchmark::State& state) {
  Rng rng(3);
  const Index dm = state.range(0);
  const Matrix w = gaussian_matrix(dm / 4, dm, 1.0, rng);
  const Matrix sigma = random_spd(dm, 100.0, rng);
  const Vector a = gaussian_vector(dm / 4, 1.0, rng);
  const Vector b = gaussian_vector(dm, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(edit_to_subspace(a, b, w, sigma));
}
BENCHMARK(BM_EditToSubspace)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
