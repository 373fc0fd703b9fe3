#include <benchmark/benchmark.h>

#include <random>

#include "linid/analysis.hpp"
#include "linid/data.hpp"
#include "linid/linalg.hpp"
#include "linid/model.hpp"
#include "linid/trainer.hpp"

using namespace linid;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  return Matrix::NullaryExpr(rows, cols,
                             [&](Eigen::Index, Eigen::Index) { return normal(rng); });
}

void bm_svd(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Matrix m = random_matrix(4 * n, n, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(svd(m));
  }
}
BENCHMARK(bm_svd)->Arg(16)->Arg(64)->Arg(128);

void bm_cca(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ReprDump x{random_matrix(n, 16, 2), {}};
  const ReprDump y{random_matrix(n, 16, 3), {}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(cca(x, y));
  }
}
BENCHMARK(bm_cca)->Arg(512)->Arg(2048)->Arg(8192);

void bm_nll_and_grads(benchmark::State& state) {
  const int batch_size = static_cast<int>(state.range(0));
  const LabeledDataset ds = radial_gaussian(batch_size + 8, 18, 3.0, 20, 4);
  std::vector<int> indices(batch_size);
  for (int i = 0; i < batch_size; ++i) indices[i] = i;
  const CandidateBatch batch = build_candidates(Task::kSupervised, ds, indices);
  CanonicalModel model;
  model.f = make_mlp(22, {64, 64}, 2, Activation::kRelu, 5);
  model.g = EmbeddingTable{random_matrix(18, 2, 6)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(nll_and_grads(model, batch));
  }
}
BENCHMARK(bm_nll_and_grads)->Arg(32)->Arg(128)->Arg(512);

void bm_adam_step(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  CanonicalModel model;
  model.f = make_mlp(22, {width, width}, 2, Activation::kRelu, 7);
  model.g = EmbeddingTable{random_matrix(18, 2, 8)};
  ModelGrads grads = zero_grads_like(model);
  for (LayerGrads& layer : grads.f) {
    layer.weight.setRandom();
    layer.bias.setRandom();
  }
  grads.g_table.setRandom();
  AdamState adam = make_adam_state(model);
  TrainConfig config;
  for (auto _ : state) {
    adam_step(model, grads, adam, config);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(bm_adam_step)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
