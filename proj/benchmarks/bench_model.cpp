#include <benchmark/benchmark.h>

#include "pamtriage/classify.hpp"
#include "pamtriage/reduce.hpp"
#include "pamtriage/rng.hpp"
#include "pamtriage/umap.hpp"

namespace {

using namespace pamtriage;

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed = 1) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

// Embedding-sized inputs: `range(0)` points of dimension 1280.
void BM_PcaFit(benchmark::State& state) {
  const auto data = gaussian_matrix(state.range(0), 1280);
  for (auto _ : state) benchmark::DoNotOptimize(pca_fit(data, 2));
}
BENCHMARK(BM_PcaFit)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_KnnExact(benchmark::State& state) {
  const auto data = gaussian_matrix(state.range(0), 64);
  for (auto _ : state) benchmark::DoNotOptimize(knn_exact(data, 15));
}
BENCHMARK(BM_KnnExact)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_UmapLayout(benchmark::State& state) {
  const auto data = gaussian_matrix(state.range(0), 64);
  UmapConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(umap_layout(data, cfg));
}
BENCHMARK(BM_UmapLayout)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

// Three-class softmax regression, default schedule, 1280-dimensional inputs.
void BM_Train(benchmark::State& state) {
  const auto n = state.range(0);
  LabeledSet set;
  set.features = gaussian_matrix(n, 1280);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 3);
    set.features(i, c) += 3.0;
    set.targets.push_back(c);
    set.refs.push_back({"bench", static_cast<std::uint32_t>(i)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(train(set, LabeledSet{}, {"a", "b", "c"}, TrainConfig{}));
}
BENCHMARK(BM_Train)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
