// Parallel kernels against their serial references.

#include "fairrec/kernels.hpp"

#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

using namespace fairrec;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

NeighborTable random_neighbors(int n, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NeighborTable t(n);
  for (auto& s : t) {
    for (int j = 0; j < m; ++j) {
      s.ids.push_back(static_cast<TrackId>(rng() % n));
      s.weights.push_back(1.0 / m);
    }
  }
  return t;
}

template <bool Serial>
void BM_AggregateLayer(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Matrix prev = random_matrix(n, 64, 1);
  const Matrix w = random_matrix(64, 128, 2);
  const Vector b = Vector::Zero(64);
  const auto nb = random_neighbors(n, 20, 3);
  std::vector<TrackId> targets(n);
  std::iota(targets.begin(), targets.end(), 0);
  for (auto _ : state) {
    auto out = Serial ? kernels::serial::aggregate_layer(prev, {}, targets, nb, w, b)
                      : kernels::aggregate_layer(prev, {}, targets, nb, w, b);
    benchmark::DoNotOptimize(out.act.data());
  }
}

template <bool Serial>
void BM_PairwiseCosine(benchmark::State& state) {
  const Matrix z = random_matrix(state.range(0), 64, 4);
  for (auto _ : state) {
    Matrix s = Serial ? kernels::serial::pairwise_cosine(z) : kernels::pairwise_cosine(z);
    benchmark::DoNotOptimize(s.data());
  }
}

template <bool Serial>
void BM_FairnessTerms(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Matrix sg = kernels::pairwise_cosine(random_matrix(n, 9, 5));
  const Matrix s = kernels::pairwise_cosine(random_matrix(n, 64, 6));
  std::vector<int> anchors(n / 4);
  std::iota(anchors.begin(), anchors.end(), 0);
  const auto plan = plan_fairness(anchors, sg, s, 10, PairWeighting::delta_ndcg);
  for (auto _ : state) {
    Matrix g = Matrix::Zero(n, n);
    auto t = Serial ? kernels::serial::fairness_terms(plan, sg, s, 1.0, g)
                    : kernels::fairness_terms(plan, sg, s, 1.0, g);
    benchmark::DoNotOptimize(t.data());
  }
}

template <bool Serial>
void BM_TopkCosine(benchmark::State& state) {
  const Matrix catalog = random_matrix(state.range(0), 64, 7);
  const Matrix queries = random_matrix(256, 64, 8);
  const std::vector<std::vector<TrackId>> exclude(256, std::vector<TrackId>{0, 1, 2, 3, 4});
  for (auto _ : state) {
    auto r = Serial ? kernels::serial::topk_cosine(catalog, queries, exclude, 100)
                    : kernels::topk_cosine(catalog, queries, exclude, 100);
    benchmark::DoNotOptimize(r.data());
  }
}

}  // namespace

BENCHMARK(BM_AggregateLayer<false>)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AggregateLayer<true>)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairwiseCosine<false>)->Arg(64)->Arg(512)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_PairwiseCosine<true>)->Arg(64)->Arg(512)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_FairnessTerms<false>)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_FairnessTerms<true>)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TopkCosine<false>)->Arg(5000)->Arg(50000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TopkCosine<true>)->Arg(5000)->Arg(50000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
