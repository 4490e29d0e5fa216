#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "vqc/embedding.h"
#include "vqc/grouper.h"
#include "vqc/prefagg.h"
#include "vqc/simfilter.h"

namespace {

// Random tournament over n items with Bradley-Terry outcomes.
vqc::PreferenceMatrix tournament(std::size_t n, std::size_t comparisons, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> quality(0.0, 1.0);
  std::vector<double> q(n);
  for (auto& x : q) x = quality(gen);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  vqc::PreferenceMatrix m(n);
  for (std::size_t k = 0; k < comparisons; ++k) {
    const std::size_t i = gen() % n;
    std::size_t j = gen() % (n - 1);
    if (j >= i) ++j;
    if (u(gen) < 1.0 / (1.0 + std::exp(q[j] - q[i]))) m.add_win(i, j);
    else m.add_win(j, i);
  }
  return m;
}

void BM_FitMapScores(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = tournament(n, n * 20, 1);
  for (auto _ : state) benchmark::DoNotOptimize(vqc::fit_map_scores(m));
}
BENCHMARK(BM_FitMapScores)->Arg(16)->Arg(64)->Arg(256);

void BM_SampleGroups(benchmark::State& state) {
  std::vector<std::string> ids;
  for (int i = 0; i < 2000; ++i) ids.push_back("img" + std::to_string(i));
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(vqc::sample_groups(ids, vqc::SamplingSpec{n * 7 / 10, n * 2 / 10, n / 10, 3}));
}
BENCHMARK(BM_SampleGroups)->Arg(1000)->Arg(10000);

void BM_HashingEmbedding(benchmark::State& state) {
  vqc::HashingEmbeddingProvider p;
  std::vector<std::string> texts(256, "The image is slightly blurry with moderate noise and dull colours.");
  for (auto _ : state) benchmark::DoNotOptimize(p.embed(texts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(texts.size()));
}
BENCHMARK(BM_HashingEmbedding);

void BM_Calibrate(benchmark::State& state) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> sims(static_cast<std::size_t>(state.range(0)));
  for (auto& s : sims) s = u(gen);
  for (auto _ : state) benchmark::DoNotOptimize(vqc::calibrate_from_similarities(sims, 0.86));
}
BENCHMARK(BM_Calibrate)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
