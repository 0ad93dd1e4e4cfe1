#include <benchmark/benchmark.h>

#include "iclner/embedstore.hpp"
#include "iclner/random.hpp"

using namespace iclner;

namespace {

std::vector<float> random_vector(Rng& rng, std::uint32_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.uniform01() * 2.0 - 1.0);
  return v;
}

Datastore token_store(std::size_t n, std::uint32_t dim) {
  Rng rng(1);
  std::vector<VectorRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    records.push_back({static_cast<SentenceId>(i / 14), static_cast<std::uint32_t>(i % 14), random_vector(rng, dim)});
  }
  return Datastore::build(std::move(records));
}

void BM_Knn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto store = token_store(n, 768);
  Rng rng(2);
  const auto query = random_vector(rng, 768);
  for (auto _ : state) benchmark::DoNotOptimize(store.knn(query, 32));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Knn)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

// One test sentence worth of token queries, pooled then reduced to k sentences.
void BM_TokenRetrieval(benchmark::State& state) {
  const auto store = token_store(50000, 768);
  Rng rng(3);
  std::vector<TokenQuery> queries;
  for (std::uint32_t i = 0; i < 15; ++i) queries.push_back({i, random_vector(rng, 768)});
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(store.retrieve_token_demos(queries, k, k));
}
BENCHMARK(BM_TokenRetrieval)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_BuildStore(benchmark::State& state) {
  Rng rng(4);
  std::vector<VectorRecord> records;
  for (std::size_t i = 0; i < 20000; ++i) records.push_back({static_cast<SentenceId>(i), kSentenceLevel, random_vector(rng, 256)});
  for (auto _ : state) benchmark::DoNotOptimize(Datastore::build(records));
}
BENCHMARK(BM_BuildStore)->Unit(benchmark::kMillisecond);

}  // namespace
