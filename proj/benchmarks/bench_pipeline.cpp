#include <benchmark/benchmark.h>

#include "iclner/llmgate.hpp"
#include "iclner/pipeline.hpp"
#include "iclner/synth.hpp"

using namespace iclner;

namespace {

struct World {
  std::shared_ptr<LabeledCorpus> test;
  RetrievalResources resources;
};

const World& world() {
  static const World w = [] {
    SynthOptions opts;
    opts.test_sentences = 50;
    auto data = synth_dataset(opts);
    World out;
    auto train = std::make_shared<LabeledCorpus>(std::move(data.train));
    out.test = std::make_shared<LabeledCorpus>(std::move(data.test));
    out.resources.train = train;
    auto store = [](const LabeledCorpus& c, StoreLevel l) {
      return std::make_shared<Datastore>(Datastore::build(synth_embeddings(c, l).records));
    };
    out.resources.train_sentences = store(*train, StoreLevel::sentence);
    out.resources.test_sentences = store(*out.test, StoreLevel::sentence);
    out.resources.train_tokens = store(*train, StoreLevel::token);
    out.resources.test_tokens = store(*out.test, StoreLevel::token);
    out.resources.query_entities = gold_entity_map(*out.test);
    return out;
  }();
  return w;
}

// End-to-end cost of the pipeline itself (retrieval, rendering, parsing) with an instant backend.
void BM_RunCorpus(benchmark::State& state) {
  const auto& w = world();
  RunConfig config;
  config.retrieval = static_cast<Retrieval>(state.range(0));
  config.k = static_cast<std::size_t>(state.range(1));
  Backends backends{std::make_shared<OracleMock>(w.test), nullptr};
  for (auto _ : state) benchmark::DoNotOptimize(run_corpus(*w.test, w.resources, config, backends));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.test->size()));
  state.SetLabel(std::string(to_string(config.retrieval)));
}
BENCHMARK(BM_RunCorpus)->ArgsProduct({{0, 1, 2}, {8, 32}})->Unit(benchmark::kMillisecond);

}  // namespace
