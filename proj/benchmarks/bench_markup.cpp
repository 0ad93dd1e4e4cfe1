#include <benchmark/benchmark.h>

#include "iclner/markup.hpp"
#include "iclner/random.hpp"
#include "iclner/text.hpp"

using namespace iclner;

namespace {

struct Case {
  Sentence sentence;
  std::vector<EntitySpan> spans;
};

std::vector<Case> cases(std::size_t n) {
  const std::vector<std::string> vocab = {"the", "Paris", "of", "Bank", "said", "New", "York", ",", ".", "17"};
  Rng rng(9);
  std::vector<Case> out(n);
  for (auto& c : out) {
    const auto len = 10 + rng.below(30);
    for (std::size_t i = 0; i < len; ++i) c.sentence.tokens.push_back(vocab[rng.below(vocab.size())]);
    for (std::size_t i = 0; i < len;) {
      if (rng.uniform01() < 0.2) {
        const auto w = 1 + rng.below(std::min<std::size_t>(3, len - i));
        c.spans.push_back(make_span(c.sentence, i, i + w - 1, "LOC"));
        i += w + 1;
      } else {
        ++i;
      }
    }
  }
  return out;
}

void BM_Encode(benchmark::State& state) {
  const auto format = static_cast<OutputFormat>(state.range(0));
  const auto data = cases(256);
  for (auto _ : state) {
    for (const auto& c : data) benchmark::DoNotOptimize(encode(format, c.sentence, c.spans, "LOC"));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
  state.SetLabel(std::string(to_string(format)));
}
BENCHMARK(BM_Encode)->DenseRange(0, 2);

void BM_Parse(benchmark::State& state) {
  const auto format = static_cast<OutputFormat>(state.range(0));
  const auto data = cases(256);
  std::vector<std::string> texts;
  for (const auto& c : data) texts.push_back(encode(format, c.sentence, c.spans, "LOC").text);
  for (auto _ : state) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      benchmark::DoNotOptimize(parse(format, data[i].sentence, texts[i], "LOC"));
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
  state.SetLabel(std::string(to_string(format)));
}
BENCHMARK(BM_Parse)->DenseRange(0, 2);

// A rewritten completion forces the surface-search fallback.
void BM_ParseMutated(benchmark::State& state) {
  const auto data = cases(256);
  std::vector<std::string> texts;
  for (const auto& c : data) texts.push_back("Sure! " + encode(OutputFormat::at_marker, c.sentence, c.spans, "LOC").text);
  for (auto _ : state) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      benchmark::DoNotOptimize(parse_atmarker(data[i].sentence, texts[i], "LOC"));
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_ParseMutated);

}  // namespace
