#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "iclner/corpus.hpp"
#include "iclner/embedstore.hpp"

namespace iclner {

// Deterministic CoNLL-style data for offline runs, tests and benchmarks. Sentences mix
// entities of the four CoNLL types with filler words, a share of which are capitalized
// non-entities (weekdays, titles, sentence openers) that tempt an over-eager tagger.

struct SynthOptions {
  std::size_t train_sentences = 600;
  std::size_t test_sentences = 200;
  /// Extra-long training sentences, so that large-k prompts must be trimmed.
  std::size_t long_train_sentences = 40;
  std::size_t min_tokens = 8;
  std::size_t max_tokens = 20;
  std::size_t long_min_tokens = 60;
  std::size_t long_max_tokens = 90;
  double entity_rate = 0.3;
  std::uint64_t seed = 1;
};

struct SynthDataset {
  LabeledCorpus train;
  LabeledCorpus test;  // ids restart at 0, as when loaded from its own file; no text is shared with train
};

SynthDataset synth_dataset(const SynthOptions& options = {});

/// Token- or sentence-level vectors: a per-word direction plus a per-type direction on entity
/// tokens, so neighbours of an entity token tend to be entities of the same type.
Emb1File synth_embeddings(const LabeledCorpus& corpus, StoreLevel level, std::uint32_t dim = 32,
                          std::uint64_t seed = 1);

/// The corpus's own gold spans in tagger-output form, i.e. a perfect first-stage tagger.
std::map<SentenceId, std::vector<EntitySpan>> gold_entity_map(const LabeledCorpus& corpus);

}  // namespace iclner
