#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclner/corpus.hpp"
#include "iclner/embedstore.hpp"
#include "iclner/llmgate.hpp"
#include "iclner/markup.hpp"
#include "iclner/promptkit.hpp"

namespace iclner {

enum class Retrieval { random, sentence, entity };
enum class Verification { off, zero_shot, few_shot };
/// Which test-sentence tokens query the token store during entity-level retrieval.
enum class QueryTokens { all_tokens, predicted_entities };

std::string_view to_string(Retrieval r) noexcept;
std::string_view to_string(Verification v) noexcept;
std::string_view to_string(QueryTokens q) noexcept;
Retrieval parse_retrieval(std::string_view text);
Verification parse_verification(std::string_view text);
QueryTokens parse_query_tokens(std::string_view text);

struct RunConfig {
  Retrieval retrieval = Retrieval::entity;
  std::size_t k = 8;
  std::size_t fanout = 0;  // per-token neighbors K; 0 means "same as k"
  OutputFormat format = OutputFormat::at_marker;
  Verification verification = Verification::off;
  std::size_t verification_k = 4;
  std::uint64_t seed = 0;
  PromptBudget budget;
  double tokens_per_word = kDefaultTokensPerWord;
  double overflow_tokens_per_word = 1.5;  // used for the single re-trim after a context overflow
  DemoOrder demo_order = DemoOrder::nearest_last;
  QueryTokens query_tokens = QueryTokens::predicted_entities;
  bool use_annotation = false;
  std::vector<std::string> type_priority;  // empty: schema order
  std::size_t workers = 1;

  std::size_t effective_fanout() const noexcept { return fanout ? fanout : k; }
  /// Throws InvalidConfig when a field is out of range.
  void validate() const;
  nlohmann::json to_json() const;
  CompletionRequest request_for(std::string prompt) const;
};

/// Embedding stores and tagger output used for demonstration retrieval.
struct RetrievalResources {
  std::shared_ptr<const LabeledCorpus> train;
  std::shared_ptr<const Datastore> train_sentences;
  std::shared_ptr<const Datastore> test_sentences;
  std::shared_ptr<const Datastore> train_tokens;
  std::shared_ptr<const Datastore> test_tokens;
  /// Entities a tagger predicted on the test sentences; drives `predicted-entities` queries.
  std::map<SentenceId, std::vector<EntitySpan>> query_entities;
};

struct Backends {
  BackendPtr extract;
  BackendPtr verify;  // defaults to `extract`

  CompletionBackend& verifier() const { return verify ? *verify : *extract; }
};

enum class Provenance { raw, verified };
std::string_view to_string(Provenance p) noexcept;

struct PredictedSpan {
  EntitySpan span;
  Provenance provenance = Provenance::raw;

  friend bool operator==(const PredictedSpan&, const PredictedSpan&) = default;
};

struct VerificationRecord {
  EntitySpan span;
  YesNo answer = YesNo::unknown;
  bool kept = true;
  std::vector<SentenceId> demo_ids;
  std::string completion;
};

struct TypeDiagnostics {
  std::string type;
  std::vector<SentenceId> ranked_demo_ids;  // retrieval order, best first
  std::size_t demos_kept = 0;               // always a prefix of ranked_demo_ids
  std::size_t prompt_tokens = 0;
  bool retrimmed = false;
  std::string completion;
  ParseReport parse;
  std::vector<VerificationRecord> verification;
  std::size_t backend_calls = 0;
  std::size_t cached_calls = 0;
  std::int64_t latency_ms = 0;

  /// Deterministic view (no timing) for prediction dumps.
  nlohmann::json to_json() const;
};

struct TypeExtraction {
  std::vector<EntitySpan> spans;
  TypeDiagnostics diagnostics;
};

/// Ranked demonstration sentence ids for one (sentence, type) pair.
std::vector<SentenceId> select_demos(const Sentence& sentence, const EntityTypeSchema& type, const RunConfig& config,
                                     const RetrievalResources& resources);

/// Builds the demonstration pair for one training sentence.
Demonstration make_demonstration(const Sentence& sentence, const std::vector<EntitySpan>& gold_of_type,
                                 CorpusMode mode, OutputFormat format, std::string_view type);

/// Extracts spans of one type from one sentence.
TypeExtraction extract_for_type(const Sentence& sentence, const EntityTypeSchema& type, const RunConfig& config,
                                const RetrievalResources& resources, CompletionBackend& backend);

struct VerifyOutcome {
  std::vector<EntitySpan> kept;
  std::vector<VerificationRecord> records;
  std::size_t backend_calls = 0;
  std::size_t cached_calls = 0;
  std::int64_t latency_ms = 0;
};

/// Asks a yes/no question per span and keeps the ones answered "yes" (unparseable answers keep the span).
VerifyOutcome self_verify(const std::vector<EntitySpan>& spans, const Sentence& sentence,
                          const EntityTypeSchema& type, const RunConfig& config,
                          const RetrievalResources& resources, CompletionBackend& backend);

struct MergeResult {
  std::vector<EntitySpan> spans;
  std::vector<std::string> resolutions;
};

/// Combines per-type spans. Flat mode resolves overlaps: longer span wins, then the type earlier
/// in `type_priority`, then the earlier start.
MergeResult merge_types(const std::vector<EntitySpan>& spans, CorpusMode mode,
                        const std::vector<std::string>& type_priority);

struct PredictionSet {
  SentenceId sentence_id = 0;
  std::vector<PredictedSpan> spans;
  nlohmann::json diagnostics = nlohmann::json::object();
};

struct RunResult {
  std::vector<PredictionSet> predictions;  // ordered by sentence id
  nlohmann::json manifest;
  std::size_t backend_calls = 0;
  std::size_t cached_calls = 0;
};

/// Runs extraction (+ optional verification) for every (sentence, type) pair of `test`.
RunResult run_corpus(const LabeledCorpus& test, const RetrievalResources& resources, const RunConfig& config,
                     const Backends& backends);

/// One JSON object per line: {"id", "spans":[{start,end,type,surface,provenance}], "diagnostics"}.
std::string predictions_to_jsonl(const std::vector<PredictionSet>& predictions);
std::vector<PredictionSet> parse_predictions_jsonl(std::istream& in);
std::vector<PredictionSet> load_predictions_jsonl(const std::filesystem::path& path);

/// Tagger output for `predicted-entities` retrieval, in prediction-dump format.
std::map<SentenceId, std::vector<EntitySpan>> load_query_entities(const std::filesystem::path& path);

}  // namespace iclner
