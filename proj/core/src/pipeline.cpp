#include "iclner/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "iclner/error.hpp"
#include "iclner/text.hpp"

#ifndef ICLNER_GIT_DESCRIBE
#define ICLNER_GIT_DESCRIBE "unknown"
#endif

namespace iclner {

using json = nlohmann::json;

std::string_view to_string(Retrieval r) noexcept {
  switch (r) {
    case Retrieval::random: return "random";
    case Retrieval::sentence: return "sentence";
    case Retrieval::entity: return "entity";
  }
  return "entity";
}

std::string_view to_string(Verification v) noexcept {
  switch (v) {
    case Verification::off: return "off";
    case Verification::zero_shot: return "zero-shot";
    case Verification::few_shot: return "few-shot";
  }
  return "off";
}

std::string_view to_string(QueryTokens q) noexcept {
  return q == QueryTokens::all_tokens ? "all-tokens" : "predicted-entities";
}

std::string_view to_string(Provenance p) noexcept { return p == Provenance::raw ? "raw" : "verified"; }

Retrieval parse_retrieval(std::string_view text) {
  if (text == "random") return Retrieval::random;
  if (text == "sentence") return Retrieval::sentence;
  if (text == "entity" || text == "token") return Retrieval::entity;
  throw Error(ErrorKind::invalid_config, "retrieval must be random, sentence or entity; got '" + std::string(text) + "'");
}

Verification parse_verification(std::string_view text) {
  if (text == "off") return Verification::off;
  if (text == "zero-shot") return Verification::zero_shot;
  if (text == "few-shot") return Verification::few_shot;
  throw Error(ErrorKind::invalid_config,
              "verification must be off, zero-shot or few-shot; got '" + std::string(text) + "'");
}

QueryTokens parse_query_tokens(std::string_view text) {
  if (text == "all-tokens") return QueryTokens::all_tokens;
  if (text == "predicted-entities") return QueryTokens::predicted_entities;
  throw Error(ErrorKind::invalid_config,
              "query_tokens must be all-tokens or predicted-entities; got '" + std::string(text) + "'");
}

void RunConfig::validate() const {
  if (verification == Verification::few_shot && verification_k < 1) {
    throw Error(ErrorKind::invalid_config, "verification_k must be >= 1 for few-shot verification");
  }
  if (!(tokens_per_word > 0) || !(overflow_tokens_per_word > 0)) {
    throw Error(ErrorKind::invalid_config, "tokens-per-word ratios must be positive");
  }
  if (budget.max_prompt_tokens() == 0) throw Error(ErrorKind::invalid_config, "no room left for the prompt");
  if (workers < 1) throw Error(ErrorKind::invalid_config, "workers must be >= 1");
}

json RunConfig::to_json() const {
  return json{{"retrieval", to_string(retrieval)},
              {"k", k},
              {"K", effective_fanout()},
              {"format", to_string(format)},
              {"verification", to_string(verification)},
              {"verification_k", verification_k},
              {"seed", seed},
              {"context_window", budget.context_window},
              {"max_tokens", budget.reserved_completion},
              {"tokens_per_word", tokens_per_word},
              {"overflow_tokens_per_word", overflow_tokens_per_word},
              {"demo_order", to_string(demo_order)},
              {"query_tokens", to_string(query_tokens)},
              {"use_annotation", use_annotation},
              {"type_priority", type_priority},
              {"template_version", kPromptTemplateVersion}};
}

CompletionRequest RunConfig::request_for(std::string prompt) const {
  CompletionRequest r;
  r.prompt = std::move(prompt);
  r.max_tokens = static_cast<int>(budget.reserved_completion);
  return r;
}

json TypeDiagnostics::to_json() const {
  json dropped = json::array();
  for (const auto& d : parse.dropped) dropped.push_back({{"surface", d.surface}, {"reason", to_string(d.reason)}});
  json repaired = json::array();
  for (const auto& d : parse.repaired) repaired.push_back({{"surface", d.surface}, {"reason", to_string(d.reason)}});
  json verification_json = json::array();
  for (const auto& v : verification) {
    verification_json.push_back({{"start", v.span.start},
                                 {"end", v.span.end},
                                 {"surface", v.span.surface},
                                 {"answer", v.answer == YesNo::yes  ? "yes"
                                            : v.answer == YesNo::no ? "no"
                                                                    : "unparseable"},
                                 {"kept", v.kept},
                                 {"demo_ids", v.demo_ids}});
  }
  return json{{"ranked_demo_ids", ranked_demo_ids},
              {"demos_kept", demos_kept},
              {"prompt_tokens", prompt_tokens},
              {"retrimmed", retrimmed},
              {"completion", completion},
              {"mutated", parse.mutated},
              {"dropped", std::move(dropped)},
              {"repaired", std::move(repaired)},
              {"verification", std::move(verification_json)}};
}

namespace {

const Sentence& train_sentence(const RetrievalResources& resources, SentenceId id) {
  const Sentence* s = resources.train->find(id);
  if (!s) throw Error(ErrorKind::unknown_sentence_id, "training sentence " + std::to_string(id));
  return *s;
}

std::vector<std::size_t> all_token_indices(const Sentence& s) {
  std::vector<std::size_t> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = i;
  return out;
}

std::vector<TokenQuery> queries_for(const Datastore& store, const Sentence& sentence,
                                    const std::vector<std::size_t>& tokens) {
  auto q = store.token_queries(sentence.id, tokens);
  if (q.empty()) {
    throw Error(ErrorKind::empty_query,
                "no token vectors for sentence " + std::to_string(sentence.id) + " in the test token store");
  }
  return q;
}

// First line of a completion; models often keep going with the next "Input:" block.
std::string first_line(std::string_view text) {
  text = trim(text);
  const auto nl = text.find('\n');
  return std::string(trim(text.substr(0, nl)));
}

}  // namespace

std::vector<SentenceId> select_demos(const Sentence& sentence, const EntityTypeSchema& type, const RunConfig& config,
                                     const RetrievalResources& resources) {
  if (config.k == 0) return {};
  if (!resources.train) throw Error(ErrorKind::invalid_config, "a training corpus is required for demonstrations");
  const LabeledCorpus& train = *resources.train;

  switch (config.retrieval) {
    case Retrieval::random: {
      const auto seed = hash_combine(config.seed, "random|" + std::to_string(sentence.id) + "|" + type.name);
      const auto picks = random_demos(train.size(), std::min(config.k, train.size()), seed);
      std::vector<SentenceId> ids;
      ids.reserve(picks.size());
      for (auto i : picks) ids.push_back(train.sentences[i].id);
      return ids;
    }
    case Retrieval::sentence: {
      if (!resources.train_sentences || !resources.test_sentences) {
        throw Error(ErrorKind::invalid_config, "sentence retrieval needs train and test sentence embeddings");
      }
      const auto query = resources.test_sentences->find(sentence.id);
      if (!query) {
        throw Error(ErrorKind::unknown_sentence_id,
                    "no sentence embedding for test sentence " + std::to_string(sentence.id));
      }
      std::vector<SentenceId> ids;
      for (const auto& nb : resources.train_sentences->knn_sentences(*query, config.k)) ids.push_back(nb.sentence_id);
      return ids;
    }
    case Retrieval::entity: {
      if (!resources.train_tokens || !resources.test_tokens) {
        throw Error(ErrorKind::invalid_config, "entity retrieval needs train and test token embeddings");
      }
      std::vector<std::size_t> tokens;
      if (config.query_tokens == QueryTokens::predicted_entities) {
        if (auto it = resources.query_entities.find(sentence.id); it != resources.query_entities.end()) {
          for (const auto& span : it->second) {
            if (span.type != type.name) continue;
            for (std::size_t i = span.start; i <= span.end && i < sentence.size(); ++i) tokens.push_back(i);
          }
        }
      }
      // No predicted entity of this type: fall back to every token of the sentence.
      if (tokens.empty()) tokens = all_token_indices(sentence);
      return resources.train_tokens->retrieve_token_demos(queries_for(*resources.test_tokens, sentence, tokens),
                                                          config.effective_fanout(), config.k);
    }
  }
  return {};
}

Demonstration make_demonstration(const Sentence& sentence, const std::vector<EntitySpan>& gold_of_type,
                                 CorpusMode mode, OutputFormat format, std::string_view type) {
  auto spans = gold_of_type;
  if (mode == CorpusMode::nested) {
    const auto before = spans.size();
    spans = outermost_spans(std::move(spans));
    if (spans.size() != before) {
      spdlog::debug("sentence {}: {} nested {} span(s) reduced to outermost for the demonstration", sentence.id,
                    before - spans.size(), type);
    }
  }
  return Demonstration{sentence.text(), encode(format, sentence, spans, type).text};
}

TypeExtraction extract_for_type(const Sentence& sentence, const EntityTypeSchema& type, const RunConfig& config,
                                const RetrievalResources& resources, CompletionBackend& backend) {
  TypeExtraction out;
  auto& diag = out.diagnostics;
  diag.type = type.name;
  diag.ranked_demo_ids = select_demos(sentence, type, config, resources);

  PromptSpec spec;
  spec.entity_type = type;
  spec.query = sentence.text();
  spec.budget = config.budget.max_prompt_tokens();
  spec.tokens_per_word = config.tokens_per_word;
  spec.order = config.demo_order;
  spec.use_annotation = config.use_annotation;
  for (SentenceId id : diag.ranked_demo_ids) {
    const Sentence& demo = train_sentence(resources, id);
    spec.demos.push_back(
        make_demonstration(demo, resources.train->spans_of(id, type.name), resources.train->mode, config.format, type.name));
  }

  auto rendered = render_extraction_prompt(spec);
  CompletionResponse response;
  try {
    response = backend.complete(config.request_for(rendered.text));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::context_overflow || config.overflow_tokens_per_word <= config.tokens_per_word) throw;
    spdlog::warn("sentence {} type {}: context overflow, re-trimming at {} tokens/word", sentence.id, type.name,
                 config.overflow_tokens_per_word);
    spec.tokens_per_word = config.overflow_tokens_per_word;
    rendered = render_extraction_prompt(spec);
    diag.retrimmed = true;
    ++diag.backend_calls;
    response = backend.complete(config.request_for(rendered.text));
  }
  ++diag.backend_calls;
  diag.cached_calls += response.cached ? 1 : 0;
  diag.latency_ms += response.latency_ms;
  diag.demos_kept = rendered.demos_kept;
  diag.prompt_tokens = rendered.estimated_tokens;
  diag.completion = first_line(response.text);

  diag.parse = parse(config.format, sentence, diag.completion, type.name);
  out.spans = diag.parse.spans;
  return out;
}

namespace {

std::vector<VerificationDemo> verification_demos(const EntitySpan& span, const Sentence& sentence,
                                                 const EntityTypeSchema& type, const RunConfig& config,
                                                 const RetrievalResources& resources, std::vector<SentenceId>& ids) {
  if (!resources.train_tokens || !resources.test_tokens || !resources.train) {
    throw Error(ErrorKind::invalid_config, "few-shot verification needs a training corpus and token embeddings");
  }
  std::vector<std::size_t> tokens;
  for (std::size_t i = span.start; i <= span.end; ++i) tokens.push_back(i);
  const auto pool = resources.train_tokens->pool_token_neighbors(queries_for(*resources.test_tokens, sentence, tokens),
                                                                 config.verification_k);
  std::vector<VerificationDemo> demos;
  std::set<SentenceId> taken;
  for (const auto& nb : pool) {
    if (demos.size() >= config.verification_k) break;
    if (!taken.insert(nb.sentence_id).second) continue;
    const Sentence& train = train_sentence(resources, nb.sentence_id);
    if (nb.token_index >= train.size()) continue;
    // The retrieved token's entity: prefer a span of the queried type, else any gold span covering it.
    const EntitySpan* covering = nullptr;
    for (const auto& g : resources.train->spans_of(train.id)) {
      if (g.start <= nb.token_index && nb.token_index <= g.end) {
        if (!covering || (g.type == type.name && covering->type != type.name)) covering = &g;
      }
    }
    VerificationDemo d;
    d.sentence = train.text();
    d.word = covering ? covering->surface : train.tokens[nb.token_index];
    d.answer = covering && covering->type == type.name;
    demos.push_back(std::move(d));
    ids.push_back(train.id);
  }
  // Nearest demonstration sits next to the query, as in extraction prompts.
  if (config.demo_order == DemoOrder::nearest_last) {
    std::reverse(demos.begin(), demos.end());
    std::reverse(ids.begin(), ids.end());
  }
  return demos;
}

}  // namespace

VerifyOutcome self_verify(const std::vector<EntitySpan>& spans, const Sentence& sentence,
                          const EntityTypeSchema& type, const RunConfig& config,
                          const RetrievalResources& resources, CompletionBackend& backend) {
  VerifyOutcome out;
  for (const auto& span : spans) {
    VerificationRecord rec;
    rec.span = span;
    std::vector<VerificationDemo> demos;
    if (config.verification == Verification::few_shot) {
      demos = verification_demos(span, sentence, type, config, resources, rec.demo_ids);
    }
    const auto prompt = render_verification_prompt(type, demos, sentence, span.surface);
    const auto response = backend.complete(config.request_for(prompt));
    ++out.backend_calls;
    out.cached_calls += response.cached ? 1 : 0;
    out.latency_ms += response.latency_ms;
    rec.completion = first_line(response.text);
    rec.answer = parse_yes_no(response.text);
    rec.kept = rec.answer != YesNo::no;
    if (rec.answer == YesNo::unknown) {
      spdlog::debug("sentence {}: unparseable verification answer '{}' for {} '{}'; keeping span", sentence.id,
                    rec.completion, type.name, span.surface);
    }
    if (rec.kept) out.kept.push_back(span);
    out.records.push_back(std::move(rec));
  }
  return out;
}

MergeResult merge_types(const std::vector<EntitySpan>& spans, CorpusMode mode,
                        const std::vector<std::string>& type_priority) {
  MergeResult out;
  std::vector<EntitySpan> candidates = spans;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (mode == CorpusMode::nested) {
    out.spans = std::move(candidates);
    return out;
  }

  auto priority = [&](const std::string& type) {
    auto it = std::find(type_priority.begin(), type_priority.end(), type);
    return static_cast<std::size_t>(it - type_priority.begin());
  };
  std::stable_sort(candidates.begin(), candidates.end(), [&](const EntitySpan& a, const EntitySpan& b) {
    if (a.length() != b.length()) return a.length() > b.length();
    const auto pa = priority(a.type);
    const auto pb = priority(b.type);
    if (pa != pb) return pa < pb;
    if (a.type != b.type) return a.type < b.type;
    return a.start < b.start;
  });
  for (auto& c : candidates) {
    auto clash = std::find_if(out.spans.begin(), out.spans.end(), [&](const EntitySpan& s) { return s.overlaps(c); });
    if (clash == out.spans.end()) {
      out.spans.push_back(std::move(c));
      continue;
    }
    out.resolutions.push_back("dropped " + c.type + "[" + std::to_string(c.start) + "," + std::to_string(c.end) +
                              "] '" + c.surface + "' in favour of " + clash->type + "[" + std::to_string(clash->start) +
                              "," + std::to_string(clash->end) + "]");
  }
  std::sort(out.spans.begin(), out.spans.end());
  return out;
}

namespace {

struct WorkResult {
  TypeExtraction extraction;
  std::vector<EntitySpan> final_spans;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

}  // namespace

RunResult run_corpus(const LabeledCorpus& test, const RetrievalResources& resources, const RunConfig& config,
                     const Backends& backends) {
  config.validate();
  if (!backends.extract) throw Error(ErrorKind::invalid_config, "no extraction backend");
  const auto& types = test.schema.types();
  if (types.empty()) throw Error(ErrorKind::invalid_config, "test corpus has an empty schema");
  const std::string started_at = utc_now();

  std::vector<const Sentence*> sentences;
  for (const auto& s : test.sentences) sentences.push_back(&s);
  std::sort(sentences.begin(), sentences.end(), [](const Sentence* a, const Sentence* b) { return a->id < b->id; });

  // Work items are (sentence, type) pairs; each writes only its own slot.
  const std::size_t n_items = sentences.size() * types.size();
  std::vector<WorkResult> results(n_items);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker = [&]() {
    for (;;) {
      const std::size_t item = next.fetch_add(1);
      if (item >= n_items || failed) return;
      const Sentence& sentence = *sentences[item / types.size()];
      const EntityTypeSchema& type = types[item % types.size()];
      try {
        WorkResult& r = results[item];
        r.extraction = extract_for_type(sentence, type, config, resources, *backends.extract);
        r.final_spans = r.extraction.spans;
        if (config.verification != Verification::off && !r.final_spans.empty()) {
          auto verified = self_verify(r.final_spans, sentence, type, config, resources, backends.verifier());
          r.final_spans = std::move(verified.kept);
          r.extraction.diagnostics.verification = std::move(verified.records);
          r.extraction.diagnostics.backend_calls += verified.backend_calls;
          r.extraction.diagnostics.cached_calls += verified.cached_calls;
          r.extraction.diagnostics.latency_ms += verified.latency_ms;
        }
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        failed = true;
        return;
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(config.workers, n_items));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  const auto priority = config.type_priority.empty() ? test.schema.names() : config.type_priority;
  const Provenance provenance = config.verification == Verification::off ? Provenance::raw : Provenance::verified;

  RunResult run;
  run.predictions.reserve(sentences.size());
  json per_sentence = json::array();
  std::int64_t latency_ms = 0;
  std::size_t max_prompt_tokens = 0;
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    PredictionSet ps;
    ps.sentence_id = sentences[si]->id;
    std::vector<EntitySpan> all;
    json type_diag = json::object();
    for (std::size_t ti = 0; ti < types.size(); ++ti) {
      const auto& r = results[si * types.size() + ti];
      all.insert(all.end(), r.final_spans.begin(), r.final_spans.end());
      type_diag[types[ti].name] = r.extraction.diagnostics.to_json();
      run.backend_calls += r.extraction.diagnostics.backend_calls;
      run.cached_calls += r.extraction.diagnostics.cached_calls;
      latency_ms += r.extraction.diagnostics.latency_ms;
      max_prompt_tokens = std::max(max_prompt_tokens, r.extraction.diagnostics.prompt_tokens);
    }
    auto merged = merge_types(all, test.mode, priority);
    for (auto& s : merged.spans) ps.spans.push_back({std::move(s), provenance});
    ps.diagnostics = json{{"types", std::move(type_diag)}, {"merge", merged.resolutions}};
    per_sentence.push_back(json{{"id", ps.sentence_id}, {"diagnostics", ps.diagnostics}});
    run.predictions.push_back(std::move(ps));
  }

  const json config_json = config.to_json();
  std::vector<SentenceId> ids;
  for (const auto* s : sentences) ids.push_back(s->id);
  run.manifest = json{
      {"config", config_json},
      {"config_hash", sha256_hex(config_json.dump())},
      {"git_describe", ICLNER_GIT_DESCRIBE},
      {"started_at", started_at},
      {"finished_at", utc_now()},
      {"backend", {{"extract", backends.extract->id()}, {"verify", backends.verifier().id()}}},
      {"sentences", sentences.size()},
      {"types", test.schema.names()},
      {"test_ids", ids},
      {"backend_calls", run.backend_calls},
      {"cached_calls", run.cached_calls},
      {"cache_hit_rate", run.backend_calls ? static_cast<double>(run.cached_calls) / run.backend_calls : 0.0},
      {"latency_ms_total", latency_ms},
      {"max_prompt_tokens", max_prompt_tokens},
      {"per_sentence", std::move(per_sentence)},
  };
  return run;
}

std::string predictions_to_jsonl(const std::vector<PredictionSet>& predictions) {
  std::string out;
  for (const auto& p : predictions) {
    json spans = json::array();
    for (const auto& s : p.spans) {
      spans.push_back({{"start", s.span.start},
                       {"end", s.span.end},
                       {"type", s.span.type},
                       {"surface", s.span.surface},
                       {"provenance", to_string(s.provenance)}});
    }
    out += json{{"id", p.sentence_id}, {"spans", std::move(spans)}, {"diagnostics", p.diagnostics}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<PredictionSet> parse_predictions_jsonl(std::istream& in) {
  std::vector<PredictionSet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto obj = json::parse(line);
      PredictionSet ps;
      ps.sentence_id = obj.at("id").get<SentenceId>();
      for (const auto& s : obj.at("spans")) {
        PredictedSpan p;
        p.span.start = s.at("start").get<std::size_t>();
        p.span.end = s.at("end").get<std::size_t>();
        p.span.type = s.at("type").get<std::string>();
        if (s.contains("surface")) p.span.surface = s.at("surface").get<std::string>();
        if (p.span.end < p.span.start) throw Error(ErrorKind::span_out_of_range, "end < start");
        p.provenance = s.value("provenance", std::string("raw")) == "verified" ? Provenance::verified : Provenance::raw;
        ps.spans.push_back(std::move(p));
      }
      if (obj.contains("diagnostics")) ps.diagnostics = obj.at("diagnostics");
      out.push_back(std::move(ps));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::malformed_line, "predictions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<PredictionSet> load_predictions_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_predictions_jsonl(in);
}

std::map<SentenceId, std::vector<EntitySpan>> load_query_entities(const std::filesystem::path& path) {
  std::map<SentenceId, std::vector<EntitySpan>> out;
  for (auto& p : load_predictions_jsonl(path)) {
    auto& spans = out[p.sentence_id];
    for (auto& s : p.spans) spans.push_back(std::move(s.span));
  }
  return out;
}

}  // namespace iclner
