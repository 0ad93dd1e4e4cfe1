#include <doctest.h>

#include <set>
#include <sstream>

#include "helpers.hpp"
#include "iclner/pipeline.hpp"
#include "iclner/synth.hpp"

using namespace iclner;
using nlohmann::json;
using testing::kind_of;
using testing::span;

namespace {

struct World {
  std::shared_ptr<LabeledCorpus> train;
  std::shared_ptr<LabeledCorpus> test;
  RetrievalResources resources;
};

World small_world(std::size_t train = 80, std::size_t test = 12) {
  SynthOptions opts;
  opts.train_sentences = train;
  opts.test_sentences = test;
  opts.long_train_sentences = 0;
  opts.seed = 5;
  auto data = synth_dataset(opts);
  World w;
  w.train = std::make_shared<LabeledCorpus>(std::move(data.train));
  w.test = std::make_shared<LabeledCorpus>(std::move(data.test));
  w.resources.train = w.train;
  w.resources.train_sentences =
      std::make_shared<Datastore>(Datastore::build(synth_embeddings(*w.train, StoreLevel::sentence).records));
  w.resources.test_sentences =
      std::make_shared<Datastore>(Datastore::build(synth_embeddings(*w.test, StoreLevel::sentence).records));
  w.resources.train_tokens =
      std::make_shared<Datastore>(Datastore::build(synth_embeddings(*w.train, StoreLevel::token).records));
  w.resources.test_tokens =
      std::make_shared<Datastore>(Datastore::build(synth_embeddings(*w.test, StoreLevel::token).records));
  w.resources.query_entities = gold_entity_map(*w.test);
  return w;
}

// Raises a context overflow for any prompt longer than `limit` bytes, otherwise echoes nothing useful.
class OverflowMock : public CompletionBackend {
 public:
  explicit OverflowMock(std::size_t limit) : limit_(limit) {}
  CompletionResponse complete(const CompletionRequest& request) override {
    prompts.push_back(request.prompt);
    if (request.prompt.size() > limit_) throw Error(ErrorKind::context_overflow, "too long");
    return {"nothing here\nInput: more", id(), false, 0};
  }
  std::string id() const override { return "mock:overflow"; }
  std::vector<std::string> prompts;

 private:
  std::size_t limit_;
};

class FixedAnswer : public CompletionBackend {
 public:
  explicit FixedAnswer(std::string answer) : answer_(std::move(answer)) {}
  CompletionResponse complete(const CompletionRequest&) override { return {answer_, id(), false, 0}; }
  std::string id() const override { return "mock:fixed"; }

 private:
  std::string answer_;
};

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("names round trip") {
    for (auto r : {Retrieval::random, Retrieval::sentence, Retrieval::entity}) CHECK(parse_retrieval(to_string(r)) == r);
    CHECK(parse_retrieval("token") == Retrieval::entity);
    for (auto v : {Verification::off, Verification::zero_shot, Verification::few_shot}) {
      CHECK(parse_verification(to_string(v)) == v);
    }
    for (auto q : {QueryTokens::all_tokens, QueryTokens::predicted_entities}) CHECK(parse_query_tokens(to_string(q)) == q);
    CHECK(kind_of([] { parse_retrieval("bm25"); }) == ErrorKind::invalid_config);
  }

  TEST_CASE("config validation and request defaults") {
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.effective_fanout() == c.k);
    c.fanout = 3;
    CHECK(c.effective_fanout() == 3);
    c.workers = 0;
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::invalid_config);
    const auto r = RunConfig{}.request_for("p");
    CHECK(r.prompt == "p");
    CHECK(r.max_tokens == 512);
    CHECK(r.temperature == 0.0);
    CHECK(RunConfig{}.to_json().at("k") == 8);
  }

  TEST_CASE("random demos are seeded per sentence and type") {
    auto w = small_world();
    RunConfig c;
    c.retrieval = Retrieval::random;
    c.k = 5;
    const auto& s = w.test->sentences[0];
    const auto& loc = w.train->schema.at("LOC");
    const auto a = select_demos(s, loc, c, w.resources);
    CHECK(a.size() == 5);
    CHECK(a == select_demos(s, loc, c, w.resources));
    CHECK(std::set<SentenceId>(a.begin(), a.end()).size() == 5);
    c.seed = 1;
    CHECK(a != select_demos(s, loc, c, w.resources));
    c.k = 0;
    CHECK(select_demos(s, loc, c, w.resources).empty());
  }

  TEST_CASE("sentence demos follow the sentence store") {
    auto w = small_world();
    RunConfig c;
    c.retrieval = Retrieval::sentence;
    c.k = 6;
    const auto& s = w.test->sentences[3];
    std::vector<SentenceId> expected;
    for (const auto& nb : w.resources.train_sentences->knn_sentences(*w.resources.test_sentences->find(s.id), 6)) {
      expected.push_back(nb.sentence_id);
    }
    CHECK(select_demos(s, w.train->schema.at("PER"), c, w.resources) == expected);

    RetrievalResources missing = w.resources;
    missing.test_sentences.reset();
    CHECK(kind_of([&] { select_demos(s, w.train->schema.at("PER"), c, missing); }) == ErrorKind::invalid_config);
  }

  TEST_CASE("entity demos query predicted entity tokens of the type, else all tokens") {
    auto w = small_world();
    RunConfig c;
    c.retrieval = Retrieval::entity;
    c.k = 4;
    const auto& store = *w.resources.train_tokens;
    const auto& test_store = *w.resources.test_tokens;
    for (const auto& s : w.test->sentences) {
      for (const auto& type : w.train->schema.types()) {
        std::vector<std::size_t> tokens;
        for (const auto& e : w.test->spans_of(s.id, type.name)) {
          for (auto i = e.start; i <= e.end; ++i) tokens.push_back(i);
        }
        if (tokens.empty()) {
          for (std::size_t i = 0; i < s.size(); ++i) tokens.push_back(i);
        }
        const auto expected = store.retrieve_token_demos(test_store.token_queries(s.id, tokens), 4, 4);
        CHECK(select_demos(s, type, c, w.resources) == expected);
      }
    }
    c.query_tokens = QueryTokens::all_tokens;
    const auto& s = w.test->sentences[0];
    std::vector<std::size_t> all(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) all[i] = i;
    CHECK(select_demos(s, w.train->schema.at("LOC"), c, w.resources) ==
          store.retrieve_token_demos(test_store.token_queries(s.id, all), 4, 4));
  }

  TEST_CASE("demonstrations use outermost spans in nested mode") {
    const auto s = testing::sentence("Bank of China branch");
    const std::vector<EntitySpan> gold = {span(s, 0, 2, "ORG"), span(s, 2, 2, "ORG")};
    CHECK(make_demonstration(s, gold, CorpusMode::nested, OutputFormat::at_marker, "ORG").output ==
          "@@Bank of China## branch");
    CHECK(make_demonstration(s, {span(s, 2, 2, "LOC")}, CorpusMode::flat, OutputFormat::bmes, "LOC").output ==
          "O O S-LOC O");
  }

  TEST_CASE("flat merge rules") {
    const auto s = testing::sentence("New York Stock Exchange opened");
    const std::vector<std::string> prio = {"LOC", "ORG", "PER", "MISC"};

    // Longer span wins regardless of priority.
    auto m = merge_types({span(s, 0, 1, "LOC"), span(s, 0, 3, "ORG")}, CorpusMode::flat, prio);
    CHECK(m.spans == std::vector<EntitySpan>{span(s, 0, 3, "ORG")});
    CHECK(m.resolutions.size() == 1);

    // Same length: earlier type in the priority list wins.
    m = merge_types({span(s, 0, 1, "ORG"), span(s, 0, 1, "LOC")}, CorpusMode::flat, prio);
    CHECK(m.spans == std::vector<EntitySpan>{span(s, 0, 1, "LOC")});
    m = merge_types({span(s, 0, 1, "ORG"), span(s, 0, 1, "LOC")}, CorpusMode::flat, {"ORG", "LOC"});
    CHECK(m.spans == std::vector<EntitySpan>{span(s, 0, 1, "ORG")});

    // Same length and type: earlier start wins.
    m = merge_types({span(s, 1, 2, "ORG"), span(s, 0, 1, "ORG")}, CorpusMode::flat, prio);
    CHECK(m.spans == std::vector<EntitySpan>{span(s, 0, 1, "ORG")});

    // Disjoint spans are all kept, duplicates collapse.
    m = merge_types({span(s, 0, 1, "LOC"), span(s, 4, 4, "MISC"), span(s, 0, 1, "LOC")}, CorpusMode::flat, prio);
    CHECK(m.spans == std::vector<EntitySpan>{span(s, 0, 1, "LOC"), span(s, 4, 4, "MISC")});
    CHECK(m.resolutions.empty());

    // Nested mode is a plain union.
    m = merge_types({span(s, 0, 1, "LOC"), span(s, 0, 3, "ORG")}, CorpusMode::nested, prio);
    CHECK(m.spans.size() == 2);
  }

  TEST_CASE("flat merge output never overlaps") {
    Rng rng(17);
    const auto s = testing::sentence("a b c d e f g h i j");
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<EntitySpan> in;
      const auto n = rng.below(8);
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = rng.below(10);
        const auto b = std::min<std::size_t>(9, a + rng.below(3));
        in.push_back(span(s, a, b, std::vector<std::string>{"LOC", "ORG", "PER"}[rng.below(3)]));
      }
      const auto m = merge_types(in, CorpusMode::flat, {"LOC", "ORG", "PER"});
      for (std::size_t i = 0; i < m.spans.size(); ++i) {
        for (std::size_t j = i + 1; j < m.spans.size(); ++j) CHECK_FALSE(m.spans[i].overlaps(m.spans[j]));
      }
      // Every input span is kept or accounted for by a longer-or-equal overlapping winner.
      for (const auto& x : in) {
        bool covered = false;
        for (const auto& y : m.spans) covered |= (y == x) || (y.overlaps(x) && y.length() >= x.length());
        CHECK(covered);
      }
    }
  }

  TEST_CASE("extraction keeps the first completion line and records diagnostics") {
    auto w = small_world();
    RunConfig c;
    c.k = 3;
    const auto& s = w.test->sentences[0];
    FixedAnswer backend(s.text() + "\nInput: something else");
    const auto r = extract_for_type(s, w.train->schema.at("LOC"), c, w.resources, backend);
    CHECK(r.spans.empty());
    CHECK(r.diagnostics.completion == s.text());
    CHECK(r.diagnostics.ranked_demo_ids.size() == 3);
    CHECK(r.diagnostics.demos_kept == 3);
    CHECK(r.diagnostics.backend_calls == 1);
    CHECK_FALSE(r.diagnostics.retrimmed);
  }

  TEST_CASE("a context overflow re-trims once at the overflow ratio") {
    auto w = small_world();
    RunConfig c;
    c.k = 16;
    c.retrieval = Retrieval::random;
    const auto& s = w.test->sentences[0];
    const auto& type = w.train->schema.at("ORG");

    // Budget tight enough that the 1.5 ratio drops demonstrations.
    c.budget = PromptBudget{300, 0};
    OverflowMock probe(1u << 30);
    const auto normal = extract_for_type(s, type, c, w.resources, probe);
    REQUIRE(normal.diagnostics.demos_kept > 0);
    OverflowMock tight(probe.prompts.back().size() - 1);
    const auto r = extract_for_type(s, type, c, w.resources, tight);
    CHECK(r.diagnostics.retrimmed);
    CHECK(r.diagnostics.backend_calls == 2);
    CHECK(tight.prompts.size() == 2);
    CHECK(tight.prompts[1].size() < tight.prompts[0].size());
    CHECK(r.diagnostics.demos_kept < normal.diagnostics.demos_kept);

    // A second overflow propagates.
    OverflowMock never(10);
    CHECK(kind_of([&] { extract_for_type(s, type, c, w.resources, never); }) == ErrorKind::context_overflow);
    CHECK(never.prompts.size() == 2);
  }

  TEST_CASE("verification drops 'no', keeps 'yes' and unparseable answers") {
    auto w = small_world();
    RunConfig c;
    c.verification = Verification::zero_shot;
    const auto s = testing::sentence("Paris and Rome");
    const auto& loc = w.train->schema.at("LOC");
    const std::vector<EntitySpan> spans = {span(s, 0, 0, "LOC"), span(s, 2, 2, "LOC")};
    FixedAnswer no("No.");
    CHECK(self_verify(spans, s, loc, c, w.resources, no).kept.empty());
    FixedAnswer yes("Yes");
    CHECK(self_verify(spans, s, loc, c, w.resources, yes).kept == spans);
    FixedAnswer garbage("I am not sure");
    const auto out = self_verify(spans, s, loc, c, w.resources, garbage);
    CHECK(out.kept == spans);
    CHECK(out.records.at(0).answer == YesNo::unknown);
    CHECK(out.backend_calls == 2);
  }

  TEST_CASE("few-shot verification pulls demos from distinct training sentences") {
    auto w = small_world();
    RunConfig c;
    c.verification = Verification::few_shot;
    c.verification_k = 3;
    const auto& s = w.test->sentences.at(1);
    std::vector<EntitySpan> spans = w.test->spans_of(s.id);
    REQUIRE_FALSE(spans.empty());
    const auto& type = w.train->schema.at(spans[0].type);
    YesNoOracleMock oracle(w.test);
    const auto out = self_verify({spans[0]}, s, type, c, w.resources, oracle);
    REQUIRE(out.records.size() == 1);
    const auto& ids = out.records[0].demo_ids;
    CHECK(ids.size() <= 3);
    CHECK_FALSE(ids.empty());
    CHECK(std::set<SentenceId>(ids.begin(), ids.end()).size() == ids.size());
    CHECK(out.kept.size() == 1);
  }

  TEST_CASE("run_corpus with the oracle is exact and deterministic") {
    auto w = small_world();
    RunConfig c;
    c.k = 4;
    c.workers = 4;
    Backends b{std::make_shared<OracleMock>(w.test), nullptr};
    const auto run = run_corpus(*w.test, w.resources, c, b);
    REQUIRE(run.predictions.size() == w.test->size());
    for (const auto& p : run.predictions) {
      std::vector<EntitySpan> got;
      for (const auto& ps : p.spans) {
        got.push_back(ps.span);
        CHECK(ps.provenance == Provenance::raw);
      }
      auto want = w.test->spans_of(p.sentence_id);
      std::sort(want.begin(), want.end());
      CHECK(got == want);
    }
    CHECK(run.backend_calls == w.test->size() * 4);
    c.workers = 1;
    const auto again = run_corpus(*w.test, w.resources, c, b);
    CHECK(predictions_to_jsonl(again.predictions) == predictions_to_jsonl(run.predictions));
    CHECK(run.manifest.at("config_hash") == again.manifest.at("config_hash"));
  }

  TEST_CASE("verification removes overpredictions") {
    auto w = small_world();
    RunConfig c;
    c.k = 4;
    c.verification = Verification::zero_shot;
    Backends b{std::make_shared<OverpredictMock>(w.test, 1.0, 2), std::make_shared<YesNoOracleMock>(w.test)};
    const auto run = run_corpus(*w.test, w.resources, c, b);
    for (const auto& p : run.predictions) {
      std::vector<EntitySpan> got;
      for (const auto& ps : p.spans) {
        got.push_back(ps.span);
        CHECK(ps.provenance == Provenance::verified);
      }
      auto want = w.test->spans_of(p.sentence_id);
      std::sort(want.begin(), want.end());
      CHECK(got == want);
    }
  }

  TEST_CASE("backend failures surface from run_corpus") {
    auto w = small_world(40, 4);
    RunConfig c;
    c.k = 2;
    c.workers = 3;
    Backends b{std::make_shared<OverflowMock>(10), nullptr};
    CHECK(kind_of([&] { run_corpus(*w.test, w.resources, c, b); }) == ErrorKind::context_overflow);
  }

  TEST_CASE("prediction JSONL round trip") {
    const auto s = testing::sentence("Paris and Rome", 4);
    std::vector<PredictionSet> preds(2);
    preds[0].sentence_id = 4;
    preds[0].spans = {{span(s, 0, 0, "LOC"), Provenance::raw}, {span(s, 2, 2, "LOC"), Provenance::verified}};
    preds[1].sentence_id = 9;
    const auto text = predictions_to_jsonl(preds);
    std::istringstream in(text);
    const auto back = parse_predictions_jsonl(in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].spans == preds[0].spans);
    CHECK(back[1].spans.empty());
    CHECK(back[1].sentence_id == 9);
    const auto first = json::parse(text.substr(0, text.find('\n')));
    CHECK(first.at("spans").at(0).at("surface") == "Paris");
    CHECK(first.at("spans").at(1).at("provenance") == "verified");

    std::istringstream bad("{\"id\": 1}\nnot json\n");
    CHECK(kind_of([&] { parse_predictions_jsonl(bad); }) == ErrorKind::malformed_line);
  }
}
