#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "iclner/evalkit.hpp"
#include "iclner/synth.hpp"

using namespace iclner;
using testing::kind_of;
using testing::span;

namespace {

using SpanMap = std::map<SentenceId, std::vector<EntitySpan>>;

const Sentence& paris() {
  static const Sentence s = testing::sentence("Paris and New York and Rome", 0);
  return s;
}

std::set<SentenceId> ids_of(const LabeledCorpus& c) {
  std::set<SentenceId> out;
  for (const auto& s : c.sentences) out.insert(s.id);
  return out;
}

LabeledCorpus synth_train(std::size_t n, std::uint64_t seed = 3) {
  SynthOptions opts;
  opts.train_sentences = n;
  opts.test_sentences = 1;
  opts.long_train_sentences = 0;
  opts.seed = seed;
  return synth_dataset(opts).train;
}

}  // namespace

TEST_SUITE("evalkit") {
  TEST_CASE("score triple conventions") {
    const auto empty = ScoreTriple::from_counts(0, 0, 0);
    CHECK(empty.precision == 1.0);
    CHECK(empty.recall == 1.0);
    CHECK(empty.f1 == 1.0);
    const auto none = ScoreTriple::from_counts(0, 3, 2);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    const auto only_fn = ScoreTriple::from_counts(0, 0, 4);
    CHECK(only_fn.precision == 1.0);
    CHECK(only_fn.recall == 0.0);
    CHECK(only_fn.f1 == 0.0);
  }

  TEST_CASE("hand-computed cases") {
    const auto& s = paris();
    const EntitySpan p = span(s, 0, 0, "LOC"), ny = span(s, 2, 3, "LOC"), rome = span(s, 5, 5, "LOC");

    // One right, one spurious.
    auto r = score_spans({{0, {p, span(s, 1, 1, "LOC")}}}, {{0, {p}}});
    CHECK(r.micro.precision == doctest::Approx(0.5));
    CHECK(r.micro.recall == doctest::Approx(1.0));
    CHECK(r.micro.f1 == doctest::Approx(2.0 / 3.0));

    // Boundary mismatch scores nothing.
    r = score_spans({{0, {span(s, 2, 2, "LOC")}}}, {{0, {ny}}});
    CHECK(r.micro.tp == 0);
    CHECK(r.micro.f1 == 0.0);

    // Type mismatch scores nothing.
    r = score_spans({{0, {span(s, 2, 3, "ORG")}}}, {{0, {ny}}});
    CHECK(r.micro.tp == 0);
    CHECK(r.micro.fp == 1);
    CHECK(r.micro.fn == 1);

    // Duplicate predictions count once.
    r = score_spans({{0, {p, p, p}}}, {{0, {p}}});
    CHECK(r.micro.tp == 1);
    CHECK(r.micro.fp == 0);

    // Two of three gold found, no spurious.
    r = score_spans({{0, {p, rome}}}, {{0, {p, ny, rome}}});
    CHECK(r.micro.precision == 1.0);
    CHECK(r.micro.recall == doctest::Approx(2.0 / 3.0));
    CHECK(r.micro.f1 == doctest::Approx(0.8));

    // Micro pools counts across types.
    r = score_spans({{0, {p, span(s, 5, 5, "PER")}}}, {{0, {p, rome}}});
    CHECK(r.per_type.at("LOC").recall == doctest::Approx(0.5));
    CHECK(r.per_type.at("PER").precision == 0.0);
    CHECK(r.micro.precision == doctest::Approx(0.5));
    CHECK(r.micro.recall == doctest::Approx(0.5));
  }

  TEST_CASE("count identities on random predictions") {
    Rng rng(12);
    const auto& s = paris();
    for (int trial = 0; trial < 300; ++trial) {
      SpanMap pred, gold;
      for (SentenceId id = 0; id < 4; ++id) {
        for (auto* m : {&pred, &gold}) {
          const auto n = rng.below(4);
          for (std::size_t i = 0; i < n; ++i) {
            const auto a = rng.below(s.size());
            (*m)[id].push_back(span(s, a, std::min(s.size() - 1, a + rng.below(2)), rng.below(2) ? "LOC" : "ORG"));
          }
        }
      }
      const auto r = score_spans(pred, gold);
      std::size_t n_pred = 0, n_gold = 0;
      for (auto& [id, v] : pred) n_pred += std::set<EntitySpan>(v.begin(), v.end()).size();
      for (auto& [id, v] : gold) n_gold += std::set<EntitySpan>(v.begin(), v.end()).size();
      CHECK(r.micro.tp + r.micro.fp == n_pred);
      CHECK(r.micro.tp + r.micro.fn == n_gold);
      std::size_t tp = 0, fp = 0, fn = 0;
      for (const auto& [type, t] : r.per_type) {
        tp += t.tp;
        fp += t.fp;
        fn += t.fn;
      }
      CHECK(tp == r.micro.tp);
      CHECK(fp == r.micro.fp);
      CHECK(fn == r.micro.fn);
      CHECK(r.micro.f1 >= std::min(r.micro.precision, r.micro.recall) - 1e-12);
      CHECK(r.micro.f1 <= std::max(r.micro.precision, r.micro.recall) + 1e-12);
    }
  }

  TEST_CASE("score over prediction sets") {
    LabeledCorpus gold;
    gold.schema = conll2003_schema();
    gold.sentences = {paris(), testing::sentence("nothing here", 1)};
    gold.gold[0] = {span(paris(), 0, 0, "LOC")};
    std::vector<PredictionSet> preds(1);
    preds[0].sentence_id = 0;
    preds[0].spans = {{span(paris(), 0, 0, "LOC"), Provenance::raw}};
    const auto r = score(preds, gold);
    CHECK(r.micro.f1 == 1.0);
    CHECK(r.per_type.size() == 4);
    CHECK(r.per_type.at("MISC").tp == 0);

    preds.push_back(PredictionSet{42, {}, {}});
    CHECK(kind_of([&] { score(preds, gold); }) == ErrorKind::unknown_sentence_id);
  }

  TEST_CASE("restricting to predicted sentences") {
    LabeledCorpus gold;
    gold.schema = conll2003_schema();
    gold.sentences = {paris(), testing::sentence("Rome", 1)};
    gold.gold[0] = {span(paris(), 0, 0, "LOC")};
    gold.gold[1] = {span(gold.sentences[1], 0, 0, "LOC")};
    std::vector<PredictionSet> preds = {PredictionSet{0, {{span(paris(), 0, 0, "LOC"), Provenance::raw}}, {}}};
    CHECK(score(preds, gold).micro.recall == doctest::Approx(0.5));
    CHECK(score(preds, gold, ScoreOptions{true}).micro.recall == 1.0);
  }

  TEST_CASE("test subsets are seeded and sorted") {
    const auto train = synth_train(100);
    const auto a = sample_test_subset(train, 20, 1);
    CHECK(a.size() == 20);
    CHECK(ids_of(a) == ids_of(sample_test_subset(train, 20, 1)));
    CHECK(ids_of(a) != ids_of(sample_test_subset(train, 20, 2)));
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a.sentences[i - 1].id < a.sentences[i].id);
    CHECK(kind_of([&] { sample_test_subset(train, 101, 1); }) == ErrorKind::invalid_argument);
  }

  TEST_CASE("low-resource splits nest and are reproducible") {
    const auto train = synth_train(120);
    for (std::uint64_t seed : {0, 1, 2}) {
      const auto splits = low_resource_splits(train, {8, 100, 10, 50}, seed);
      REQUIRE(splits.size() == 4);
      CHECK(splits[0].size() == 8);
      CHECK(splits[2].size() == 10);
      const auto s8 = ids_of(splits[0]), s10 = ids_of(splits[2]), s50 = ids_of(splits[3]), s100 = ids_of(splits[1]);
      CHECK(std::includes(s10.begin(), s10.end(), s8.begin(), s8.end()));
      CHECK(std::includes(s50.begin(), s50.end(), s10.begin(), s10.end()));
      CHECK(std::includes(s100.begin(), s100.end(), s50.begin(), s50.end()));
      const auto again = low_resource_splits(train, {8, 100, 10, 50}, seed);
      for (std::size_t i = 0; i < 4; ++i) CHECK(ids_of(again[i]) == ids_of(splits[i]));
      // Gold travels with the sentences.
      for (const auto& s : splits[3].sentences) CHECK(splits[3].spans_of(s.id) == train.spans_of(s.id));
    }
    CHECK(ids_of(low_resource_splits(train, {10}, 0)[0]) != ids_of(low_resource_splits(train, {10}, 1)[0]));
    CHECK(kind_of([&] { low_resource_splits(train, {121}, 0); }) == ErrorKind::invalid_argument);
  }

  TEST_CASE("seedset: one positive and one negative per type") {
    const auto train = synth_train(200);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto seedset = build_seedset(train, seed);
      CHECK(seedset.size() == 8);
      CHECK_NOTHROW(check_seedset(seedset));
      CHECK(ids_of(seedset) == ids_of(build_seedset(train, seed)));
    }

    // Only LOC sentences exist: no negative for LOC... and no positive for the others.
    LabeledCorpus tiny;
    tiny.schema = conll2003_schema();
    tiny.sentences = {testing::sentence("Paris", 0)};
    tiny.gold[0] = {span(tiny.sentences[0], 0, 0, "LOC")};
    CHECK(kind_of([&] { build_seedset(tiny, 0); }) == ErrorKind::unsatisfiable);

    auto broken = build_seedset(train, 0);
    std::swap(broken.sentences[0], broken.sentences[1]);
    CHECK(kind_of([&] { check_seedset(broken); }) == ErrorKind::unsatisfiable);
  }

  TEST_CASE("results CSV and run ids") {
    RunConfig c;
    c.k = 16;
    c.retrieval = Retrieval::sentence;
    CHECK(run_id_for("conll", c) == "conll-sentence-atmarker-k16-off");
    AblationRow row{run_id_for("conll", c), "conll", c, ScoreTriple::from_counts(1, 1, 0), {}};
    const auto csv = results_csv({row});
    CHECK(csv == std::string(kResultsCsvHeader) +
                     "\nconll-sentence-atmarker-k16-off,conll,sentence,atmarker,16,off,0.500000,1.000000,0.666667,1,1,0\n");
  }

  TEST_CASE("k-shot ablation order and oracle scores") {
    SynthOptions opts;
    opts.train_sentences = 60;
    opts.test_sentences = 6;
    opts.long_train_sentences = 0;
    auto data = synth_dataset(opts);
    auto train = std::make_shared<LabeledCorpus>(std::move(data.train));
    auto test = std::make_shared<LabeledCorpus>(std::move(data.test));
    RetrievalResources res;
    res.train = train;
    res.train_sentences = std::make_shared<Datastore>(Datastore::build(synth_embeddings(*train, StoreLevel::sentence).records));
    res.test_sentences = std::make_shared<Datastore>(Datastore::build(synth_embeddings(*test, StoreLevel::sentence).records));
    AblationInputs in{"synth", test.get(), &res, [&](const RunConfig& c) {
                        return Backends{std::make_shared<OracleMock>(test, c.format), nullptr};
                      }};
    const auto rows = ablate_kshot(RunConfig{}, {1, 4}, {Retrieval::random, Retrieval::sentence}, in);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].run_id == "synth-random-atmarker-k1-off");
    CHECK(rows[1].run_id == "synth-random-atmarker-k4-off");
    CHECK(rows[2].run_id == "synth-sentence-atmarker-k1-off");
    for (const auto& r : rows) CHECK(r.score.f1 == 1.0);

    RunConfig base;
    base.retrieval = Retrieval::sentence;
    const auto formats = ablate_format(base, {OutputFormat::bmes, OutputFormat::entity_position}, in);
    REQUIRE(formats.size() == 2);
    CHECK(formats[1].config.format == OutputFormat::entity_position);
    for (const auto& r : formats) CHECK(r.score.f1 == 1.0);
  }
}
