#include <doctest.h>

#include <cstring>

#include "../support/oracles.hpp"
#include "helpers.hpp"
#include "iclner/embedstore.hpp"

using namespace iclner;
using testing::kind_of;

namespace {

std::vector<float> gaussian(Rng& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.uniform01() * 2.0 - 1.0);
  return v;
}

// Token-level records; every fifth vector repeats an earlier one so that ties occur.
std::vector<VectorRecord> token_records(Rng& rng, std::size_t sentences, std::size_t max_tokens, std::size_t dim) {
  std::vector<VectorRecord> out;
  for (SentenceId s = 0; s < sentences; ++s) {
    const auto n = 1 + rng.below(max_tokens);
    for (std::uint32_t t = 0; t < n; ++t) {
      VectorRecord r{s, t, {}};
      if (!out.empty() && rng.below(5) == 0) {
        r.vector = out[rng.below(out.size())].vector;
      } else {
        r.vector = gaussian(rng, dim);
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("embedstore") {
  TEST_CASE("build rejects inconsistent records") {
    CHECK(kind_of([] { Datastore::build({{0, kSentenceLevel, {1, 0}}, {1, kSentenceLevel, {1, 0, 0}}}); }) ==
          ErrorKind::dimension_mismatch);
    CHECK(kind_of([] { Datastore::build({{0, kSentenceLevel, {0, 0}}}); }) == ErrorKind::zero_vector);
    CHECK(kind_of([] { Datastore::build({{0, kSentenceLevel, {1e-13f, 0}}}); }) == ErrorKind::zero_vector);
    CHECK(kind_of([] { Datastore::build({{0, kSentenceLevel, {1, 0}}, {0, kSentenceLevel, {0, 1}}}); }) ==
          ErrorKind::duplicate_id);
    CHECK(kind_of([] { Datastore::build({{0, kSentenceLevel, {1, 0}}, {0, 0, {0, 1}}}); }) ==
          ErrorKind::invalid_argument);
    const auto store = Datastore::build({{0, kSentenceLevel, {3, 4}}});
    CHECK(kind_of([&] { store.knn(std::vector<float>{1, 0, 0}, 1); }) == ErrorKind::dimension_mismatch);
    CHECK(kind_of([&] { store.knn(std::vector<float>{0, 0}, 1); }) == ErrorKind::zero_vector);
  }

  TEST_CASE("vectors are stored normalized") {
    const auto store = Datastore::build({{4, kSentenceLevel, {3, 4}}});
    const auto row = store.row(0);
    CHECK(row[0] == doctest::Approx(0.6));
    CHECK(row[1] == doctest::Approx(0.8));
    CHECK(store.find(4).has_value());
    CHECK_FALSE(store.find(5).has_value());
    const auto nb = store.knn(std::vector<float>{6, 8}, 3);
    REQUIRE(nb.size() == 1);
    CHECK(nb[0].score == doctest::Approx(1.0));
  }

  TEST_CASE("ties break by sentence id then token index") {
    const auto store = Datastore::build({{5, 1, {1, 0}}, {2, 7, {2, 0}}, {2, 3, {1, 0}}, {9, 0, {0, 1}}});
    const auto nb = store.knn(std::vector<float>{1, 0}, 4);
    REQUIRE(nb.size() == 4);
    CHECK(nb[0].sentence_id == 2);
    CHECK(nb[0].token_index == 3);
    CHECK(nb[1].sentence_id == 2);
    CHECK(nb[1].token_index == 7);
    CHECK(nb[2].sentence_id == 5);
    CHECK(nb[3].sentence_id == 9);
  }

  TEST_CASE("knn equals a linear scan") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const auto records = token_records(rng, 40, 8, 1 + rng.below(16));
      const auto store = Datastore::build(records);
      for (int q = 0; q < 10; ++q) {
        const auto query = rng.below(3) == 0 ? records[rng.below(records.size())].vector
                                             : gaussian(rng, store.dim());
        const auto k = 1 + rng.below(records.size() + 5);
        CHECK(store.knn(query, k) == oracle::linear_scan(records, query, k));
      }
    }
  }

  TEST_CASE("sentence-level kNN requires a sentence-level store") {
    const auto tokens = Datastore::build({{0, 0, {1, 0}}});
    CHECK(kind_of([&] { tokens.knn_sentences(std::vector<float>{1, 0}, 1); }) == ErrorKind::invalid_argument);
    const auto sentences = Datastore::build({{0, kSentenceLevel, {1, 0}}, {1, kSentenceLevel, {0, 1}}});
    CHECK(sentences.level() == StoreLevel::sentence);
    CHECK(sentences.knn_sentences(std::vector<float>{0.1f, 1}, 1)[0].sentence_id == 1);
  }

  TEST_CASE("pooling equals exhaustive enumeration on small stores") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const auto records = token_records(rng, 1 + rng.below(8), 4, 1 + rng.below(6));
      if (records.size() > 32) continue;
      const auto store = Datastore::build(records);
      std::vector<TokenQuery> queries;
      std::vector<std::vector<float>> raw;
      const auto nq = 1 + rng.below(4);
      for (std::uint32_t i = 0; i < nq; ++i) {
        raw.push_back(rng.below(2) ? records[rng.below(records.size())].vector : gaussian(rng, store.dim()));
        queries.push_back({i, raw.back()});
      }
      const auto fanout = 1 + rng.below(records.size() + 2);
      const auto pool = store.pool_token_neighbors(queries, fanout);
      const auto expected = oracle::enumerate_pool(records, raw, fanout);
      CHECK(pool == expected);
      const auto k = 1 + rng.below(6);
      CHECK(store.retrieve_token_demos(queries, fanout, k) == oracle::distinct_sentences(expected, k));
    }
  }

  TEST_CASE("for a fixed fan-out, k+1 extends the k result") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
      const auto records = token_records(rng, 30, 6, 4);
      const auto store = Datastore::build(records);
      std::vector<TokenQuery> queries;
      for (std::uint32_t i = 0; i < 3; ++i) queries.push_back({i, gaussian(rng, 4)});
      const auto fanout = 1 + rng.below(20);
      for (std::size_t k = 1; k < 12; ++k) {
        const auto a = store.retrieve_token_demos(queries, fanout, k);
        const auto b = store.retrieve_token_demos(queries, fanout, k + 1);
        REQUIRE(b.size() >= a.size());
        CHECK(std::equal(a.begin(), a.end(), b.begin()));
      }
    }
  }

  TEST_CASE("token retrieval: distinct sentences, at most k") {
    Rng rng(8);
    const auto records = token_records(rng, 50, 10, 8);
    const auto store = Datastore::build(records);
    std::vector<TokenQuery> queries = {{0, records[3].vector}, {1, records[40].vector}};
    for (std::size_t k : {1, 4, 8, 16}) {
      const auto ids = store.retrieve_token_demos(queries, 16, k);
      CHECK(ids.size() <= k);
      CHECK(std::set<SentenceId>(ids.begin(), ids.end()).size() == ids.size());
    }
    CHECK(kind_of([&] { store.pool_token_neighbors({}, 4); }) == ErrorKind::empty_query);
    CHECK(store.token_queries(0, {0, 999}).size() == 1);
  }

  TEST_CASE("random demonstrations") {
    const auto a = random_demos(100, 10, 42);
    CHECK(a == random_demos(100, 10, 42));
    CHECK(a != random_demos(100, 10, 43));
    CHECK(std::set<SentenceId>(a.begin(), a.end()).size() == 10);
    for (auto id : a) CHECK(id < 100);
    CHECK(kind_of([] { random_demos(3, 4, 1); }) == ErrorKind::k_too_large);
    CHECK(random_demos(3, 3, 1).size() == 3);
  }

  TEST_CASE("EMB1 round trip and layout") {
    Emb1File f;
    f.level = StoreLevel::token;
    f.dim = 2;
    f.records = {{1, 0, {1.5f, -2}}, {1, 1, {0.25f, 8}}};
    const auto bytes = serialize_emb1(f);
    REQUIRE(bytes.size() == 4 + 4 + 4 + 8 + 2 * (8 + 8));
    CHECK(bytes.substr(0, 4) == "EMB1");
    std::uint32_t dim = 0, level = 0;
    std::uint64_t count = 0;
    std::memcpy(&dim, bytes.data() + 4, 4);
    std::memcpy(&level, bytes.data() + 8, 4);
    std::memcpy(&count, bytes.data() + 12, 8);
    CHECK(dim == 2);
    CHECK(level == 1);
    CHECK(count == 2);
    const auto back = parse_emb1(bytes);
    CHECK(back.level == StoreLevel::token);
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[1].vector == std::vector<float>{0.25f, 8});
    CHECK(back.records[1].token_index == 1);

    testing::TempDir dir("emb1");
    write_emb1(dir / "v.emb1", f);
    CHECK(read_emb1(dir / "v.emb1").records.size() == 2);
  }

  TEST_CASE("EMB1 validation") {
    Emb1File f;
    f.dim = 2;
    f.records = {{0, kSentenceLevel, {1, 2}}};
    const auto good = serialize_emb1(f);
    CHECK(kind_of([&] { parse_emb1("EMB2" + good.substr(4)); }) == ErrorKind::bad_vector_file);
    CHECK(kind_of([&] { parse_emb1(good.substr(0, good.size() - 1)); }) == ErrorKind::bad_vector_file);
    CHECK(kind_of([&] { parse_emb1(good + "x"); }) == ErrorKind::bad_vector_file);
    CHECK(kind_of([&] { parse_emb1(good.substr(0, 10)); }) == ErrorKind::bad_vector_file);
    auto bad_level = good;
    bad_level[8] = 7;
    CHECK(kind_of([&] { parse_emb1(bad_level); }) == ErrorKind::bad_vector_file);
    // Sentence-level file with a token index.
    auto bad_tok = good;
    std::memset(bad_tok.data() + 24, 0, 4);
    CHECK(kind_of([&] { parse_emb1(bad_tok); }) == ErrorKind::bad_vector_file);
    auto nan = f;
    nan.records[0].vector[0] = std::nanf("");
    CHECK(kind_of([&] { parse_emb1(serialize_emb1(nan)); }) == ErrorKind::bad_vector_file);
  }
}
