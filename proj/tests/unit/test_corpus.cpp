#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "iclner/corpus.hpp"
#include "iclner/error.hpp"

using namespace iclner;
using testing::kind_of;

namespace {

LabeledCorpus conll(const std::string& text, ConllOptions opts = {}, LoadDiagnostics* diag = nullptr) {
  std::istringstream in(text);
  return parse_conll(in, conll2003_schema(), opts, diag);
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("schema defaults and validation") {
    const auto s = conll2003_schema();
    CHECK(s.names() == std::vector<std::string>{"LOC", "ORG", "PER", "MISC"});
    CHECK(s.at("LOC").description == "location");
    CHECK(s.at("MISC").description == "miscellaneous");
    CHECK(s.find_by_description("person")->name == "PER");
    CHECK(kind_of([] { SchemaSet({{"A", "a", ""}, {"A", "b", ""}}); }) == ErrorKind::invalid_argument);
    const auto parsed = parse_schema_json(R"([{"name":"GENE","description":"gene"}])");
    CHECK(parsed.size() == 1);
    CHECK(parsed.at("GENE").description == "gene");
  }

  TEST_CASE("BIO file with document markers") {
    const auto c = conll(
        "-DOCSTART- O\n\n"
        "EU B-ORG\nrejects O\nGerman B-MISC\ncall O\n.\tO\n\n"
        "Peter B-PER\nBlackburn I-PER\n\n");
    REQUIRE(c.size() == 2);
    CHECK(c.sentences[0].id == 0);
    CHECK(c.sentences[1].id == 1);
    CHECK(c.sentences[0].text() == "EU rejects German call .");
    const auto& s0 = c.spans_of(0);
    REQUIRE(s0.size() == 2);
    CHECK(s0[0] == EntitySpan{0, 0, "ORG", "EU"});
    CHECK(s0[1] == EntitySpan{2, 2, "MISC", "German"});
    CHECK(c.spans_of(1) == std::vector<EntitySpan>{{0, 1, "PER", "Peter Blackburn"}});
    CHECK(c.token_count() == 7);
    CHECK(c.span_count() == 3);
  }

  TEST_CASE("BIOES and BIO decode to the same spans") {
    const auto bio = conll("New B-LOC\nYork I-LOC\nCity I-LOC\nis O\nbig O\nUN B-ORG\n");
    const auto bioes = conll("New B-LOC\nYork I-LOC\nCity E-LOC\nis O\nbig O\nUN S-ORG\n");
    CHECK(bio.gold == bioes.gold);
    const auto bmes = conll("New B-LOC\nYork M-LOC\nCity E-LOC\nis O\nbig O\nUN S-ORG\n");
    CHECK(bmes.gold == bio.gold);
  }

  TEST_CASE("malformed lines report the line number") {
    try {
      conll("a O\nb O extra\n");
      FAIL("expected MalformedLine");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::malformed_line);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK(kind_of([] { conll("a X-LOC\n"); }) == ErrorKind::malformed_line);
    CHECK(kind_of([] { conll("a B-GENE\n"); }) == ErrorKind::unknown_type);
  }

  TEST_CASE("orphan I is repaired with a warning, or rejected in strict mode") {
    LoadDiagnostics diag;
    const auto c = conll("the O\nYork I-LOC\nCity I-LOC\n", {}, &diag);
    CHECK(c.spans_of(0) == std::vector<EntitySpan>{{1, 2, "LOC", "York City"}});
    CHECK(diag.warnings.size() == 1);
    CHECK(kind_of([] { conll("the O\nYork I-LOC\n", ConllOptions{true}); }) == ErrorKind::illegal_tag_transition);

    // A type switch inside a run starts a new span.
    const auto d = conll("a B-LOC\nb I-ORG\n");
    CHECK(d.spans_of(0) == std::vector<EntitySpan>{{0, 0, "LOC", "a"}, {1, 1, "ORG", "b"}});
    // An orphan E becomes a single-token span.
    const auto e = conll("a O\nb E-PER\n");
    CHECK(e.spans_of(0) == std::vector<EntitySpan>{{1, 1, "PER", "b"}});
  }

  TEST_CASE("spans_to_tags round trips through decode_tags") {
    Rng rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
      Sentence s;
      const auto n = 1 + rng.below(15);
      for (std::size_t i = 0; i < n; ++i) s.tokens.push_back(testing::random_word(rng));
      std::vector<EntitySpan> spans;
      std::size_t i = 0;
      while (i < n) {
        if (rng.uniform01() < 0.35) {
          const auto len = 1 + rng.below(std::min<std::size_t>(3, n - i));
          const std::vector<std::string> types = {"LOC", "ORG", "PER", "MISC"};
          spans.push_back(make_span(s, i, i + len - 1, types[rng.below(4)]));
          i += len;  // adjacent spans are allowed
        } else {
          ++i;
        }
      }
      for (auto scheme : {TagScheme::bio, TagScheme::bioes}) {
        const auto tags = spans_to_tags(s, spans, scheme);
        CHECK(decode_tags(s, tags, ConllOptions{true}) == spans);
      }
    }
  }

  TEST_CASE("overlapping spans cannot be written as flat tags") {
    const auto s = testing::sentence("Bank of China");
    CHECK(kind_of([&] { spans_to_tags(s, {testing::span(s, 0, 2, "ORG"), testing::span(s, 2, 2, "LOC")}, TagScheme::bio); }) ==
          ErrorKind::overlap_in_flat_mode);
    CHECK(kind_of([&] { spans_to_tags(s, {EntitySpan{1, 5, "ORG", ""}}, TagScheme::bio); }) ==
          ErrorKind::span_out_of_range);
  }

  TEST_CASE("write_conll then parse_conll is the identity") {
    const std::string text = "EU B-ORG\nrejects O\nGerman B-MISC\n\nPeter B-PER\nBlackburn I-PER\n";
    const auto c = conll(text);
    for (auto scheme : {TagScheme::bio, TagScheme::bioes}) {
      std::ostringstream out;
      write_conll(out, c, scheme);
      const auto back = conll(out.str());
      CHECK(back.gold == c.gold);
      REQUIRE(back.size() == c.size());
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(back.sentences[i].tokens == c.sentences[i].tokens);
    }
  }

  TEST_CASE("nested JSON lines") {
    std::istringstream in(
        R"({"id": 7, "tokens": ["Bank", "of", "China"], "entities": [{"start":0,"end":2,"type":"ORG"},{"start":2,"end":2,"type":"LOC"},{"start":2,"end":2,"type":"LOC"}]})"
        "\n"
        R"({"id": 3, "tokens": ["hello"]})"
        "\n");
    const auto c = parse_nested_jsonl(in, conll2003_schema());
    CHECK(c.mode == CorpusMode::nested);
    REQUIRE(c.size() == 2);
    CHECK(c.spans_of(7).size() == 2);  // duplicate collapsed, overlap kept
    CHECK(c.spans_of(3).empty());
    CHECK(c.spans_of(7, "LOC") == std::vector<EntitySpan>{{2, 2, "LOC", "China"}});

    auto load = [](const std::string& text) {
      std::istringstream s(text);
      parse_nested_jsonl(s, conll2003_schema());
    };
    CHECK(kind_of([&] { load("{\"id\":1,\"tokens\":[\"a\"]}\n{\"id\":1,\"tokens\":[\"b\"]}\n"); }) ==
          ErrorKind::duplicate_id);
    CHECK(kind_of([&] { load(R"({"tokens":["a"],"entities":[{"start":0,"end":1,"type":"LOC"}]})"); }) ==
          ErrorKind::span_out_of_range);
    CHECK(kind_of([&] { load(R"({"tokens":["a"],"entities":[{"start":0,"end":0,"type":"GENE"}]})"); }) ==
          ErrorKind::unknown_type);
    CHECK(kind_of([&] { load("not json\n"); }) == ErrorKind::malformed_line);
  }

  TEST_CASE("subset keeps ids and gold") {
    const auto c = conll("a B-LOC\n\nb O\n\nc B-PER\n");
    const auto sub = c.subset({2, 0});
    REQUIRE(sub.size() == 2);
    CHECK(sub.sentences[0].id == 2);
    CHECK(sub.spans_of(2).size() == 1);
    CHECK(sub.spans_of(0).size() == 1);
    CHECK(kind_of([&] { c.subset({9}); }) == ErrorKind::unknown_sentence_id);
  }
}
