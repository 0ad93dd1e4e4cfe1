#include "iclner/synth.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "iclner/error.hpp"
#include "iclner/random.hpp"
#include "iclner/text.hpp"

namespace iclner {

namespace {

struct Lexicon {
  std::vector<std::pair<std::string, std::vector<std::string>>> entities;  // (type, surfaces)
  std::vector<std::string> openers;
  std::vector<std::string> capitalized;
  std::vector<std::string> filler;
};

const Lexicon& lexicon() {
  static const Lexicon lex{
      {
          {"LOC",
           {"Germany", "Paris", "London", "Brazil", "Tokyo", "New York", "Cairo", "Texas", "Lake Geneva", "Sydney",
            "South Africa", "Rome", "Moscow", "Kenya", "Buenos Aires", "Oslo"}},
          {"ORG",
           {"Bayern Munich", "United Nations", "Ford Motor Co", "Real Madrid", "NATO", "Commerzbank", "Ajax",
            "European Commission", "Toyota", "Chelsea", "World Bank", "Fiat"}},
          {"PER",
           {"John Smith", "Maria Lopez", "Chen Wei", "Ahmed Hassan", "Peter Hall", "Boris Yeltsin", "Steffi Graf",
            "Ana Silva", "Tom Moody", "Wasim Akram", "Helmut Kohl", "Lara"}},
          {"MISC",
           {"German", "French", "Olympic", "World Cup", "Euro", "English", "Dutch", "Grand Prix", "Nobel", "Islamic",
            "Davis Cup"}},
      },
      {"The", "On", "Officials", "Analysts", "Earlier", "After", "In", "Shares"},
      {"Monday", "Tuesday", "Friday", "Sunday", "President", "Minister", "Chairman", "Police", "Spokesman",
       "January", "March", "Coach", "Premier", "Sources"},
      {"said", "the", "on", "in", "of", "a", "team", "market", "won", "match", "shares", "rose", "percent",
       "after", "talks", "with", "by", "reported", "expected", "to", "visit", "next", "week", "and", "for",
       "was", "at", "three", "goals", "season", "deal", "government", "prices", "fell", "late", "agreed",
       "final", "opened", "up", "points", "new", "record", "from", "will", "meet", "its", "their", ",", "-"},
  };
  return lex;
}

std::string pick(Rng& rng, const std::vector<std::string>& v) { return v[static_cast<std::size_t>(rng.below(v.size()))]; }

void append_sentence(LabeledCorpus& corpus, SentenceId id, std::size_t min_tokens, std::size_t max_tokens,
                     double entity_rate, Rng& rng, std::unordered_set<std::string>& seen) {
  const auto& lex = lexicon();
  for (;;) {
    Sentence s;
    s.id = id;
    std::vector<EntitySpan> spans;
    const std::size_t target = min_tokens + static_cast<std::size_t>(rng.below(max_tokens - min_tokens + 1));
    s.tokens.push_back(pick(rng, lex.openers));
    bool last_was_entity = false;
    while (s.tokens.size() + 1 < target) {
      const double u = rng.uniform01();
      if (!last_was_entity && u < entity_rate) {
        const auto& [type, surfaces] = lex.entities[static_cast<std::size_t>(rng.below(lex.entities.size()))];
        const auto words = split_whitespace(pick(rng, surfaces));
        const std::size_t start = s.tokens.size();
        for (const auto& w : words) s.tokens.emplace_back(w);
        spans.push_back(EntitySpan{start, s.tokens.size() - 1, type, {}});
        last_was_entity = true;
      } else if (u < entity_rate + 0.12) {
        s.tokens.push_back(pick(rng, lex.capitalized));
        last_was_entity = false;
      } else {
        s.tokens.push_back(pick(rng, lex.filler));
        last_was_entity = false;
      }
    }
    s.tokens.emplace_back(".");
    if (!seen.insert(s.text()).second) continue;
    for (auto& sp : spans) sp.surface = s.surface(sp.start, sp.end);
    if (!spans.empty()) corpus.gold[id] = std::move(spans);
    corpus.sentences.push_back(std::move(s));
    return;
  }
}

LabeledCorpus empty_corpus() {
  LabeledCorpus c;
  c.schema = conll2003_schema();
  c.mode = CorpusMode::flat;
  return c;
}

// Deterministic unit-variance-ish vector for a key.
std::vector<double> direction(std::uint64_t seed, std::string_view key, std::uint32_t dim) {
  Rng rng(hash_combine(seed, key));
  std::vector<double> v(dim);
  for (auto& x : v) {
    const double u1 = 1.0 - rng.uniform01();
    const double u2 = rng.uniform01();
    x = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  return v;
}

}  // namespace

SynthDataset synth_dataset(const SynthOptions& o) {
  if (o.min_tokens < 3 || o.max_tokens < o.min_tokens || o.long_max_tokens < o.long_min_tokens ||
      o.long_min_tokens < 3) {
    throw Error(ErrorKind::invalid_argument, "bad synthetic sentence length range");
  }
  Rng rng(hash_combine(o.seed, "synth"));
  std::unordered_set<std::string> seen;
  SynthDataset d{empty_corpus(), empty_corpus()};
  // Long sentences are spread through the training set rather than bunched at the end.
  const std::size_t total_train = o.train_sentences + o.long_train_sentences;
  std::size_t long_left = o.long_train_sentences;
  for (std::size_t i = 0; i < total_train; ++i) {
    const bool is_long = long_left > 0 && rng.below(total_train - i) < long_left;
    if (is_long) --long_left;
    append_sentence(d.train, static_cast<SentenceId>(i), is_long ? o.long_min_tokens : o.min_tokens,
                    is_long ? o.long_max_tokens : o.max_tokens, o.entity_rate, rng, seen);
  }
  for (std::size_t i = 0; i < o.test_sentences; ++i) {
    append_sentence(d.test, static_cast<SentenceId>(i), o.min_tokens, o.max_tokens, o.entity_rate, rng, seen);
  }
  return d;
}

Emb1File synth_embeddings(const LabeledCorpus& corpus, StoreLevel level, std::uint32_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error(ErrorKind::invalid_argument, "dim must be positive");
  Emb1File file;
  file.level = level;
  file.dim = dim;
  for (const auto& s : corpus.sentences) {
    std::vector<std::string> type_of(s.size());
    for (const auto& sp : corpus.spans_of(s.id)) {
      for (std::size_t i = sp.start; i <= sp.end; ++i) type_of[i] = sp.type;
    }
    std::vector<double> sentence_sum(dim, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto v = direction(seed, "word|" + s.tokens[i], dim);
      if (!type_of[i].empty()) {
        const auto t = direction(seed, "type|" + type_of[i], dim);
        for (std::uint32_t j = 0; j < dim; ++j) v[j] = 0.5 * v[j] + 2.0 * t[j];
      }
      const auto noise = direction(seed, "pos|" + std::to_string(s.id) + "|" + std::to_string(i), dim);
      for (std::uint32_t j = 0; j < dim; ++j) v[j] += 0.05 * noise[j];
      if (level == StoreLevel::token) {
        VectorRecord r;
        r.sentence_id = s.id;
        r.token_index = static_cast<std::uint32_t>(i);
        r.vector.assign(v.begin(), v.end());
        file.records.push_back(std::move(r));
      } else {
        for (std::uint32_t j = 0; j < dim; ++j) sentence_sum[j] += v[j];
      }
    }
    if (level == StoreLevel::sentence) {
      VectorRecord r;
      r.sentence_id = s.id;
      r.token_index = kSentenceLevel;
      r.vector.assign(sentence_sum.begin(), sentence_sum.end());
      file.records.push_back(std::move(r));
    }
  }
  return file;
}

std::map<SentenceId, std::vector<EntitySpan>> gold_entity_map(const LabeledCorpus& corpus) {
  std::map<SentenceId, std::vector<EntitySpan>> out;
  for (const auto& s : corpus.sentences) {
    const auto& spans = corpus.spans_of(s.id);
    if (!spans.empty()) out[s.id] = spans;
  }
  return out;
}

}  // namespace iclner
