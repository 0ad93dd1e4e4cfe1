#include "iclner/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <tuple>

#include <spdlog/spdlog.h>

#include "iclner/error.hpp"
#include "iclner/random.hpp"
#include "iclner/text.hpp"

namespace iclner {

ScoreTriple ScoreTriple::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  ScoreTriple s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  s.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  s.f1 = s.precision + s.recall == 0 ? 0.0 : 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

namespace {

using SpanKey = std::tuple<std::size_t, std::size_t, std::string>;

std::set<SpanKey> keys_of(const std::vector<EntitySpan>& spans) {
  std::set<SpanKey> out;
  for (const auto& s : spans) out.emplace(s.start, s.end, s.type);
  return out;
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

}  // namespace

ScoreReport score_spans(const std::map<SentenceId, std::vector<EntitySpan>>& predicted,
                        const std::map<SentenceId, std::vector<EntitySpan>>& gold) {
  std::map<std::string, Counts> by_type;
  Counts total;
  std::set<SentenceId> ids;
  for (const auto& [id, spans] : gold) ids.insert(id);
  for (const auto& [id, spans] : predicted) ids.insert(id);

  static const std::vector<EntitySpan> kNone;
  for (SentenceId id : ids) {
    auto g = gold.find(id);
    auto p = predicted.find(id);
    const auto gold_keys = keys_of(g == gold.end() ? kNone : g->second);
    const auto pred_keys = keys_of(p == predicted.end() ? kNone : p->second);
    for (const auto& k : pred_keys) {
      auto& c = by_type[std::get<2>(k)];
      if (gold_keys.count(k)) {
        ++c.tp;
        ++total.tp;
      } else {
        ++c.fp;
        ++total.fp;
      }
    }
    for (const auto& k : gold_keys) {
      if (!pred_keys.count(k)) {
        ++by_type[std::get<2>(k)].fn;
        ++total.fn;
      }
    }
  }
  ScoreReport report;
  report.micro = ScoreTriple::from_counts(total.tp, total.fp, total.fn);
  for (const auto& [type, c] : by_type) report.per_type[type] = ScoreTriple::from_counts(c.tp, c.fp, c.fn);
  report.sentences = ids.size();
  return report;
}

ScoreReport score(const std::vector<PredictionSet>& predictions, const LabeledCorpus& gold, ScoreOptions options) {
  std::map<SentenceId, std::vector<EntitySpan>> pred;
  for (const auto& p : predictions) {
    if (!gold.find(p.sentence_id)) {
      throw Error(ErrorKind::unknown_sentence_id,
                  "prediction for sentence " + std::to_string(p.sentence_id) + " has no gold sentence");
    }
    auto& spans = pred[p.sentence_id];
    for (const auto& s : p.spans) spans.push_back(s.span);
  }
  std::map<SentenceId, std::vector<EntitySpan>> gold_spans;
  for (const auto& s : gold.sentences) {
    if (options.restrict_to_predicted && !pred.count(s.id)) continue;
    gold_spans[s.id] = gold.spans_of(s.id);
  }
  auto report = score_spans(pred, gold_spans);
  for (const auto& name : gold.schema.names()) report.per_type.try_emplace(name, ScoreTriple{});
  return report;
}

LabeledCorpus sample_test_subset(const LabeledCorpus& corpus, std::size_t n, std::uint64_t seed) {
  if (n > corpus.size()) {
    throw Error(ErrorKind::invalid_argument,
                "cannot sample " + std::to_string(n) + " of " + std::to_string(corpus.size()) + " sentences");
  }
  Rng rng(hash_combine(seed, "test-subset"));
  std::vector<SentenceId> ids;
  for (auto i : rng.sample(corpus.size(), n)) ids.push_back(corpus.sentences[i].id);
  std::sort(ids.begin(), ids.end());
  return corpus.subset(ids);
}

std::vector<LabeledCorpus> low_resource_splits(const LabeledCorpus& corpus, const std::vector<std::size_t>& sizes,
                                               std::uint64_t seed) {
  for (auto n : sizes) {
    if (n > corpus.size()) {
      throw Error(ErrorKind::invalid_argument,
                  "split of " + std::to_string(n) + " exceeds corpus size " + std::to_string(corpus.size()));
    }
  }
  std::vector<SentenceId> order;
  order.reserve(corpus.size());
  for (const auto& s : corpus.sentences) order.push_back(s.id);
  std::sort(order.begin(), order.end());
  Rng rng(hash_combine(seed, "low-resource"));
  rng.shuffle(order);

  std::vector<LabeledCorpus> out;
  for (auto n : sizes) {
    std::vector<SentenceId> ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(ids.begin(), ids.end());
    out.push_back(corpus.subset(ids));
  }
  return out;
}

namespace {

bool has_type(const LabeledCorpus& corpus, SentenceId id, const std::string& type) {
  const auto& spans = corpus.spans_of(id);
  return std::any_of(spans.begin(), spans.end(), [&](const EntitySpan& s) { return s.type == type; });
}

}  // namespace

LabeledCorpus build_seedset(const LabeledCorpus& corpus, std::uint64_t seed) {
  Rng rng(hash_combine(seed, "seedset"));
  std::vector<SentenceId> chosen;
  auto draw = [&](const std::string& type, bool positive) {
    std::vector<SentenceId> candidates;
    for (const auto& s : corpus.sentences) {
      if (has_type(corpus, s.id, type) != positive) continue;
      // Already-chosen sentences are excluded up front, which is a re-draw without the retry loop.
      if (std::find(chosen.begin(), chosen.end(), s.id) != chosen.end()) continue;
      candidates.push_back(s.id);
    }
    if (candidates.empty()) {
      throw Error(ErrorKind::unsatisfiable, std::string("no unused sentence ") + (positive ? "with" : "without") +
                                                " a " + type + " entity");
    }
    chosen.push_back(candidates[static_cast<std::size_t>(rng.below(candidates.size()))]);
  };
  for (const auto& type : corpus.schema.names()) {
    draw(type, true);
    draw(type, false);
  }
  auto out = corpus.subset(chosen);
  check_seedset(out);
  return out;
}

void check_seedset(const LabeledCorpus& seedset) {
  const auto types = seedset.schema.names();
  if (seedset.size() != 2 * types.size()) {
    throw Error(ErrorKind::unsatisfiable, "seedset has " + std::to_string(seedset.size()) + " sentences, expected " +
                                              std::to_string(2 * types.size()));
  }
  std::set<SentenceId> ids;
  for (const auto& s : seedset.sentences) ids.insert(s.id);
  if (ids.size() != seedset.size()) throw Error(ErrorKind::unsatisfiable, "seedset repeats a sentence");
  // Sentences are stored as (positive, negative) pairs in schema order.
  for (std::size_t t = 0; t < types.size(); ++t) {
    const auto& pos = seedset.sentences[2 * t];
    const auto& neg = seedset.sentences[2 * t + 1];
    if (!has_type(seedset, pos.id, types[t]) || has_type(seedset, neg.id, types[t])) {
      throw Error(ErrorKind::unsatisfiable, "seedset pair for " + types[t] + " is not one positive and one negative");
    }
  }
}

std::string run_id_for(const std::string& dataset, const RunConfig& config) {
  std::string id = dataset;
  id += '-';
  id += to_string(config.retrieval);
  id += '-';
  id += to_string(config.format);
  id += "-k" + std::to_string(config.k);
  id += '-';
  id += to_string(config.verification);
  return id;
}

std::string results_csv(const std::vector<AblationRow>& rows) {
  std::string out = kResultsCsvHeader;
  out += '\n';
  char buf[128];
  for (const auto& r : rows) {
    out += r.run_id + ',' + r.dataset + ',' + std::string(to_string(r.config.retrieval)) + ',' +
           std::string(to_string(r.config.format)) + ',' + std::to_string(r.config.k) + ',' +
           std::string(to_string(r.config.verification));
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%zu,%zu,%zu\n", r.score.precision, r.score.recall, r.score.f1,
                  r.score.tp, r.score.fp, r.score.fn);
    out += buf;
  }
  return out;
}

std::vector<AblationRow> run_sweep(const std::vector<RunConfig>& configs, const AblationInputs& inputs) {
  if (!inputs.test || !inputs.resources || !inputs.backends) {
    throw Error(ErrorKind::invalid_argument, "ablation needs a test corpus, retrieval resources and a backend factory");
  }
  std::vector<AblationRow> rows;
  for (const auto& config : configs) {
    AblationRow row;
    row.dataset = inputs.dataset;
    row.config = config;
    row.run_id = run_id_for(inputs.dataset, config);
    spdlog::info("ablation run {}", row.run_id);
    auto run = run_corpus(*inputs.test, *inputs.resources, config, inputs.backends(config));
    row.score = score(run.predictions, *inputs.test).micro;
    row.manifest = std::move(run.manifest);
    row.manifest["run_id"] = row.run_id;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AblationRow> ablate_kshot(const RunConfig& base, const std::vector<std::size_t>& ks,
                                      const std::vector<Retrieval>& retrievals, const AblationInputs& inputs) {
  std::vector<RunConfig> configs;
  for (auto r : retrievals) {
    for (auto k : ks) {
      RunConfig c = base;
      c.retrieval = r;
      c.k = k;
      configs.push_back(c);
    }
  }
  return run_sweep(configs, inputs);
}

std::vector<AblationRow> ablate_format(const RunConfig& base, const std::vector<OutputFormat>& formats,
                                       const AblationInputs& inputs) {
  std::vector<RunConfig> configs;
  for (auto f : formats) {
    RunConfig c = base;
    c.format = f;
    configs.push_back(c);
  }
  return run_sweep(configs, inputs);
}

}  // namespace iclner
