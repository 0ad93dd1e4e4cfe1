#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclner/corpus.hpp"
#include "iclner/pipeline.hpp"

namespace iclner {

struct ScoreTriple {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  static ScoreTriple from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
};

struct ScoreReport {
  ScoreTriple micro;
  std::map<std::string, ScoreTriple> per_type;
  std::size_t sentences = 0;
};

struct ScoreOptions {
  /// Score only the gold sentences that have a prediction line (useful for sampled subsets).
  bool restrict_to_predicted = false;
};

/// Exact-match span scoring, micro-averaged. Duplicate predictions count once.
ScoreReport score(const std::vector<PredictionSet>& predictions, const LabeledCorpus& gold,
                  ScoreOptions options = {});
ScoreReport score_spans(const std::map<SentenceId, std::vector<EntitySpan>>& predicted,
                        const std::map<SentenceId, std::vector<EntitySpan>>& gold);

/// `n` distinct sentences drawn with `seed`, kept in id order.
LabeledCorpus sample_test_subset(const LabeledCorpus& corpus, std::size_t n, std::uint64_t seed);

/// One permutation per seed; each split is a prefix of it, so smaller splits nest in larger ones.
/// Splits come back in the order of `sizes`.
std::vector<LabeledCorpus> low_resource_splits(const LabeledCorpus& corpus, const std::vector<std::size_t>& sizes,
                                               std::uint64_t seed);

/// One sentence containing the type and one without it, for every schema type; all distinct.
LabeledCorpus build_seedset(const LabeledCorpus& corpus, std::uint64_t seed);
/// Throws Unsatisfiable when `seedset` breaks the positive/negative-per-type rule.
void check_seedset(const LabeledCorpus& seedset);

struct AblationRow {
  std::string run_id;
  std::string dataset;
  RunConfig config;
  ScoreTriple score;
  nlohmann::json manifest;
};

inline constexpr const char* kResultsCsvHeader = "run_id,dataset,retrieval,format,k,verification,precision,recall,f1,tp,fp,fn";

std::string results_csv(const std::vector<AblationRow>& rows);
std::string run_id_for(const std::string& dataset, const RunConfig& config);

using BackendFactory = std::function<Backends(const RunConfig&)>;

struct AblationInputs {
  std::string dataset;
  const LabeledCorpus* test = nullptr;
  const RetrievalResources* resources = nullptr;
  BackendFactory backends;
};

/// One run per (k, retrieval) pair, k varying fastest.
std::vector<AblationRow> ablate_kshot(const RunConfig& base, const std::vector<std::size_t>& ks,
                                      const std::vector<Retrieval>& retrievals, const AblationInputs& inputs);
/// One run per output format on the same subset and backend factory.
std::vector<AblationRow> ablate_format(const RunConfig& base, const std::vector<OutputFormat>& formats,
                                       const AblationInputs& inputs);
/// Generic sweep: one run per config, in order.
std::vector<AblationRow> run_sweep(const std::vector<RunConfig>& configs, const AblationInputs& inputs);

}  // namespace iclner
