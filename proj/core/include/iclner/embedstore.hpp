#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iclner/corpus.hpp"

namespace iclner {

/// token_index value of sentence-level records.
inline constexpr std::uint32_t kSentenceLevel = 0xFFFFFFFFu;

enum class StoreLevel : std::uint32_t { sentence = 0, token = 1 };

std::string_view to_string(StoreLevel level) noexcept;
StoreLevel parse_store_level(std::string_view text);

struct VectorRecord {
  SentenceId sentence_id = 0;
  std::uint32_t token_index = kSentenceLevel;
  std::vector<float> vector;
};

struct Neighbor {
  SentenceId sentence_id = 0;
  std::uint32_t token_index = kSentenceLevel;
  double score = 0.0;  // cosine similarity

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Canonical result order: score descending, then sentence id, then token index ascending.
bool ranks_before(const Neighbor& a, const Neighbor& b) noexcept;

struct TokenQuery {
  std::uint32_t token_index = 0;
  std::vector<float> vector;
};

/// Exact cosine-similarity index over L2-normalized vectors. Immutable after build;
/// concurrent queries need no synchronization.
class Datastore {
 public:
  /// Level is inferred: all records sentence-level, or none of them.
  static Datastore build(std::vector<VectorRecord> records);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return sentence_ids_.size(); }
  StoreLevel level() const noexcept { return level_; }

  SentenceId sentence_id(std::size_t row) const { return sentence_ids_.at(row); }
  std::uint32_t token_index(std::size_t row) const { return token_indices_.at(row); }
  std::span<const float> row(std::size_t row) const;

  /// Normalized vector of one record, if present.
  std::optional<std::span<const float>> find(SentenceId sentence_id, std::uint32_t token_index = kSentenceLevel) const;

  /// Exact top-k over every record, any level.
  std::vector<Neighbor> knn(std::span<const float> query, std::size_t k) const;

  /// Sentence-level kNN; the store must be sentence-level.
  std::vector<Neighbor> knn_sentences(std::span<const float> query, std::size_t k) const;

  /// Union of the `fanout` nearest tokens of every query, each record once with its best score,
  /// sorted canonically.
  std::vector<Neighbor> pool_token_neighbors(const std::vector<TokenQuery>& queries, std::size_t fanout) const;

  /// Entity-level demonstration retrieval: pools `fanout` neighbors per query token, then walks the
  /// pool top-down collecting distinct sentence ids until `k` are found.
  std::vector<SentenceId> retrieve_token_demos(const std::vector<TokenQuery>& queries, std::size_t fanout,
                                               std::size_t k) const;

  /// Queries for the given tokens of one sentence, skipping tokens absent from the store.
  std::vector<TokenQuery> token_queries(SentenceId sentence_id, const std::vector<std::size_t>& tokens) const;

 private:
  Datastore() = default;
  std::vector<double> normalized_query(std::span<const float> query) const;
  std::vector<Neighbor> top_k(const std::vector<double>& query, std::size_t k) const;

  std::size_t dim_ = 0;
  StoreLevel level_ = StoreLevel::sentence;
  std::vector<float> data_;
  std::vector<SentenceId> sentence_ids_;
  std::vector<std::uint32_t> token_indices_;
  std::unordered_map<std::uint64_t, std::size_t> rows_;
};

/// `k` distinct ids of [0, corpus_size), uniform without replacement, reproducible from `seed`.
std::vector<SentenceId> random_demos(std::size_t corpus_size, std::size_t k, std::uint64_t seed);

/// Contents of an EMB1 vector file.
struct Emb1File {
  StoreLevel level = StoreLevel::sentence;
  std::uint32_t dim = 0;
  std::vector<VectorRecord> records;
};

Emb1File parse_emb1(std::string_view bytes);
Emb1File read_emb1(const std::filesystem::path& path);
std::string serialize_emb1(const Emb1File& file);
void write_emb1(const std::filesystem::path& path, const Emb1File& file);

}  // namespace iclner
