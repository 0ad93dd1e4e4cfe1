#include "iclner/embedstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_set>

#include "iclner/error.hpp"
#include "iclner/random.hpp"
#include "iclner/text.hpp"

namespace iclner {

namespace {

constexpr double kMinNorm = 1e-12;

std::uint64_t row_key(SentenceId sid, std::uint32_t tok) noexcept {
  return (static_cast<std::uint64_t>(sid) << 32) | tok;
}

// Normalizes into float storage; the same routine serves records and queries so that a
// stored vector queried against itself scores as close to 1 as float rounding allows.
void normalize_into(std::span<const float> in, float* out) {
  double sq = 0.0;
  for (float x : in) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (!(norm >= kMinNorm)) throw Error(ErrorKind::zero_vector, "vector norm below 1e-12");
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<float>(static_cast<double>(in[i]) / norm);
}

}  // namespace

std::string_view to_string(StoreLevel level) noexcept {
  return level == StoreLevel::sentence ? "sentence" : "token";
}

StoreLevel parse_store_level(std::string_view text) {
  if (text == "sentence") return StoreLevel::sentence;
  if (text == "token") return StoreLevel::token;
  throw Error(ErrorKind::invalid_argument, "level must be 'sentence' or 'token', got '" + std::string(text) + "'");
}

bool ranks_before(const Neighbor& a, const Neighbor& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  if (a.sentence_id != b.sentence_id) return a.sentence_id < b.sentence_id;
  return a.token_index < b.token_index;
}

Datastore Datastore::build(std::vector<VectorRecord> records) {
  if (records.empty()) throw Error(ErrorKind::invalid_argument, "cannot build an empty datastore");
  Datastore store;
  store.dim_ = records.front().vector.size();
  if (store.dim_ == 0) throw Error(ErrorKind::dimension_mismatch, "vectors must have dimension > 0");
  store.level_ = records.front().token_index == kSentenceLevel ? StoreLevel::sentence : StoreLevel::token;

  store.data_.resize(records.size() * store.dim_);
  store.sentence_ids_.reserve(records.size());
  store.token_indices_.reserve(records.size());
  store.rows_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.vector.size() != store.dim_) {
      throw Error(ErrorKind::dimension_mismatch, "record " + std::to_string(i) + " has dimension " +
                                                     std::to_string(r.vector.size()) + ", expected " +
                                                     std::to_string(store.dim_));
    }
    const bool sentence_level = r.token_index == kSentenceLevel;
    if (sentence_level != (store.level_ == StoreLevel::sentence)) {
      throw Error(ErrorKind::invalid_argument, "store mixes sentence-level and token-level records");
    }
    try {
      normalize_into(r.vector, store.data_.data() + i * store.dim_);
    } catch (const Error&) {
      throw Error(ErrorKind::zero_vector, "record " + std::to_string(i) + " (sentence " +
                                              std::to_string(r.sentence_id) + ") has norm below 1e-12");
    }
    if (!store.rows_.emplace(row_key(r.sentence_id, r.token_index), i).second) {
      throw Error(ErrorKind::duplicate_id, "duplicate record key (sentence " + std::to_string(r.sentence_id) +
                                               ", token " + std::to_string(r.token_index) + ")");
    }
    store.sentence_ids_.push_back(r.sentence_id);
    store.token_indices_.push_back(r.token_index);
  }
  return store;
}

std::span<const float> Datastore::row(std::size_t r) const {
  if (r >= size()) throw Error(ErrorKind::invalid_argument, "row out of range");
  return {data_.data() + r * dim_, dim_};
}

std::optional<std::span<const float>> Datastore::find(SentenceId sid, std::uint32_t tok) const {
  auto it = rows_.find(row_key(sid, tok));
  if (it == rows_.end()) return std::nullopt;
  return row(it->second);
}

std::vector<double> Datastore::normalized_query(std::span<const float> query) const {
  if (query.size() != dim_) {
    throw Error(ErrorKind::dimension_mismatch,
                "query dimension " + std::to_string(query.size()) + " != store dimension " + std::to_string(dim_));
  }
  std::vector<float> tmp(dim_);
  normalize_into(query, tmp.data());
  return {tmp.begin(), tmp.end()};
}

std::vector<Neighbor> Datastore::top_k(const std::vector<double>& q, std::size_t k) const {
  const std::size_t n = size();
  std::vector<Neighbor> all(n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* v = data_.data() + r * dim_;
    double dot = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) dot += q[j] * static_cast<double>(v[j]);
    all[r] = Neighbor{sentence_ids_[r], token_indices_[r], dot};
  }
  const std::size_t take = std::min(k, n);
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), ranks_before);
  all.resize(take);
  return all;
}

std::vector<Neighbor> Datastore::knn(std::span<const float> query, std::size_t k) const {
  return top_k(normalized_query(query), k);
}

std::vector<Neighbor> Datastore::knn_sentences(std::span<const float> query, std::size_t k) const {
  if (level_ != StoreLevel::sentence) {
    throw Error(ErrorKind::invalid_argument, "knn_sentences needs a sentence-level store");
  }
  return knn(query, k);
}

std::vector<Neighbor> Datastore::pool_token_neighbors(const std::vector<TokenQuery>& queries,
                                                      std::size_t fanout) const {
  if (level_ != StoreLevel::token) throw Error(ErrorKind::invalid_argument, "token retrieval needs a token-level store");
  if (queries.empty()) throw Error(ErrorKind::empty_query, "no query vectors");
  std::unordered_map<std::uint64_t, std::size_t> seen;
  std::vector<Neighbor> pool;
  for (const auto& q : queries) {
    for (const auto& nb : knn(q.vector, fanout)) {
      const auto key = row_key(nb.sentence_id, nb.token_index);
      auto [it, inserted] = seen.emplace(key, pool.size());
      if (inserted) {
        pool.push_back(nb);
      } else if (nb.score > pool[it->second].score) {
        pool[it->second].score = nb.score;
      }
    }
  }
  std::sort(pool.begin(), pool.end(), ranks_before);
  return pool;
}

std::vector<SentenceId> Datastore::retrieve_token_demos(const std::vector<TokenQuery>& queries, std::size_t fanout,
                                                        std::size_t k) const {
  const auto pool = pool_token_neighbors(queries, fanout);
  std::vector<SentenceId> out;
  std::unordered_set<SentenceId> taken;
  for (const auto& nb : pool) {
    if (out.size() >= k) break;
    if (taken.insert(nb.sentence_id).second) out.push_back(nb.sentence_id);
  }
  return out;
}

std::vector<TokenQuery> Datastore::token_queries(SentenceId sid, const std::vector<std::size_t>& tokens) const {
  std::vector<TokenQuery> out;
  for (std::size_t t : tokens) {
    if (auto v = find(sid, static_cast<std::uint32_t>(t))) {
      out.push_back(TokenQuery{static_cast<std::uint32_t>(t), std::vector<float>(v->begin(), v->end())});
    }
  }
  return out;
}

std::vector<SentenceId> random_demos(std::size_t corpus_size, std::size_t k, std::uint64_t seed) {
  if (k > corpus_size) {
    throw Error(ErrorKind::k_too_large,
                "k=" + std::to_string(k) + " exceeds corpus size " + std::to_string(corpus_size));
  }
  Rng rng(seed);
  const auto picks = rng.sample(corpus_size, k);
  return {picks.begin(), picks.end()};
}

// EMB1 layout (little-endian): "EMB1", u32 dim, u32 level, u64 count,
// then per record u32 sentence_id, u32 token_index, dim x f32.
namespace {

static_assert(std::endian::native == std::endian::little, "EMB1 I/O assumes a little-endian host");

template <typename T>
T read_le(std::string_view bytes, std::size_t& pos) {
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

template <typename T>
void write_le(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 8;

}  // namespace

Emb1File parse_emb1(std::string_view bytes) {
  if (bytes.size() < kHeaderSize || bytes.substr(0, 4) != "EMB1") {
    throw Error(ErrorKind::bad_vector_file, "missing EMB1 magic");
  }
  std::size_t pos = 4;
  Emb1File file;
  file.dim = read_le<std::uint32_t>(bytes, pos);
  const auto level = read_le<std::uint32_t>(bytes, pos);
  const auto count = read_le<std::uint64_t>(bytes, pos);
  if (level > 1) throw Error(ErrorKind::bad_vector_file, "level must be 0 or 1, got " + std::to_string(level));
  if (file.dim == 0) throw Error(ErrorKind::bad_vector_file, "dimension must be positive");
  file.level = static_cast<StoreLevel>(level);

  const std::uint64_t record_size = 8 + 4ull * file.dim;
  const std::uint64_t payload = bytes.size() - kHeaderSize;
  if (count > payload / record_size || count * record_size != payload) {
    throw Error(ErrorKind::bad_vector_file, "record count " + std::to_string(count) + " does not match file size " +
                                                std::to_string(bytes.size()));
  }
  file.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    VectorRecord r;
    r.sentence_id = read_le<std::uint32_t>(bytes, pos);
    r.token_index = read_le<std::uint32_t>(bytes, pos);
    if ((file.level == StoreLevel::sentence) != (r.token_index == kSentenceLevel)) {
      throw Error(ErrorKind::bad_vector_file, "record " + std::to_string(i) + " token index disagrees with level");
    }
    r.vector.resize(file.dim);
    std::memcpy(r.vector.data(), bytes.data() + pos, 4ull * file.dim);
    pos += 4ull * file.dim;
    for (float x : r.vector) {
      if (!std::isfinite(x)) throw Error(ErrorKind::bad_vector_file, "record " + std::to_string(i) + " is not finite");
    }
    file.records.push_back(std::move(r));
  }
  return file;
}

Emb1File read_emb1(const std::filesystem::path& path) { return parse_emb1(read_file(path)); }

std::string serialize_emb1(const Emb1File& file) {
  std::string out = "EMB1";
  write_le<std::uint32_t>(out, file.dim);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.level));
  write_le<std::uint64_t>(out, file.records.size());
  for (const auto& r : file.records) {
    if (r.vector.size() != file.dim) throw Error(ErrorKind::dimension_mismatch, "record dimension != file dimension");
    write_le<std::uint32_t>(out, r.sentence_id);
    write_le<std::uint32_t>(out, file.level == StoreLevel::sentence ? kSentenceLevel : r.token_index);
    out.append(reinterpret_cast<const char*>(r.vector.data()), 4 * r.vector.size());
  }
  return out;
}

void write_emb1(const std::filesystem::path& path, const Emb1File& file) {
  write_file_atomic(path, serialize_emb1(file));
}

}  // namespace iclner
