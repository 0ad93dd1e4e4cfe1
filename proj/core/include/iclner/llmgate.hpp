#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "iclner/corpus.hpp"
#include "iclner/markup.hpp"

namespace iclner {

/// Decoding parameters default to greedy, single-sample generation with a 512-token cap.
struct CompletionRequest {
  std::string prompt;
  int max_tokens = 512;
  double temperature = 0.0;
  double top_p = 1.0;
  double frequency_penalty = 0.0;
  double presence_penalty = 0.0;
  int best_of = 1;

  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

struct CompletionResponse {
  std::string text;  // completion only, never the echoed prompt
  std::string backend_id;
  bool cached = false;
  std::int64_t latency_ms = 0;
};

/// Body of `POST {base}/completions`: model, prompt and the six decoding fields.
nlohmann::json to_wire_json(const CompletionRequest& request, std::string_view model);
CompletionRequest request_from_wire_json(const nlohmann::json& body);

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
  virtual std::string id() const = 0;
};

using BackendPtr = std::shared_ptr<CompletionBackend>;

// ---------------------------------------------------------------------------
// HTTP

enum class ApiFlavor { completions, chat };

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_delay{500};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_delay{30000};
};

struct HttpBackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model = "gpt-3.5-turbo-instruct";
  ApiFlavor api = ApiFlavor::completions;
  std::chrono::seconds timeout{60};
  RetryPolicy retry;
};

/// Fills base_url and api_key from ICLNER_API_BASE / ICLNER_API_KEY when set.
HttpBackendConfig http_config_from_env(HttpBackendConfig base = {});

/// OpenAI-compatible completions client. Chat flavor wraps the prompt in a single user message.
class HttpBackend : public CompletionBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpBackend(HttpBackendConfig config, Sleeper sleeper = {});

  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override;
  /// Identifies responses of this endpoint+model in the cache key.
  nlohmann::json cache_namespace() const;
  const HttpBackendConfig& config() const noexcept { return config_; }

 private:
  std::string attempt(const nlohmann::json& body);

  HttpBackendConfig config_;
  std::string host_;
  std::string path_prefix_;
  Sleeper sleep_;
};

// ---------------------------------------------------------------------------
// Caching and throttling decorators

/// Content-addressed completion store: `<dir>/<h[0:2]>/<h>.json`, written atomically.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  static std::string key_for(const CompletionRequest& request, const nlohmann::json& backend_namespace);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const CompletionRequest& request, std::string_view text) const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path dir_;
};

class CachingBackend : public CompletionBackend {
 public:
  CachingBackend(BackendPtr inner, std::shared_ptr<ResponseCache> cache, nlohmann::json backend_namespace);

  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override { return inner_->id(); }

  std::uint64_t hits() const noexcept { return hits_; }
  std::uint64_t misses() const noexcept { return misses_; }

 private:
  BackendPtr inner_;
  std::shared_ptr<ResponseCache> cache_;
  nlohmann::json namespace_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

/// Process-wide in-flight cap plus a minimum spacing between request starts.
class Throttle {
 public:
  Throttle(std::size_t max_in_flight, double requests_per_minute = 0.0);

  class Permit {
   public:
    explicit Permit(Throttle& t);
    ~Permit();
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    Throttle& throttle_;
  };

  std::size_t max_in_flight() const noexcept { return max_in_flight_; }

 private:
  void acquire();
  void release();

  std::size_t max_in_flight_;
  std::chrono::nanoseconds min_spacing_{0};
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::chrono::steady_clock::time_point next_start_{};
};

class ThrottledBackend : public CompletionBackend {
 public:
  ThrottledBackend(BackendPtr inner, std::shared_ptr<Throttle> throttle);
  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override { return inner_->id(); }

 private:
  BackendPtr inner_;
  std::shared_ptr<Throttle> throttle_;
};

// ---------------------------------------------------------------------------
// Offline backends. All read the query back out of the versioned prompt templates and
// raise UnparseablePrompt when a prompt does not match them.

/// Looks sentences up by their space-joined text.
class GoldIndex {
 public:
  explicit GoldIndex(std::shared_ptr<const LabeledCorpus> corpus);

  const Sentence* sentence_for(std::string_view text) const;
  const EntityTypeSchema* type_for(std::string_view description) const;
  const LabeledCorpus& corpus() const noexcept { return *corpus_; }

 private:
  std::shared_ptr<const LabeledCorpus> corpus_;
  std::unordered_map<std::string, SentenceId> by_text_;
};

/// Echoes the query sentence, i.e. always predicts "no entity".
class CopyMock : public CompletionBackend {
 public:
  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override { return "mock:copy"; }
};

/// Answers extraction prompts with the gold encoding and verification prompts with the truth.
class OracleMock : public CompletionBackend {
 public:
  OracleMock(std::shared_ptr<const LabeledCorpus> gold, OutputFormat format = OutputFormat::at_marker);
  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override { return "mock:oracle"; }

 protected:
  std::string gold_answer(const Sentence& sentence, const EntityTypeSchema& type,
                          std::vector<EntitySpan> extra = {}) const;
  GoldIndex index_;
  OutputFormat format_;
};

/// Gold output plus spurious marks: each capitalized token outside every gold entity is
/// marked with probability `rate`. Verification prompts are always answered "Yes".
class OverpredictMock : public OracleMock {
 public:
  OverpredictMock(std::shared_ptr<const LabeledCorpus> gold, double rate, std::uint64_t seed,
                  OutputFormat format = OutputFormat::at_marker);
  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override { return "mock:overpredict"; }

 private:
  double rate_;
  std::uint64_t seed_;
};

/// Answers verification prompts with ground truth: "Yes" iff the word is a gold entity of the type.
class YesNoOracleMock : public CompletionBackend {
 public:
  explicit YesNoOracleMock(std::shared_ptr<const LabeledCorpus> gold);
  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override { return "mock:yesno-oracle"; }

 private:
  GoldIndex index_;
};

/// Replays completions from a fixture. Entries match an exact prompt, or the (query, type)
/// of an extraction prompt, or the (sentence, word, type) of a verification prompt.
class ScriptedMock : public CompletionBackend {
 public:
  struct Entry {
    std::optional<std::string> prompt;
    std::optional<std::string> query;
    std::optional<std::string> sentence;
    std::optional<std::string> word;
    std::optional<std::string> type;  // description as it appears in the prompt
    std::string completion;
  };

  explicit ScriptedMock(std::vector<Entry> entries);
  static ScriptedMock from_json(const nlohmann::json& fixture);
  static ScriptedMock load(const std::filesystem::path& path);

  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override { return "mock:scripted"; }

 private:
  std::vector<Entry> entries_;
};

}  // namespace iclner
