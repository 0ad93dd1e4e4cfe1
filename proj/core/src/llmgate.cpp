#include "iclner/llmgate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "iclner/error.hpp"
#include "iclner/promptkit.hpp"
#include "iclner/text.hpp"

namespace iclner {

using json = nlohmann::json;

json to_wire_json(const CompletionRequest& r, std::string_view model) {
  return json{{"model", std::string(model)},
              {"prompt", r.prompt},
              {"max_tokens", r.max_tokens},
              {"temperature", r.temperature},
              {"top_p", r.top_p},
              {"frequency_penalty", r.frequency_penalty},
              {"presence_penalty", r.presence_penalty},
              {"best_of", r.best_of}};
}

CompletionRequest request_from_wire_json(const json& body) {
  CompletionRequest r;
  try {
    r.prompt = body.at("prompt").get<std::string>();
    r.max_tokens = body.at("max_tokens").get<int>();
    r.temperature = body.at("temperature").get<double>();
    r.top_p = body.at("top_p").get<double>();
    r.frequency_penalty = body.at("frequency_penalty").get<double>();
    r.presence_penalty = body.at("presence_penalty").get<double>();
    r.best_of = body.at("best_of").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("bad completion request body: ") + e.what());
  }
  return r;
}

namespace {

void check_request(const CompletionRequest& r) {
  if (r.prompt.empty()) throw Error(ErrorKind::invalid_argument, "empty prompt");
  if (r.temperature < 0) throw Error(ErrorKind::invalid_argument, "temperature must be >= 0");
}

// Transient failures are retried; everything else surfaces immediately.
struct AttemptError {
  ErrorKind kind;
  std::string message;
  bool retriable;
  std::optional<std::chrono::milliseconds> retry_after;
};

}  // namespace

HttpBackendConfig http_config_from_env(HttpBackendConfig base) {
  if (const char* url = std::getenv("ICLNER_API_BASE"); url && *url) base.base_url = url;
  if (const char* key = std::getenv("ICLNER_API_KEY"); key && *key) base.api_key = key;
  return base;
}

HttpBackend::HttpBackend(HttpBackendConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleep_(std::move(sleeper)) {
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  std::string url = config_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::invalid_config, "API base URL needs a scheme: '" + config_.base_url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  host_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
}

std::string HttpBackend::id() const { return "http:" + config_.model; }

json HttpBackend::cache_namespace() const {
  return json{{"base_url", config_.base_url},
              {"model", config_.model},
              {"api", config_.api == ApiFlavor::chat ? "chat" : "completions"}};
}

std::string HttpBackend::attempt(const json& body) {
  httplib::Client client(host_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const std::string path = path_prefix_ + (config_.api == ApiFlavor::chat ? "/chat/completions" : "/completions");
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                           err == httplib::Error::Write;
    throw AttemptError{timed_out ? ErrorKind::timeout : ErrorKind::transport, httplib::to_string(err), true, {}};
  }

  const int status = res->status;
  if (status == 200) {
    json parsed;
    try {
      parsed = json::parse(res->body);
      const auto& choice = parsed.at("choices").at(0);
      if (config_.api == ApiFlavor::chat) return choice.at("message").at("content").get<std::string>();
      return choice.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw AttemptError{ErrorKind::transport, std::string("unexpected response body: ") + e.what(), false, {}};
    }
  }

  std::string message = res->body;
  std::string code;
  try {
    const auto err = json::parse(res->body).at("error");
    if (err.contains("message") && err["message"].is_string()) message = err["message"].get<std::string>();
    if (err.contains("code") && err["code"].is_string()) code = err["code"].get<std::string>();
  } catch (const json::exception&) {
  }
  const std::string what = "HTTP " + std::to_string(status) + ": " + message;
  if (status == 401 || status == 403) throw AttemptError{ErrorKind::auth_failure, what, false, {}};
  if (status == 429) {
    std::optional<std::chrono::milliseconds> after;
    if (res->has_header("Retry-After")) {
      try {
        after = std::chrono::milliseconds(static_cast<long long>(std::stod(res->get_header_value("Retry-After")) * 1000));
      } catch (const std::exception&) {
      }
    }
    throw AttemptError{ErrorKind::rate_limited, what, true, after};
  }
  if (code == "context_length_exceeded" || message.find("maximum context length") != std::string::npos) {
    throw AttemptError{ErrorKind::context_overflow, what, false, {}};
  }
  if (status >= 500) throw AttemptError{ErrorKind::transport, what, true, {}};
  throw AttemptError{ErrorKind::transport, what, false, {}};
}

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
  check_request(request);
  json body;
  if (config_.api == ApiFlavor::chat) {
    body = to_wire_json(request, config_.model);
    body.erase("prompt");
    body.erase("best_of");
    body["messages"] = json::array({json{{"role", "user"}, {"content", request.prompt}}});
  } else {
    body = to_wire_json(request, config_.model);
  }

  const auto started = std::chrono::steady_clock::now();
  auto delay = config_.retry.initial_delay;
  const int attempts = std::max(1, config_.retry.max_attempts);
  for (int i = 1;; ++i) {
    try {
      CompletionResponse out;
      out.text = attempt(body);
      out.backend_id = id();
      out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started)
                           .count();
      return out;
    } catch (const AttemptError& e) {
      if (!e.retriable || i >= attempts) throw Error(e.kind, e.message + " (attempt " + std::to_string(i) + ")");
      const auto wait = std::min(config_.retry.max_delay, e.retry_after.value_or(delay));
      spdlog::warn("{} on attempt {}/{}; retrying in {} ms", to_string(e.kind), i, attempts, wait.count());
      sleep_(wait);
      delay = std::min(config_.retry.max_delay,
                       std::chrono::milliseconds(static_cast<long long>(delay.count() * config_.retry.backoff_factor)));
    }
  }
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key_for(const CompletionRequest& request, const json& backend_namespace) {
  // nlohmann::json objects iterate in key order, so dump() is canonical.
  const json canonical{{"backend", backend_namespace}, {"request", to_wire_json(request, "")}};
  return sha256_hex(canonical.dump());
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    return json::parse(read_file(path)).at("text").get<std::string>();
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const CompletionRequest& request, std::string_view text) const {
  const json entry{{"request", to_wire_json(request, "")}, {"text", std::string(text)}};
  write_file_atomic(path_for(key), entry.dump(2));
}

CachingBackend::CachingBackend(BackendPtr inner, std::shared_ptr<ResponseCache> cache, json backend_namespace)
    : inner_(std::move(inner)), cache_(std::move(cache)), namespace_(std::move(backend_namespace)) {}

CompletionResponse CachingBackend::complete(const CompletionRequest& request) {
  const auto key = ResponseCache::key_for(request, namespace_);
  if (auto hit = cache_->get(key)) {
    ++hits_;
    return CompletionResponse{std::move(*hit), inner_->id(), true, 0};
  }
  ++misses_;
  auto response = inner_->complete(request);
  cache_->put(key, request, response.text);
  return response;
}

Throttle::Throttle(std::size_t max_in_flight, double requests_per_minute)
    : max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {
  if (requests_per_minute > 0) {
    min_spacing_ = std::chrono::nanoseconds(static_cast<long long>(60e9 / requests_per_minute));
  }
}

void Throttle::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
  ++in_flight_;
  if (min_spacing_.count() > 0) {
    const auto now = std::chrono::steady_clock::now();
    const auto start = std::max(now, next_start_);
    next_start_ = start + min_spacing_;
    if (start > now) {
      lock.unlock();
      std::this_thread::sleep_until(start);
    }
  }
}

void Throttle::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

Throttle::Permit::Permit(Throttle& t) : throttle_(t) { throttle_.acquire(); }
Throttle::Permit::~Permit() { throttle_.release(); }

ThrottledBackend::ThrottledBackend(BackendPtr inner, std::shared_ptr<Throttle> throttle)
    : inner_(std::move(inner)), throttle_(std::move(throttle)) {}

CompletionResponse ThrottledBackend::complete(const CompletionRequest& request) {
  Throttle::Permit permit(*throttle_);
  return inner_->complete(request);
}

// ---------------------------------------------------------------------------

GoldIndex::GoldIndex(std::shared_ptr<const LabeledCorpus> corpus) : corpus_(std::move(corpus)) {
  for (const auto& s : corpus_->sentences) by_text_.emplace(s.text(), s.id);
}

const Sentence* GoldIndex::sentence_for(std::string_view text) const {
  auto it = by_text_.find(std::string(trim(text)));
  return it == by_text_.end() ? nullptr : corpus_->find(it->second);
}

const EntityTypeSchema* GoldIndex::type_for(std::string_view description) const {
  return corpus_->schema.find_by_description(description);
}

namespace {

[[noreturn]] void unparseable(std::string_view why) {
  throw Error(ErrorKind::unparseable_prompt, std::string(why) + " (templates " + std::string(kPromptTemplateVersion) + ")");
}

struct ExtractionTarget {
  const Sentence* sentence;
  const EntityTypeSchema* type;
};

ExtractionTarget resolve_extraction(const GoldIndex& index, const ExtractionPromptFields& fields) {
  const auto* type = index.type_for(fields.type_description);
  if (!type) unparseable("unknown entity type '" + fields.type_description + "'");
  const auto* sentence = index.sentence_for(fields.query);
  if (!sentence) unparseable("query sentence not in the gold corpus");
  return {sentence, type};
}

bool is_gold_entity(const GoldIndex& index, const VerificationPromptFields& fields) {
  const auto* type = index.type_for(fields.type_description);
  if (!type) unparseable("unknown entity type '" + fields.type_description + "'");
  const auto* sentence = index.sentence_for(fields.sentence);
  if (!sentence) unparseable("verification sentence not in the gold corpus");
  const std::string word = join(split_whitespace(fields.word), " ");
  for (const auto& span : index.corpus().spans_of(sentence->id)) {
    if (span.type == type->name && span.surface == word) return true;
  }
  return false;
}

CompletionResponse mock_response(std::string text, std::string id) {
  return CompletionResponse{std::move(text), std::move(id), false, 0};
}

}  // namespace

CompletionResponse CopyMock::complete(const CompletionRequest& request) {
  check_request(request);
  if (auto fields = parse_extraction_prompt(request.prompt)) return mock_response(fields->query, id());
  if (auto fields = parse_verification_prompt(request.prompt)) return mock_response(fields->sentence, id());
  unparseable("prompt matches neither template");
}

OracleMock::OracleMock(std::shared_ptr<const LabeledCorpus> gold, OutputFormat format)
    : index_(std::move(gold)), format_(format) {}

std::string OracleMock::gold_answer(const Sentence& sentence, const EntityTypeSchema& type,
                                    std::vector<EntitySpan> extra) const {
  auto spans = index_.corpus().spans_of(sentence.id, type.name);
  if (index_.corpus().mode == CorpusMode::nested) spans = outermost_spans(std::move(spans));
  spans.insert(spans.end(), extra.begin(), extra.end());
  return encode(format_, sentence, spans, type.name).text;
}

CompletionResponse OracleMock::complete(const CompletionRequest& request) {
  check_request(request);
  if (auto fields = parse_extraction_prompt(request.prompt)) {
    const auto target = resolve_extraction(index_, *fields);
    return mock_response(gold_answer(*target.sentence, *target.type), id());
  }
  if (auto fields = parse_verification_prompt(request.prompt)) {
    return mock_response(is_gold_entity(index_, *fields) ? "Yes" : "No", id());
  }
  unparseable("prompt matches neither template");
}

OverpredictMock::OverpredictMock(std::shared_ptr<const LabeledCorpus> gold, double rate, std::uint64_t seed,
                                 OutputFormat format)
    : OracleMock(std::move(gold), format), rate_(rate), seed_(seed) {}

CompletionResponse OverpredictMock::complete(const CompletionRequest& request) {
  check_request(request);
  if (auto fields = parse_extraction_prompt(request.prompt)) {
    const auto target = resolve_extraction(index_, *fields);
    const Sentence& s = *target.sentence;
    std::vector<bool> inside(s.size(), false);
    for (const auto& span : index_.corpus().spans_of(s.id)) {
      for (std::size_t i = span.start; i <= span.end; ++i) inside[i] = true;
    }
    // Each decision is a pure function of (seed, type, sentence, token) so call order never matters.
    const std::uint64_t base = hash_combine(seed_, target.type->name + '\x1f' + s.text());
    std::vector<EntitySpan> spurious;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (inside[i] || !starts_with_upper(s.tokens[i])) continue;
      const double u = static_cast<double>(mix64(base ^ mix64(i)) >> 11) * 0x1.0p-53;
      if (u < rate_) spurious.push_back(make_span(s, i, i, target.type->name));
    }
    return mock_response(gold_answer(s, *target.type, std::move(spurious)), id());
  }
  if (parse_verification_prompt(request.prompt)) return mock_response("Yes", id());
  unparseable("prompt matches neither template");
}

YesNoOracleMock::YesNoOracleMock(std::shared_ptr<const LabeledCorpus> gold) : index_(std::move(gold)) {}

CompletionResponse YesNoOracleMock::complete(const CompletionRequest& request) {
  check_request(request);
  auto fields = parse_verification_prompt(request.prompt);
  if (!fields) unparseable("not a verification prompt");
  return mock_response(is_gold_entity(index_, *fields) ? "Yes" : "No", id());
}

ScriptedMock::ScriptedMock(std::vector<Entry> entries) : entries_(std::move(entries)) {}

ScriptedMock ScriptedMock::from_json(const json& fixture) {
  const json& list = fixture.is_object() && fixture.contains("entries") ? fixture.at("entries") : fixture;
  if (!list.is_array()) throw Error(ErrorKind::invalid_config, "scripted fixture must be an array of entries");
  auto opt = [](const json& o, const char* k) -> std::optional<std::string> {
    if (!o.contains(k)) return std::nullopt;
    return o.at(k).get<std::string>();
  };
  std::vector<Entry> entries;
  for (const auto& e : list) {
    if (!e.is_object() || !e.contains("completion")) {
      throw Error(ErrorKind::invalid_config, "scripted entries need a \"completion\"");
    }
    entries.push_back(Entry{opt(e, "prompt"), opt(e, "query"), opt(e, "sentence"), opt(e, "word"), opt(e, "type"),
                            e.at("completion").get<std::string>()});
  }
  return ScriptedMock(std::move(entries));
}

ScriptedMock ScriptedMock::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_config, path.string() + ": " + e.what());
  }
}

CompletionResponse ScriptedMock::complete(const CompletionRequest& request) {
  check_request(request);
  for (const auto& e : entries_) {
    if (e.prompt && *e.prompt == request.prompt) return mock_response(e.completion, id());
  }
  const auto ext = parse_extraction_prompt(request.prompt);
  const auto ver = ext ? std::nullopt : parse_verification_prompt(request.prompt);
  for (const auto& e : entries_) {
    if (e.prompt) continue;
    if (ext && e.query && *e.query == ext->query && (!e.type || *e.type == ext->type_description)) {
      return mock_response(e.completion, id());
    }
    if (ver && e.sentence && *e.sentence == ver->sentence && (!e.word || *e.word == ver->word) &&
        (!e.type || *e.type == ver->type_description)) {
      return mock_response(e.completion, id());
    }
  }
  unparseable("no scripted completion for this prompt");
}

}  // namespace iclner
