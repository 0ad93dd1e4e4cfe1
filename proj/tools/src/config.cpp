#include "iclner_cli/config.hpp"

#include <functional>
#include <sstream>

#include <toml.hpp>

#include "iclner/error.hpp"
#include "iclner/text.hpp"

namespace iclner::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(std::string_view key, const std::string& what) {
  throw Error(ErrorKind::invalid_config, "'" + std::string(key) + "': " + what);
}

std::string get_string(std::string_view key, const toml::node& n) {
  if (auto v = n.as_string()) return v->get();
  bad(key, "expected a string");
}

std::int64_t get_int(std::string_view key, const toml::node& n) {
  if (auto v = n.as_integer()) return v->get();
  bad(key, "expected an integer");
}

std::size_t get_count(std::string_view key, const toml::node& n) {
  const auto v = get_int(key, n);
  if (v < 0) bad(key, "must not be negative");
  return static_cast<std::size_t>(v);
}

double get_double(std::string_view key, const toml::node& n) {
  if (auto v = n.as_floating_point()) return v->get();
  if (auto v = n.as_integer()) return static_cast<double>(v->get());
  bad(key, "expected a number");
}

bool get_bool(std::string_view key, const toml::node& n) {
  if (auto v = n.as_boolean()) return v->get();
  bad(key, "expected true or false");
}

fs::path get_path(std::string_view key, const toml::node& n, const fs::path& base) {
  const auto s = get_string(key, n);
  if (s.empty()) return {};
  fs::path p(s);
  if (p.is_relative()) p = base / p;
  return p.lexically_normal();
}

std::vector<std::string> get_string_list(std::string_view key, const toml::node& n) {
  std::vector<std::string> out;
  if (auto arr = n.as_array()) {
    for (const auto& e : *arr) out.push_back(get_string(key, e));
    return out;
  }
  std::string s = get_string(key, n);
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

template <typename F>
auto wrap(std::string_view key, F&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::invalid_config) throw;
    bad(key, e.what());
  }
}

struct Field {
  std::string name;
  std::function<void(CliConfig&, const toml::node&, const fs::path&)> set;
  std::function<json(const CliConfig&)> get;
};

json path_json(const fs::path& p) { return p.empty() ? json("") : json(fs::absolute(p).lexically_normal().string()); }

Field path_field(std::string name, fs::path CliConfig::*member) {
  return Field{name,
               [member, name](CliConfig& c, const toml::node& n, const fs::path& base) {
                 c.*member = get_path(name, n, base);
               },
               [member](const CliConfig& c) { return path_json(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back({"dataset", [](CliConfig& c, const toml::node& n, const fs::path&) { c.dataset = get_string("dataset", n); },
                 [](const CliConfig& c) { return json(c.dataset_name()); }});
    f.push_back(path_field("train", &CliConfig::train));
    f.push_back(path_field("test", &CliConfig::test));
    f.push_back(path_field("schema", &CliConfig::schema));
    f.push_back({"strict", [](CliConfig& c, const toml::node& n, const fs::path&) { c.strict = get_bool("strict", n); },
                 [](const CliConfig& c) { return json(c.strict); }});
    f.push_back({"test_sample",
                 [](CliConfig& c, const toml::node& n, const fs::path&) { c.test_sample = get_count("test_sample", n); },
                 [](const CliConfig& c) { return json(c.test_sample); }});
    f.push_back(path_field("train_token_emb", &CliConfig::train_token_emb));
    f.push_back(path_field("test_token_emb", &CliConfig::test_token_emb));
    f.push_back(path_field("train_sentence_emb", &CliConfig::train_sentence_emb));
    f.push_back(path_field("test_sentence_emb", &CliConfig::test_sentence_emb));
    f.push_back(path_field("query_entities", &CliConfig::query_entities));

    f.push_back({"retrieval",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.retrieval = wrap("retrieval", [&] { return parse_retrieval(get_string("retrieval", n)); });
                 },
                 [](const CliConfig& c) { return json(to_string(c.run.retrieval)); }});
    f.push_back({"k", [](CliConfig& c, const toml::node& n, const fs::path&) { c.run.k = get_count("k", n); },
                 [](const CliConfig& c) { return json(c.run.k); }});
    f.push_back({"fanout",
                 [](CliConfig& c, const toml::node& n, const fs::path&) { c.run.fanout = get_count("fanout", n); },
                 [](const CliConfig& c) { return json(c.run.fanout); }});
    f.push_back({"format",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.format = wrap("format", [&] { return parse_output_format(get_string("format", n)); });
                 },
                 [](const CliConfig& c) { return json(to_string(c.run.format)); }});
    f.push_back({"verification",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.verification =
                       wrap("verification", [&] { return parse_verification(get_string("verification", n)); });
                 },
                 [](const CliConfig& c) { return json(to_string(c.run.verification)); }});
    f.push_back({"verification_k",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.verification_k = get_count("verification_k", n);
                 },
                 [](const CliConfig& c) { return json(c.run.verification_k); }});
    f.push_back({"seed",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.seed = static_cast<std::uint64_t>(get_count("seed", n));
                 },
                 [](const CliConfig& c) { return json(c.run.seed); }});
    f.push_back({"context_window",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.budget.context_window = get_count("context_window", n);
                 },
                 [](const CliConfig& c) { return json(c.run.budget.context_window); }});
    f.push_back({"max_tokens",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.budget.reserved_completion = get_count("max_tokens", n);
                 },
                 [](const CliConfig& c) { return json(c.run.budget.reserved_completion); }});
    f.push_back({"tokens_per_word",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.tokens_per_word = get_double("tokens_per_word", n);
                 },
                 [](const CliConfig& c) { return json(c.run.tokens_per_word); }});
    f.push_back({"overflow_tokens_per_word",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.overflow_tokens_per_word = get_double("overflow_tokens_per_word", n);
                 },
                 [](const CliConfig& c) { return json(c.run.overflow_tokens_per_word); }});
    f.push_back({"demo_order",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.demo_order = wrap("demo_order", [&] { return parse_demo_order(get_string("demo_order", n)); });
                 },
                 [](const CliConfig& c) { return json(to_string(c.run.demo_order)); }});
    f.push_back({"query_tokens",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.query_tokens =
                       wrap("query_tokens", [&] { return parse_query_tokens(get_string("query_tokens", n)); });
                 },
                 [](const CliConfig& c) { return json(to_string(c.run.query_tokens)); }});
    f.push_back({"use_annotation",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.use_annotation = get_bool("use_annotation", n);
                 },
                 [](const CliConfig& c) { return json(c.run.use_annotation); }});
    f.push_back({"type_priority",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.run.type_priority = get_string_list("type_priority", n);
                 },
                 [](const CliConfig& c) { return json(c.run.type_priority); }});
    f.push_back({"workers",
                 [](CliConfig& c, const toml::node& n, const fs::path&) { c.run.workers = get_count("workers", n); },
                 [](const CliConfig& c) { return json(c.run.workers); }});

    f.push_back({"backend",
                 [](CliConfig& c, const toml::node& n, const fs::path&) { c.backend.kind = get_string("backend", n); },
                 [](const CliConfig& c) { return json(c.backend.kind); }});
    f.push_back({"verify_backend",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.backend.verify_kind = get_string("verify_backend", n);
                 },
                 [](const CliConfig& c) { return json(c.backend.verify_kind); }});
    f.push_back({"model",
                 [](CliConfig& c, const toml::node& n, const fs::path&) { c.backend.model = get_string("model", n); },
                 [](const CliConfig& c) { return json(c.backend.model); }});
    f.push_back({"api_base",
                 [](CliConfig& c, const toml::node& n, const fs::path&) { c.backend.api_base = get_string("api_base", n); },
                 [](const CliConfig& c) { return json(c.backend.api_base); }});
    f.push_back({"api",
                 [](CliConfig& c, const toml::node& n, const fs::path&) { c.backend.api = get_string("api", n); },
                 [](const CliConfig& c) { return json(c.backend.api); }});
    f.push_back({"timeout_s",
                 [](CliConfig& c, const toml::node& n, const fs::path&) { c.backend.timeout_s = get_double("timeout_s", n); },
                 [](const CliConfig& c) { return json(c.backend.timeout_s); }});
    f.push_back({"max_retries",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.backend.max_retries = static_cast<int>(get_count("max_retries", n));
                 },
                 [](const CliConfig& c) { return json(c.backend.max_retries); }});
    f.push_back({"requests_per_minute",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.backend.requests_per_minute = get_double("requests_per_minute", n);
                 },
                 [](const CliConfig& c) { return json(c.backend.requests_per_minute); }});
    f.push_back({"overpredict_rate",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.backend.overpredict_rate = get_double("overpredict_rate", n);
                 },
                 [](const CliConfig& c) { return json(c.backend.overpredict_rate); }});
    f.push_back({"overpredict_seed",
                 [](CliConfig& c, const toml::node& n, const fs::path&) {
                   c.backend.overpredict_seed = static_cast<std::uint64_t>(get_count("overpredict_seed", n));
                 },
                 [](const CliConfig& c) { return json(c.backend.overpredict_seed.value_or(c.run.seed)); }});
    f.push_back({"scripted_fixture",
                 [](CliConfig& c, const toml::node& n, const fs::path& base) {
                   c.backend.scripted_fixture = get_path("scripted_fixture", n, base);
                 },
                 [](const CliConfig& c) { return path_json(c.backend.scripted_fixture); }});
    f.push_back(path_field("cache_dir", &CliConfig::cache_dir));
    f.push_back(path_field("output", &CliConfig::output));
    f.push_back(path_field("manifest", &CliConfig::manifest));
    f.push_back(path_field("results", &CliConfig::results));
    return f;
  }();
  return all;
}

const Field& field_for(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.name == key) return f;
  }
  throw Error(ErrorKind::invalid_config, "unknown key '" + std::string(key) + "'");
}

void apply_table(CliConfig& config, const toml::table& table, const fs::path& base) {
  for (auto&& [key, node] : table) {
    if (node.is_table()) {
      throw Error(ErrorKind::invalid_config,
                  "'" + std::string(key.str()) + "': tables are not supported, keys are flat");
    }
    field_for(key.str()).set(config, node, base);
  }
}

void apply_override(CliConfig& config, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::invalid_argument, "override must look like key=value, got '" + text + "'");
  }
  const std::string key(trim(std::string_view(text).substr(0, eq)));
  const std::string value(trim(std::string_view(text).substr(eq + 1)));
  const Field& field = field_for(key);
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + value);
  } catch (const toml::parse_error&) {
    // Bare words such as `retrieval=entity` are taken as strings.
    toml::table t;
    t.insert("v", value);
    parsed = std::move(t);
  }
  const toml::node* node = parsed.get("v");
  // Keys that expect a string still accept a bare number, e.g. `dataset=2003`.
  if (!node->is_string() && field.get(CliConfig{}).is_string()) {
    toml::table t;
    t.insert("v", value);
    parsed = std::move(t);
    node = parsed.get("v");
  }
  field.set(config, *node, fs::current_path());
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.name);
  return out;
}

std::string CliConfig::dataset_name() const {
  if (!dataset.empty()) return dataset;
  return test.empty() ? std::string("unnamed") : test.stem().string();
}

fs::path CliConfig::manifest_path() const {
  if (!manifest.empty()) return manifest;
  if (output.empty()) return {};
  return fs::path(output.string() + ".manifest.json");
}

json CliConfig::to_json() const {
  json out = json::object();
  for (const auto& f : fields()) out[f.name] = f.get(*this);
  return out;
}

std::string CliConfig::to_toml() const {
  const auto j = to_json();
  std::string out;
  // JSON scalars and string arrays are valid TOML values.
  for (const auto& f : fields()) out += f.name + " = " + j.at(f.name).dump() + "\n";
  return out;
}

void CliConfig::validate() const {
  run.validate();
  static const std::vector<std::string> kinds = {"oracle", "copy", "overpredict", "yesno-oracle", "scripted", "http"};
  auto check_kind = [&](const std::string& key, const std::string& kind) {
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
      throw Error(ErrorKind::invalid_config, "'" + key + "': unknown backend '" + kind + "'");
    }
  };
  check_kind("backend", backend.kind);
  if (!backend.verify_kind.empty()) check_kind("verify_backend", backend.verify_kind);
  auto uses = [&](const std::string& kind) { return backend.kind == kind || backend.verify_kind == kind; };
  if (uses("scripted") && backend.scripted_fixture.empty()) {
    throw Error(ErrorKind::invalid_config, "the scripted backend needs 'scripted_fixture'");
  }
  if (backend.api != "completions" && backend.api != "chat") {
    throw Error(ErrorKind::invalid_config, "'api' must be completions or chat");
  }
  if (backend.overpredict_rate < 0 || backend.overpredict_rate > 1) {
    throw Error(ErrorKind::invalid_config, "'overpredict_rate' must lie in [0, 1]");
  }
  if (!(backend.timeout_s > 0)) throw Error(ErrorKind::invalid_config, "'timeout_s' must be positive");
  if (backend.max_retries < 1) throw Error(ErrorKind::invalid_config, "'max_retries' must be at least 1");
  if (test.empty()) throw Error(ErrorKind::invalid_config, "'test' is required");
  if (run.k > 0 && train.empty()) throw Error(ErrorKind::invalid_config, "'train' is required when k > 0");
  if (run.k > 0 && run.retrieval == Retrieval::entity && (train_token_emb.empty() || test_token_emb.empty())) {
    throw Error(ErrorKind::invalid_config, "entity retrieval needs 'train_token_emb' and 'test_token_emb'");
  }
  if (run.k > 0 && run.retrieval == Retrieval::sentence && (train_sentence_emb.empty() || test_sentence_emb.empty())) {
    throw Error(ErrorKind::invalid_config, "sentence retrieval needs 'train_sentence_emb' and 'test_sentence_emb'");
  }
  if (run.verification == Verification::few_shot && (train.empty() || train_token_emb.empty() || test_token_emb.empty())) {
    throw Error(ErrorKind::invalid_config, "few-shot verification needs 'train' and both token embedding files");
  }
}

CliConfig parse_config(std::string_view toml_text, const fs::path& base_dir, const std::vector<std::string>& overrides) {
  CliConfig config;
  toml::table table;
  try {
    table = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "line " << e.source().begin.line << ": " << e.description();
    throw Error(ErrorKind::invalid_config, msg.str());
  }
  apply_table(config, table, base_dir);
  for (const auto& o : overrides) apply_override(config, o);
  config.overrides = overrides;
  return config;
}

CliConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::invalid_config, e.what());
  }
  return parse_config(text, fs::absolute(path).parent_path(), overrides);
}

}  // namespace iclner::cli
