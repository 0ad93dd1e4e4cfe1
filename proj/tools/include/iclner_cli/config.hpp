#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclner/pipeline.hpp"

namespace iclner::cli {

struct BackendSettings {
  std::string kind = "oracle";  // oracle, copy, overpredict, yesno-oracle, scripted, http
  std::string verify_kind;      // empty: verification prompts go to `kind`
  std::string model = "gpt-3.5-turbo-instruct";
  std::string api_base;  // empty: ICLNER_API_BASE or the public endpoint
  std::string api = "completions";
  double timeout_s = 60.0;
  int max_retries = 5;
  double requests_per_minute = 0.0;
  double overpredict_rate = 0.3;
  std::optional<std::uint64_t> overpredict_seed;  // defaults to `seed`
  std::filesystem::path scripted_fixture;
};

/// Everything a run needs, read from one flat TOML file plus `key=value` overrides.
struct CliConfig {
  RunConfig run;
  BackendSettings backend;

  std::string dataset;  // defaults to the test file stem
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path schema;  // empty: the CoNLL-2003 types
  bool strict = false;
  std::size_t test_sample = 0;  // 0: the whole test set
  std::filesystem::path train_token_emb;
  std::filesystem::path test_token_emb;
  std::filesystem::path train_sentence_emb;
  std::filesystem::path test_sentence_emb;
  std::filesystem::path query_entities;
  std::filesystem::path cache_dir;
  std::filesystem::path output;
  std::filesystem::path manifest;  // empty: `<output>.manifest.json`
  std::filesystem::path results;

  std::vector<std::string> overrides;

  std::string dataset_name() const;
  std::filesystem::path manifest_path() const;
  /// Every key with its resolved value; paths are absolute.
  nlohmann::json to_json() const;
  /// Same content as a TOML file that reproduces the run.
  std::string to_toml() const;
  /// Cross-field checks; throws InvalidConfig.
  void validate() const;
};

/// Names of every accepted key, in file order.
std::vector<std::string> config_keys();

CliConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                       const std::vector<std::string>& overrides = {});
CliConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace iclner::cli
